#include <doctest.h>

#include <random>

#include "pkil/dataset.hpp"
#include "support.hpp"

using namespace pkil;

namespace {

ProcessKnowledge cssrs() { return load_pk(testing::data_path("cssrs.pk").string()); }

ConditionTruths truths_of(std::initializer_list<const char*> on) {
  ConditionTruths t;
  for (int j = 1; j <= 6; ++j) t["C" + std::to_string(j)] = false;
  for (const char* id : on) t[id] = true;
  return t;
}

// Store where post "p" has cosine `sims[j]` with condition j. Conditions are
// basis vectors e_j; the post vector is sims plus a slack coordinate.
EmbeddingStore store_with(const std::vector<double>& sims) {
  const std::size_t m = sims.size();
  EmbeddingStore store(m + 1);
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> e(m + 1, 0.0);
    e[j] = 1.0;
    store.add(condition_key("C" + std::to_string(j + 1)), e);
  }
  std::vector<double> x(sims);
  double sq = 0.0;
  for (double s : sims) sq += s * s;
  REQUIRE(sq < 1.0);
  x.push_back(std::sqrt(1.0 - sq));
  store.add("p", x);
  return store;
}

DecisionRequest retain(const std::string& who, std::uint64_t rev) {
  return {who, ReviewAction::retain, std::nullopt, std::nullopt, rev, 1000};
}

DecisionRequest edit(const std::string& who, const std::string& label, ConditionTruths t, std::uint64_t rev) {
  return {who, ReviewAction::edit, label, std::move(t), rev, 2000};
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("proposal takes the maximum over stores") {
  const auto pk = cssrs();
  // C1 similarities across three stores: 0.42, 0.61, 0.55. Others stay low.
  const auto a = store_with({0.42, 0.1, 0.1, 0.1, 0.1, 0.1});
  const auto b = store_with({0.61, 0.2, 0.1, 0.1, 0.1, 0.1});
  const auto c = store_with({0.55, 0.3, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"a", &a}, {"b", &b}, {"c", &c}};
  const auto tasks = propose(pk, posts, stores);
  REQUIRE(tasks.size() == 1);
  const auto& prop = tasks[0].proposal;
  CHECK(prop.max_similarity.at("C1") == doctest::Approx(0.61).epsilon(1e-12));
  CHECK(prop.per_store.at("a").at("C1") == doctest::Approx(0.42).epsilon(1e-12));
  CHECK(prop.per_store.at("c").at("C1") == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(prop.truths.at("C1"));
  CHECK_FALSE(prop.truths.at("C2"));
  // Only C1 holds: indication.
  CHECK(prop.label == "indication");
  CHECK(prop.rule_index == 3u);
  CHECK_FALSE(tasks[0].mandatory_edit);
  CHECK(tasks[0].revision == 0);
}

TEST_CASE("nothing above threshold needs a mandatory edit") {
  const auto pk = cssrs();
  const auto a = store_with({0.49, 0.3, 0.2, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"only", &a}};
  const auto tasks = propose(pk, posts, stores);
  CHECK(tasks[0].proposal.label == kNoMatch);
  CHECK(tasks[0].mandatory_edit);
  for (const auto& [id, v] : tasks[0].proposal.truths) CHECK_FALSE(v);
  // Threshold is inclusive and configurable.
  CHECK(propose(pk, posts, stores, 0.49)[0].proposal.label == "indication");
}

TEST_CASE("proposal errors") {
  const auto pk = cssrs();
  const auto a = store_with({0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> missing = {{"q", "unknown text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"a", &a}};
  CHECK(error_code([&] { propose(pk, missing, stores); }) == "missing-embedding");
  CHECK(error_code([&] { propose(pk, missing, std::vector<NamedStore>{}); }) == "invalid-argument");
  const std::vector<NamedStore> dup = {{"a", &a}, {"a", &a}};
  const std::vector<LabeledPost> posts = {{"p", "t", std::nullopt, std::nullopt, nullptr}};
  CHECK(error_code([&] { propose(pk, posts, dup); }) == "invalid-argument");
}

TEST_CASE("retain copies the machine proposal") {
  const auto pk = cssrs();
  const auto a = store_with({0.7, 0.1, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"a", &a}};
  auto task = propose(pk, posts, stores)[0];
  apply_decision(pk, task, retain("r1", 0));
  REQUIRE(task.decisions.size() == 1);
  CHECK(task.decisions[0].label == "indication");
  CHECK(task.decisions[0].truths == task.proposal.truths);
  CHECK(task.decisions[0].action == ReviewAction::retain);
  CHECK(task.revision == 1);
}

TEST_CASE("edits are checked against the rules") {
  const auto pk = cssrs();
  const auto a = store_with({0.7, 0.1, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"a", &a}};
  auto task = propose(pk, posts, stores)[0];

  apply_decision(pk, task, edit("r1", "behavior", truths_of({"C1", "C2", "C3", "C4", "C5"}), 0));
  CHECK(task.decisions.back().label == "behavior");
  CHECK(task.revision == 1);

  try {
    apply_decision(pk, task, edit("r2", "attempt", truths_of({"C1"}), 1));
    FAIL("expected rejection");
  } catch (const InconsistentEdit& e) {
    CHECK(e.code() == "inconsistent-edit");
    CHECK(e.trace().find("rule 1 (if (C1 & C2 & C3 & C4 & C5 & C6) -> attempt): missing") != std::string::npos);
    CHECK(std::string(e.what()).find("indication") != std::string::npos);
  }
  CHECK(task.revision == 1);
  CHECK(task.decisions.size() == 1);
}

TEST_CASE("decision errors") {
  const auto pk = cssrs();
  const auto a = store_with({0.7, 0.1, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", std::nullopt, std::nullopt, nullptr}};
  const std::vector<NamedStore> stores = {{"a", &a}};
  auto task = propose(pk, posts, stores)[0];
  apply_decision(pk, task, retain("r1", 0));

  try {
    apply_decision(pk, task, retain("r2", 0));
    FAIL("expected stale");
  } catch (const StaleRevision& e) {
    CHECK(e.code() == "stale-revision");
    CHECK(e.current_revision() == 1);
  }
  CHECK(error_code([&] { apply_decision(pk, task, retain("r1", 1)); }) == "duplicate-decision");
  CHECK(error_code([&] { apply_decision(pk, task, retain(" ", 1)); }) == "invalid-decision");
  DecisionRequest no_label{"r3", ReviewAction::edit, std::nullopt, truths_of({}), 1, 0};
  CHECK(error_code([&] { apply_decision(pk, task, no_label); }) == "invalid-decision");
  auto bad = truths_of({"C1"});
  bad["C7"] = true;
  CHECK(error_code([&] { apply_decision(pk, task, edit("r3", "indication", bad, 1)); }) == "invalid-decision");
  ConditionTruths partial = {{"C1", true}};
  CHECK(error_code([&] { apply_decision(pk, task, edit("r3", "indication", partial, 1)); }) == "missing-condition");

  // Mandatory-edit tasks reject retain.
  const auto low = store_with({0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  const std::vector<NamedStore> low_stores = {{"a", &low}};
  auto mandatory = propose(pk, posts, low_stores)[0];
  CHECK(error_code([&] { apply_decision(pk, mandatory, retain("r1", 0)); }) == "invalid-decision");
  CHECK(mandatory.revision == 0);
  apply_decision(pk, mandatory, edit("r1", "ideation", truths_of({"C1", "C2"}), 0));
  CHECK(mandatory.revision == 1);
}

namespace {

ReviewTask bare_task(const ProcessKnowledge& pk, const std::string& id, const std::string& label,
                     const ConditionTruths& truths) {
  ReviewTask t;
  t.post = {id, "text of " + id, std::nullopt, std::nullopt, nullptr};
  t.proposal.label = label;
  t.proposal.truths = truths;
  const auto d = hard_label(pk, truths_vector(pk, truths));
  t.proposal.rule_index = d.rule_index;
  t.mandatory_edit = d.no_match();
  return t;
}

}  // namespace

TEST_CASE("finalize worked examples") {
  const auto pk = cssrs();
  // All three retain.
  auto t1 = bare_task(pk, "t1", "indication", truths_of({"C1"}));
  for (const char* r : {"a", "b", "c"}) apply_decision(pk, t1, retain(r, t1.revision));
  // Two edit to ideation, one retains indication.
  auto t2 = bare_task(pk, "t2", "indication", truths_of({"C1"}));
  apply_decision(pk, t2, edit("a", "ideation", truths_of({"C1", "C2"}), 0));
  apply_decision(pk, t2, edit("b", "ideation", truths_of({"C1", "C2"}), 1));
  apply_decision(pk, t2, retain("c", 2));

  const std::vector<ReviewTask> tasks = {t1, t2};
  const auto [posts, report] = finalize(pk, tasks);
  REQUIRE(posts.size() == 2);
  CHECK(posts[0].label == "indication");
  CHECK(posts[0].provenance == Provenance::expert_retained);
  CHECK(posts[0].reviewers == std::vector<std::string>{"a", "b", "c"});
  CHECK(posts[1].label == "ideation");
  CHECK(posts[1].provenance == Provenance::expert_edited);
  CHECK(posts[1].conditions == truths_of({"C1", "C2"}));
  CHECK(posts[1].reviewers == std::vector<std::string>{"a", "b"});
  CHECK(report.retained == 1);
  CHECK(report.edited == 1);
  CHECK(report.edited_fraction == doctest::Approx(0.5));
}

TEST_CASE("finalize statistics on a scripted three-reviewer fixture") {
  const auto pk = cssrs();
  std::vector<ReviewTask> tasks;
  // Labels per reviewer; "=" means retain the machine proposal (indication).
  const std::vector<std::array<const char*, 3>> script = {
      {"=", "=", "="},                                // indication x3
      {"=", "=", "ideation"},                         // indication wins, retained
      {"ideation", "ideation", "="},                  // ideation wins, edited
      {"behavior", "behavior", "behavior"},           // behavior x3, edited
      {"=", "ideation", "behavior"},                  // three-way tie
      {"=", "=", "="},                                // indication x3
  };
  auto truths_for = [](const std::string& label) {
    if (label == "ideation") return truths_of({"C1", "C2"});
    if (label == "behavior") return truths_of({"C1", "C2", "C3", "C4", "C5"});
    return truths_of({"C1"});
  };
  const char* reviewers[] = {"r1", "r2", "r3"};
  for (std::size_t i = 0; i < script.size(); ++i) {
    auto t = bare_task(pk, "t" + std::to_string(i), "indication", truths_of({"C1"}));
    for (std::size_t r = 0; r < 3; ++r) {
      const std::string choice = script[i][r];
      if (choice == "=") {
        apply_decision(pk, t, retain(reviewers[r], t.revision));
      } else {
        apply_decision(pk, t, edit(reviewers[r], choice, truths_for(choice), t.revision));
      }
    }
    tasks.push_back(t);
  }
  const auto [posts, report] = finalize(pk, tasks);
  CHECK(report.tasks == 6);
  CHECK(report.finalized == 5);
  CHECK(report.ties == 1);
  CHECK(report.tied_ids == std::vector<std::string>{"t4"});
  CHECK(report.edited == 2);
  CHECK(report.retained == 3);
  CHECK(std::abs(report.edited_fraction - 2.0 / 5.0) <= 1e-9);

  // Fleiss by hand over all six items, categories ind / ide / beh:
  //   counts per item: (3,0,0) (2,1,0) (1,2,0) (0,0,3) (1,1,1) (3,0,0)
  //   P_i = 1, 1/3, 1/3, 1, 0, 1 -> Pbar = (11/3)/6 = 11/18
  //   totals: ind 10, ide 4, beh 4 of 18 -> Pe = (100 + 16 + 16)/324 = 132/324
  const double pbar = 11.0 / 18.0;
  const double pe = 132.0 / 324.0;
  REQUIRE(report.kappa.has_value());
  CHECK(std::abs(*report.kappa - (pbar - pe) / (1.0 - pe)) <= 1e-9);

  const auto j = finalize_report_to_json(report);
  CHECK(j.at("kappa_statistic") == "fleiss");
  CHECK(j.at("ties") == 1);
}

TEST_CASE("full agreement gives kappa one") {
  const auto pk = cssrs();
  std::vector<ReviewTask> tasks;
  for (int i = 0; i < 4; ++i) {
    auto t = bare_task(pk, "t" + std::to_string(i), "indication", truths_of({"C1"}));
    for (const char* r : {"a", "b", "c"}) apply_decision(pk, t, retain(r, t.revision));
    tasks.push_back(t);
  }
  const auto [posts, report] = finalize(pk, tasks);
  CHECK(report.kappa == 1.0);
  CHECK(report.edited_fraction == 0.0);
}

TEST_CASE("unreviewed tasks") {
  const auto pk = cssrs();
  auto t = bare_task(pk, "t", "indication", truths_of({"C1"}));
  apply_decision(pk, t, retain("a", 0));
  const std::vector<ReviewTask> tasks = {t};
  CHECK(error_code([&] { finalize(pk, tasks); }) == "unreviewed-tasks");
  const auto [posts, report] = finalize(pk, tasks, {3, true});
  CHECK(posts.empty());
  CHECK(report.unreviewed == 1);
  CHECK_FALSE(report.kappa.has_value());
  const auto [one, r1] = finalize(pk, tasks, {1, false});
  CHECK(one.size() == 1);
  CHECK_FALSE(r1.kappa.has_value());
}

TEST_CASE("no-match truths are flagged") {
  const auto pk = cssrs();
  auto t = bare_task(pk, "t", "NO_MATCH", truths_of({}));
  CHECK(t.mandatory_edit);
  apply_decision(pk, t, edit("a", "NO_MATCH", truths_of({"C2"}), 0));
  const std::vector<ReviewTask> tasks = {t};
  const auto [posts, report] = finalize(pk, tasks, {1, false});
  REQUIRE(posts.size() == 1);
  CHECK(posts[0].flag == std::optional<std::string>("no-match"));
}

TEST_CASE("posts and datasets round-trip") {
  testing::TempDir dir;
  std::vector<LabeledPost> posts = {
      {"a", "first post", "indication", truths_of({"C1"}), nullptr},
      {"b", "second \"quoted\" post\nwith newline", std::nullopt, std::nullopt, Json{{"subreddit", "x"}}},
  };
  save_posts(posts, dir / "p.jsonl");
  CHECK(load_posts(dir / "p.jsonl") == posts);

  std::vector<AugmentedPost> aug = {
      {"a", "first", "indication", truths_of({"C1"}), Provenance::expert_retained, {"r1", "r2"}, std::nullopt},
      {"b", "second", "NO_MATCH", truths_of({}), Provenance::expert_edited, {"r1"}, "no-match"},
      {"c", "third", "ideation", std::nullopt, Provenance::machine, {}, std::nullopt},
  };
  export_dataset(aug, dir / "d.jsonl");
  CHECK(import_dataset(dir / "d.jsonl") == aug);
}

TEST_CASE("post files report line numbers") {
  testing::TempDir dir;
  write_file(dir / "dup.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"a\",\"text\":\"y\"}\n");
  try {
    load_posts(dir / "dup.jsonl");
    FAIL("expected duplicate");
  } catch (const Error& e) {
    CHECK(e.code() == "duplicate-id");
    CHECK(std::string(e.what()).find("dup.jsonl:3") != std::string::npos);
  }
  write_file(dir / "bad.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n");
  try {
    load_posts(dir / "bad.jsonl");
    FAIL("expected malformed");
  } catch (const Error& e) {
    CHECK(e.code() == "malformed-record");
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  write_file(dir / "empty.jsonl", "{\"id\":\"a\",\"text\":\"  \"}\n");
  CHECK(error_code([&] { load_posts(dir / "empty.jsonl"); }) == "malformed-record");
  write_file(dir / "cond.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"conditions\":{\"C1\":1}}\n");
  CHECK(error_code([&] { load_posts(dir / "cond.jsonl"); }) == "malformed-record");
  write_file(dir / "d.jsonl", "{\"id\":\"a\",\"text\":\"x\",\"label\":\"l\",\"provenance\":\"robot\"}\n");
  CHECK(error_code([&] { import_dataset(dir / "d.jsonl"); }) == "malformed-record");
}

TEST_CASE("tasks round-trip through JSON") {
  const auto pk = cssrs();
  const auto a = store_with({0.7, 0.6, 0.1, 0.1, 0.1, 0.1});
  const std::vector<LabeledPost> posts = {{"p", "text", "ideation", truths_of({"C1", "C2"}), Json{{"k", 1}}}};
  const std::vector<NamedStore> stores = {{"a", &a}};
  auto task = propose(pk, posts, stores)[0];
  apply_decision(pk, task, retain("r1", 0));
  apply_decision(pk, task, edit("r2", "indication", truths_of({"C1"}), 1));
  CHECK(task_from_json(task_to_json(task)) == task);
  CHECK(task_from_json(Json::parse(task_to_json(task).dump())) == task);
}
