#include "pkil/dataset.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "pkil/metrics.hpp"
#include "pkil/simd/kernels.hpp"

namespace pkil {
namespace {

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

// Runs `fn` and rethrows JSON access errors as malformed-record with a line.
template <typename Fn>
void guarded(const std::filesystem::path& path, std::size_t line, Fn&& fn) {
  try {
    fn();
  } catch (const Json::exception& e) {
    throw Error("malformed-record", at_line(path, line) + e.what());
  } catch (const Error& e) {
    if (e.code() == "malformed-record" || e.code() == "duplicate-id") throw;
    throw Error(e.code(), at_line(path, line) + e.what());
  }
}

ConditionTruths truths_from_json(const Json& j) {
  if (!j.is_object()) throw Error("malformed-record", "\"conditions\" must be an object of booleans");
  ConditionTruths out;
  for (const auto& [id, v] : j.items()) {
    if (!v.is_boolean()) throw Error("malformed-record", "condition " + id + " is not a boolean");
    out[id] = v.get<bool>();
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  write_file(path, out);
}

std::span<const double> post_vector(const NamedStore& ns, const LabeledPost& post) {
  if (auto v = ns.store->find(post.id)) return *v;
  if (auto v = ns.store->find(content_key(post.text))) return *v;
  throw Error("missing-embedding", "post '" + post.id + "' is missing from store '" + ns.name + "'");
}

}  // namespace

Json truths_to_json(const ConditionTruths& truths) {
  Json out = Json::object();
  for (const auto& [id, v] : truths) out[id] = v;
  return out;
}

std::vector<bool> truths_vector(const ProcessKnowledge& pk, const ConditionTruths& truths) {
  std::vector<bool> out(pk.condition_count());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto& id = pk.conditions()[j].id;
    const auto it = truths.find(id);
    if (it == truths.end()) throw Error("missing-condition", "no truth value for condition " + id);
    out[j] = it->second;
  }
  return out;
}

std::vector<LabeledPost> load_posts(const std::filesystem::path& path) {
  std::vector<LabeledPost> out;
  std::set<std::string> seen;
  for_each_json_line(path, [&](std::size_t line, const Json& rec) {
    guarded(path, line, [&] {
      LabeledPost p;
      p.id = rec.at("id").get<std::string>();
      p.text = rec.at("text").get<std::string>();
      if (trim(p.text).empty()) throw Error("malformed-record", at_line(path, line) + "empty text");
      if (rec.contains("label") && !rec.at("label").is_null()) p.label = rec.at("label").get<std::string>();
      if (rec.contains("conditions")) p.conditions = truths_from_json(rec.at("conditions"));
      Json rest = Json::object();
      for (const auto& [k, v] : rec.items()) {
        if (k != "id" && k != "text" && k != "label" && k != "conditions") rest[k] = v;
      }
      if (!rest.empty()) p.source = rest;
      if (!seen.insert(p.id).second) {
        throw Error("duplicate-id", at_line(path, line) + "duplicate id '" + p.id + "'");
      }
      out.push_back(std::move(p));
    });
  });
  return out;
}

void save_posts(std::span<const LabeledPost> posts, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& p : posts) {
    Json r = p.source.is_object() ? p.source : Json::object();
    r["id"] = p.id;
    r["text"] = p.text;
    if (p.label) r["label"] = *p.label;
    if (p.conditions) r["conditions"] = truths_to_json(*p.conditions);
    records.push_back(std::move(r));
  }
  write_lines(path, records);
}

std::vector<ReviewTask> propose(const ProcessKnowledge& pk, std::span<const LabeledPost> posts,
                                std::span<const NamedStore> stores, double threshold) {
  if (stores.empty()) throw Error("invalid-argument", "propose needs at least one embedding store");
  std::set<std::string> names;
  for (const auto& ns : stores) {
    if (ns.store == nullptr) throw Error("invalid-argument", "null embedding store '" + ns.name + "'");
    if (!names.insert(ns.name).second) throw Error("invalid-argument", "duplicate store name '" + ns.name + "'");
  }
  std::vector<ReviewTask> tasks;
  tasks.reserve(posts.size());
  for (const auto& post : posts) {
    ReviewTask task;
    task.post = post;
    auto& prop = task.proposal;
    std::vector<bool> truths(pk.condition_count());
    for (std::size_t j = 0; j < pk.condition_count(); ++j) {
      const auto& id = pk.conditions()[j].id;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& ns : stores) {
        const auto cond = ns.store->find(condition_key(id));
        if (!cond) {
          throw Error("missing-embedding", "condition " + id + " is missing from store '" + ns.name + "'");
        }
        const double s = simd::dot(post_vector(ns, post), *cond);
        prop.per_store[ns.name][id] = s;
        best = std::max(best, s);
      }
      prop.max_similarity[id] = best;
      truths[j] = best >= threshold;
      prop.truths[id] = truths[j];
    }
    const auto decision = hard_label(pk, truths);
    prop.label = decision.label;
    prop.rule_index = decision.rule_index;
    prop.fallback = decision.fallback;
    task.mandatory_edit = decision.no_match();
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::string to_string(ReviewAction action) { return action == ReviewAction::retain ? "retain" : "edit"; }

ReviewAction parse_review_action(std::string_view name) {
  if (name == "retain") return ReviewAction::retain;
  if (name == "edit") return ReviewAction::edit;
  throw Error("invalid-decision", "unknown action '" + std::string(name) + "' (retain|edit)");
}

StaleRevision::StaleRevision(std::uint64_t based_on, std::uint64_t current)
    : Error("stale-revision", "decision based on revision " + std::to_string(based_on) +
                                  " but the task is at revision " + std::to_string(current)),
      current_(current) {}

InconsistentEdit::InconsistentEdit(const std::string& message, std::string trace)
    : Error("inconsistent-edit", message), trace_(std::move(trace)) {}

void apply_decision(const ProcessKnowledge& pk, ReviewTask& task, const DecisionRequest& request) {
  if (request.based_on_revision != task.revision) throw StaleRevision(request.based_on_revision, task.revision);
  if (trim(request.reviewer).empty()) throw Error("invalid-decision", "reviewer id is required");
  for (const auto& d : task.decisions) {
    if (d.reviewer == request.reviewer) {
      throw Error("duplicate-decision",
                  "reviewer '" + request.reviewer + "' already decided task '" + task.id() + "'");
    }
  }
  Decision d;
  d.reviewer = request.reviewer;
  d.action = request.action;
  d.timestamp = request.timestamp;
  if (request.action == ReviewAction::retain) {
    if (task.mandatory_edit) {
      throw Error("invalid-decision", "task '" + task.id() + "' matched no rule; it must be edited");
    }
    d.label = task.proposal.label;
    d.truths = task.proposal.truths;
  } else {
    if (!request.label || !request.truths) throw Error("invalid-decision", "an edit needs a label and condition truths");
    for (const auto& [id, v] : *request.truths) {
      if (!pk.condition_index(id)) throw Error("invalid-decision", "unknown condition '" + id + "'");
    }
    const auto truths = truths_vector(pk, *request.truths);
    const auto decision = hard_label(pk, truths);
    if (decision.label != *request.label) {
      throw InconsistentEdit("condition truths entail '" + decision.label + "', not '" + *request.label + "'",
                             rule_trace(pk, truths));
    }
    d.label = *request.label;
    d.truths = *request.truths;
  }
  task.decisions.push_back(std::move(d));
  ++task.revision;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::machine: return "machine";
    case Provenance::expert_retained: return "expert-retained";
    case Provenance::expert_edited: return "expert-edited";
  }
  return "machine";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "machine") return Provenance::machine;
  if (name == "expert-retained") return Provenance::expert_retained;
  if (name == "expert-edited") return Provenance::expert_edited;
  throw Error("malformed-record", "unknown provenance '" + std::string(name) + "'");
}

std::pair<std::vector<AugmentedPost>, FinalizeReport> finalize(const ProcessKnowledge& pk,
                                                               std::span<const ReviewTask> tasks,
                                                               const AgreementPolicy& policy) {
  if (policy.required_reviewers == 0) throw Error("invalid-argument", "required_reviewers must be positive");
  FinalizeReport report;
  report.tasks = tasks.size();
  std::vector<AugmentedPost> out;
  std::vector<std::vector<std::string>> ratings;

  for (const auto& task : tasks) {
    if (task.decisions.size() < policy.required_reviewers) {
      if (!policy.skip_unreviewed) {
        throw Error("unreviewed-tasks", "task '" + task.id() + "' has " + std::to_string(task.decisions.size()) +
                                            " of " + std::to_string(policy.required_reviewers) + " decisions");
      }
      ++report.unreviewed;
      continue;
    }
    std::vector<std::string> first;
    for (std::size_t r = 0; r < policy.required_reviewers; ++r) first.push_back(task.decisions[r].label);
    ratings.push_back(std::move(first));

    // Plurality in order of first appearance so ties are detected, not broken.
    std::vector<std::pair<std::string, std::size_t>> counts;
    for (const auto& d : task.decisions) {
      auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == d.label; });
      if (it == counts.end()) {
        counts.emplace_back(d.label, 1);
      } else {
        ++it->second;
      }
    }
    std::size_t top = 0;
    for (const auto& c : counts) top = std::max(top, c.second);
    const auto winners = std::count_if(counts.begin(), counts.end(), [&](const auto& c) { return c.second == top; });
    if (winners > 1) {
      ++report.ties;
      report.tied_ids.push_back(task.id());
      continue;
    }
    const std::string label =
        std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.second == top; })->first;

    std::vector<std::pair<ConditionTruths, std::size_t>> truth_counts;
    bool any_edit = false;
    AugmentedPost post;
    for (const auto& d : task.decisions) {
      if (d.label != label) continue;
      any_edit = any_edit || d.action == ReviewAction::edit;
      post.reviewers.push_back(d.reviewer);
      auto it = std::find_if(truth_counts.begin(), truth_counts.end(),
                             [&](const auto& c) { return c.first == d.truths; });
      if (it == truth_counts.end()) {
        truth_counts.emplace_back(d.truths, 1);
      } else {
        ++it->second;
      }
    }
    const auto best = std::max_element(truth_counts.begin(), truth_counts.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    post.id = task.id();
    post.text = task.post.text;
    post.label = label;
    post.conditions = best->first;
    post.provenance = any_edit ? Provenance::expert_edited : Provenance::expert_retained;
    if (hard_label(pk, truths_vector(pk, best->first)).no_match()) post.flag = "no-match";
    (any_edit ? report.edited : report.retained) += 1;
    out.push_back(std::move(post));
  }
  report.finalized = out.size();
  report.edited_fraction =
      report.finalized ? static_cast<double>(report.edited) / static_cast<double>(report.finalized) : 0.0;
  if (!ratings.empty() && policy.required_reviewers >= 2) report.kappa = fleiss_kappa(ratings);
  return {std::move(out), report};
}

Json finalize_report_to_json(const FinalizeReport& r) {
  return {{"tasks", r.tasks},
          {"finalized", r.finalized},
          {"retained", r.retained},
          {"edited", r.edited},
          {"ties", r.ties},
          {"unreviewed", r.unreviewed},
          {"edited_fraction", r.edited_fraction},
          {"kappa", r.kappa ? Json(*r.kappa) : Json(nullptr)},
          {"kappa_statistic", "fleiss"},
          {"tied_ids", r.tied_ids}};
}

Json augmented_post_to_json(const AugmentedPost& p) {
  Json j{{"id", p.id}, {"text", p.text}, {"label", p.label}};
  if (p.conditions) j["conditions"] = truths_to_json(*p.conditions);
  j["provenance"] = to_string(p.provenance);
  if (!p.reviewers.empty()) j["reviewers"] = p.reviewers;
  if (p.flag) j["flag"] = *p.flag;
  return j;
}

AugmentedPost augmented_post_from_json(const Json& j) {
  AugmentedPost p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  if (trim(p.text).empty()) throw Error("malformed-record", "empty text");
  p.label = j.at("label").get<std::string>();
  if (j.contains("conditions")) p.conditions = truths_from_json(j.at("conditions"));
  p.provenance = parse_provenance(j.at("provenance").get<std::string>());
  if (j.contains("reviewers")) p.reviewers = j.at("reviewers").get<std::vector<std::string>>();
  if (j.contains("flag")) p.flag = j.at("flag").get<std::string>();
  return p;
}

void export_dataset(std::span<const AugmentedPost> posts, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& p : posts) records.push_back(augmented_post_to_json(p));
  write_lines(path, records);
}

std::vector<AugmentedPost> import_dataset(const std::filesystem::path& path) {
  std::vector<AugmentedPost> out;
  std::set<std::string> seen;
  for_each_json_line(path, [&](std::size_t line, const Json& rec) {
    guarded(path, line, [&] {
      auto p = augmented_post_from_json(rec);
      if (!seen.insert(p.id).second) {
        throw Error("duplicate-id", at_line(path, line) + "duplicate id '" + p.id + "'");
      }
      out.push_back(std::move(p));
    });
  });
  return out;
}

Json decision_to_json(const Decision& d) {
  return {{"reviewer", d.reviewer},
          {"action", to_string(d.action)},
          {"label", d.label},
          {"conditions", truths_to_json(d.truths)},
          {"timestamp", d.timestamp}};
}

Decision decision_from_json(const Json& j) {
  Decision d;
  d.reviewer = j.at("reviewer").get<std::string>();
  d.action = parse_review_action(j.at("action").get<std::string>());
  d.label = j.at("label").get<std::string>();
  d.truths = truths_from_json(j.at("conditions"));
  d.timestamp = j.at("timestamp").get<std::int64_t>();
  return d;
}

Json task_to_json(const ReviewTask& task) {
  const auto& p = task.proposal;
  Json post{{"id", task.post.id}, {"text", task.post.text}};
  if (task.post.label) post["label"] = *task.post.label;
  if (task.post.conditions) post["conditions"] = truths_to_json(*task.post.conditions);
  if (!task.post.source.is_null()) post["source"] = task.post.source;
  Json proposal{{"label", p.label},
                {"rule_index", p.rule_index ? Json(*p.rule_index) : Json(nullptr)},
                {"fallback", p.fallback},
                {"conditions", truths_to_json(p.truths)},
                {"max_similarity", p.max_similarity},
                {"per_store", p.per_store}};
  Json decisions = Json::array();
  for (const auto& d : task.decisions) decisions.push_back(decision_to_json(d));
  return {{"id", task.id()},
          {"post", post},
          {"proposal", proposal},
          {"decisions", decisions},
          {"revision", task.revision},
          {"mandatory_edit", task.mandatory_edit}};
}

ReviewTask task_from_json(const Json& j) {
  ReviewTask t;
  const auto& post = j.at("post");
  t.post.id = post.at("id").get<std::string>();
  t.post.text = post.at("text").get<std::string>();
  if (post.contains("label")) t.post.label = post.at("label").get<std::string>();
  if (post.contains("conditions")) t.post.conditions = truths_from_json(post.at("conditions"));
  if (post.contains("source")) t.post.source = post.at("source");
  const auto& p = j.at("proposal");
  t.proposal.label = p.at("label").get<std::string>();
  if (!p.at("rule_index").is_null()) t.proposal.rule_index = p.at("rule_index").get<std::size_t>();
  t.proposal.fallback = p.at("fallback").get<bool>();
  t.proposal.truths = truths_from_json(p.at("conditions"));
  t.proposal.max_similarity = p.at("max_similarity").get<std::map<std::string, double>>();
  t.proposal.per_store = p.at("per_store").get<std::map<std::string, std::map<std::string, double>>>();
  for (const auto& d : j.at("decisions")) t.decisions.push_back(decision_from_json(d));
  t.revision = j.at("revision").get<std::uint64_t>();
  t.mandatory_edit = j.at("mandatory_edit").get<bool>();
  return t;
}

}  // namespace pkil
