#include <doctest.h>

#include <random>

#include "pkil/annotator.hpp"
#include "support.hpp"

using namespace pkil;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ThresholdModel cssrs_model(double theta, double gamma) {
  auto model = ThresholdModel::initial(load_pk(testing::data_path("cssrs.pk").string()), KernelConfig::cosine());
  for (auto& t : model.thetas) t = theta;
  for (auto& g : model.gammas) g = gamma;
  return model;
}

const char* kPost =
    "I keep thinking I wish I were dead. Some days I have suicidal thoughts. "
    "Dr. Smith says it will pass! I went to the park. The weather was nice? "
    "My sister visited. We cooked dinner.";

}  // namespace

TEST_CASE("sentence splitting") {
  const auto s = split_sentences(kPost);
  REQUIRE(s.size() == 7);
  CHECK(s[0] == "I keep thinking I wish I were dead.");
  CHECK(s[2] == "Dr. Smith says it will pass!");
  CHECK(s[4] == "The weather was nice?");
  CHECK(s[6] == "We cooked dinner.");
  CHECK(split_sentences("No terminator at all") == std::vector<std::string>{"No terminator at all"});
  CHECK(split_sentences("Wait... what?! \"Really.\" Yes (e.g. this).") ==
        std::vector<std::string>{"Wait...", "what?!", "\"Really.\"", "Yes (e.g. this)."});
  CHECK(split_sentences("Version 2.5 is out. Ok") == std::vector<std::string>{"Version 2.5 is out.", "Ok"});
  CHECK_THROWS(split_sentences("   "));
}

TEST_CASE("fragments are consecutive non-overlapping windows of three") {
  std::mt19937_64 rng(41);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 1 + rng() % 12;
    std::string text;
    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < n; ++i) {
      sentences.push_back("Sentence number " + std::to_string(i) + " here.");
      text += sentences.back() + " ";
    }
    const auto frags = fragment({"p", text});
    CHECK(frags.size() == (n + 2) / 3);
    std::size_t next = 0;
    for (std::size_t k = 0; k < frags.size(); ++k) {
      CHECK(frags[k].index == k);
      CHECK(frags[k].post_id == "p");
      CHECK(frags[k].first_sentence == next);
      CHECK(frags[k].last_sentence - frags[k].first_sentence + 1 <= kFragmentSentences);
      std::string joined;
      for (std::size_t s = frags[k].first_sentence; s <= frags[k].last_sentence; ++s) {
        joined += (s > frags[k].first_sentence ? " " : "") + sentences[s];
      }
      CHECK(frags[k].text == joined);
      next = frags[k].last_sentence + 1;
    }
    CHECK(next == n);
  }
}

TEST_CASE("fragment tags follow thresholds and bands") {
  const HashEmbedder embedder(512, 7);
  for (double theta : {0.05, 0.15, 0.3}) {
    const auto model = cssrs_model(theta, 0.05);
    const auto report = annotate(model, {"p1", kPost}, embedder);
    REQUIRE(report.fragments.size() == 3);
    for (const auto& fa : report.fragments) {
      const auto x = hash_embed(fa.fragment.text, 512, 7);
      std::vector<std::string> want_sat, want_pos;
      for (const auto& c : model.pk.conditions()) {
        const double s = dot(x, hash_embed(c.text, 512, 7));
        if (s >= theta) want_sat.push_back(c.id);
        if (s <= theta + 0.05) want_pos.push_back(c.id);
      }
      std::vector<std::string> got_sat, got_pos;
      for (const auto& t : fa.satisfied) got_sat.push_back(t.condition_id);
      for (const auto& t : fa.positive_sentiment) got_pos.push_back(t.condition_id);
      CHECK(got_sat == want_sat);
      CHECK(got_pos == want_pos);
    }
    // Post-level label from the whole-post embedding.
    const auto x = hash_embed(kPost, 512, 7);
    std::vector<bool> truth;
    for (const auto& c : model.pk.conditions()) truth.push_back(dot(x, hash_embed(c.text, 512, 7)) >= theta);
    CHECK(report.final_label == hard_label(model.pk, truth).label);
  }
}

TEST_CASE("label from fragments uses the best fragment per condition") {
  const HashEmbedder embedder(512, 7);
  const auto model = cssrs_model(0.2, 0.0);
  const auto report = annotate(model, {"p1", kPost}, embedder, {true});
  std::vector<bool> truth;
  for (const auto& c : model.pk.conditions()) {
    double best = -2.0;
    for (const auto& f : fragment({"p1", kPost})) {
      best = std::max(best, dot(hash_embed(f.text, 512, 7), hash_embed(c.text, 512, 7)));
    }
    truth.push_back(best >= 0.2);
  }
  CHECK(report.final_label == hard_label(model.pk, truth).label);
}

TEST_CASE("fired rule and no-match rendering") {
  const HashEmbedder embedder(512, 7);
  // Threshold -1: everything holds, the first rule fires.
  const auto all = annotate(cssrs_model(-1.0, 0.0), {"p1", kPost}, embedder);
  CHECK(all.final_label == "attempt");
  CHECK(all.fired_rule_index == 0u);
  const auto pk = cssrs_model(0.0, 0.0).pk;
  const auto human = render_report(all, pk, ReportFormat::human);
  CHECK(human.find("Assessment: attempt") != std::string::npos);
  CHECK(human.find("Wish to be dead") != std::string::npos);
  CHECK(human.find("Aborted Attempt or Self-Interrupted Attempt") != std::string::npos);

  // Threshold 1: nothing holds.
  const auto none = annotate(cssrs_model(1.0, 0.0), {"p1", kPost}, embedder);
  CHECK(none.no_match());
  CHECK_FALSE(none.fired_rule.has_value());
  const auto text = render_report(none, pk, ReportFormat::human);
  CHECK(text.find("no process-knowledge rule matched") != std::string::npos);
  for (const auto& fa : none.fragments) CHECK(fa.satisfied.empty());

  auto phq = ThresholdModel::initial(load_pk(testing::data_path("phq9.pk").string()), KernelConfig::cosine());
  for (auto& t : phq.thetas) t = 1.0;
  const auto fb = annotate(phq, {"p2", kPost}, embedder);
  CHECK(fb.final_label == "0");
  CHECK(fb.fallback);
  CHECK(render_report(fb, phq.pk, ReportFormat::human).find("default assessment applies") != std::string::npos);
}

TEST_CASE("structured reports round-trip") {
  const HashEmbedder embedder(256, 3);
  const auto model = cssrs_model(0.1, 0.1);
  const auto report = annotate(model, {"p9", kPost}, embedder);
  const auto text = render_report(report, model.pk, ReportFormat::structured);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n' ? 1 : 0;
  CHECK(lines == 1 + report.fragments.size());
  CHECK(parse_structured_report(text) == report);
  CHECK_THROWS(parse_structured_report(""));
  const auto first_line = text.substr(0, text.find('\n') + 1);
  CHECK_THROWS(parse_structured_report(first_line));  // declared fragments missing
  const auto j = report_to_json(report);
  CHECK(j.at("fragments").size() == report.fragments.size());
  CHECK(parse_report_format("human") == ReportFormat::human);
  CHECK_THROWS(parse_report_format("xml"));
}

TEST_CASE("store source lookups") {
  std::mt19937_64 rng(42);
  const auto model = cssrs_model(0.0, 0.0);
  EmbeddingStore store(64);
  for (const auto& c : model.pk.conditions()) store.add(condition_key(c.id), testing::random_unit(rng, 64));
  const Post post{"p1", "One. Two. Three. Four."};
  store.add("p1", testing::random_unit(rng, 64));
  // Fragment vectors are missing and there is no fallback.
  CHECK_THROWS_AS(annotate(model, post, StoreSource(store)), Error);
  for (const auto& f : fragment(post)) store.add(content_key(f.text), testing::random_unit(rng, 64));
  const auto report = annotate(model, post, StoreSource(store));
  std::vector<bool> truth;
  for (const auto& c : model.pk.conditions()) {
    truth.push_back(similarity(model.kernel, store.at("p1"), store.at(condition_key(c.id))) >= 0.0);
  }
  CHECK(report.final_label == hard_label(model.pk, truth).label);

  // Post found under its content key when the id is unknown.
  EmbeddingStore by_content(64);
  for (const auto& c : model.pk.conditions()) by_content.add(condition_key(c.id), store.at(condition_key(c.id)));
  by_content.add(content_key(post.text), store.at("p1"));
  for (const auto& f : fragment(post)) by_content.add(content_key(f.text), store.at(content_key(f.text)));
  CHECK(annotate(model, post, StoreSource(by_content)) == report);
}

TEST_CASE("punctuation-only fragments carry no tags") {
  const HashEmbedder embedder(128, 1);
  const auto model = cssrs_model(-1.0, 1.0);
  const auto report = annotate(model, {"p", "I wish I were dead. Really. Truly. ... !!! ???"}, embedder);
  REQUIRE(report.fragments.size() == 2);
  CHECK_FALSE(report.fragments[0].satisfied.empty());
  CHECK(report.fragments[1].satisfied.empty());
  CHECK(report.fragments[1].positive_sentiment.empty());
}
