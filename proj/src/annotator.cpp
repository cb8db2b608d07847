#include "pkil/annotator.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pkil {
namespace {

constexpr std::array<std::string_view, 16> kAbbreviations = {
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "approx", "dept", "mt", "fig"};

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool ends_with_abbreviation(std::string_view text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && (std::isalpha(static_cast<unsigned char>(text[begin - 1])) != 0 || text[begin - 1] == '.')) {
    --begin;
  }
  if (begin == dot) return false;
  const std::string word = to_lower(text.substr(begin, dot - begin));
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  if (trim(text).empty()) throw Error("empty-text", "cannot split empty text");
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminator(text[i])) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    while (i < text.size() && is_terminator(text[i])) ++i;
    while (i < text.size() && is_closer(text[i])) ++i;
    const bool boundary = i == text.size() || is_space(text[i]);
    const bool single_dot = i - first == 1 && text[first] == '.';
    if (boundary && !(single_dot && ends_with_abbreviation(text, first))) {
      std::string sentence = trim(text.substr(start, i - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = i;
    }
  }
  std::string tail = trim(text.substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::vector<Fragment> fragment(const Post& post) {
  const auto sentences = split_sentences(post.text);
  std::vector<Fragment> out;
  for (std::size_t first = 0; first < sentences.size(); first += kFragmentSentences) {
    const std::size_t last = std::min(first + kFragmentSentences, sentences.size()) - 1;
    Fragment f;
    f.post_id = post.id;
    f.index = out.size();
    f.first_sentence = first;
    f.last_sentence = last;
    for (std::size_t s = first; s <= last; ++s) {
      if (s > first) f.text += ' ';
      f.text += sentences[s];
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<double> HashEmbedder::embed(std::string_view /*key*/, std::string_view text) const {
  return hash_embed(text, dim_, seed_);
}

std::vector<double> StoreSource::embed(std::string_view key, std::string_view text) const {
  if (auto found = store_.find(key)) return {found->begin(), found->end()};
  if (fallback_ != nullptr) return fallback_->embed(key, text);
  throw Error("missing-embedding", "no embedding for '" + std::string(key) + "'");
}

AnnotationReport annotate(const ThresholdModel& model, const Post& post, const EmbeddingSource& source,
                          const AnnotateOptions& options) {
  const auto& pk = model.pk;
  const std::size_t m = pk.condition_count();

  std::vector<std::vector<double>> conditions;
  conditions.reserve(m);
  for (const auto& c : pk.conditions()) conditions.push_back(source.embed(condition_key(c.id), c.text));

  auto similarities_for = [&](const std::vector<double>& x) {
    std::vector<double> sims(m);
    for (std::size_t j = 0; j < m; ++j) sims[j] = similarity(model.kernel, x, conditions[j]);
    return sims;
  };

  std::vector<double> post_vec;
  try {
    post_vec = source.embed(post.id, post.text);
  } catch (const Error& e) {
    if (e.code() != "missing-embedding") throw;
    post_vec = source.embed(content_key(post.text), post.text);
  }

  AnnotationReport report;
  report.post_id = post.id;
  std::vector<double> best_fragment_sims(m, -std::numeric_limits<double>::infinity());
  for (auto& frag : fragment(post)) {
    FragmentAnnotation fa;
    std::vector<double> sims;
    try {
      sims = similarities_for(source.embed(content_key(frag.text), frag.text));
    } catch (const Error& e) {
      // Punctuation-only fragments have no tokens to embed; they carry no tags.
      if (e.code() != "zero-vector") throw;
      fa.fragment = std::move(frag);
      report.fragments.push_back(std::move(fa));
      continue;
    }
    for (std::size_t j = 0; j < m; ++j) {
      const auto e = make_evaluation(pk.conditions()[j].id, sims[j], model.thetas[j], model.gammas[j]);
      if (e.satisfied) fa.satisfied.push_back({e.condition_id, e.similarity});
      if (e.positive_sentiment) fa.positive_sentiment.push_back({e.condition_id, e.similarity});
      best_fragment_sims[j] = std::max(best_fragment_sims[j], sims[j]);
    }
    fa.fragment = std::move(frag);
    report.fragments.push_back(std::move(fa));
  }

  const auto post_sims = options.label_from_fragments ? best_fragment_sims : similarities_for(post_vec);
  auto prediction = predict_from_evaluations(pk, evaluate_similarities(model, post_sims));
  report.final_label = prediction.decision.label;
  report.fired_rule_index = prediction.decision.rule_index;
  if (prediction.decision.rule_index) report.fired_rule = pk.rules()[*prediction.decision.rule_index];
  report.fallback = prediction.decision.fallback;
  report.post_level_evaluations = std::move(prediction.evaluations);
  return report;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "human") return ReportFormat::human;
  if (name == "structured") return ReportFormat::structured;
  throw Error("invalid-format", "unknown report format '" + std::string(name) + "' (human|structured)");
}

// ---------------------------------------------------------------------------
// Structured records

namespace {

Json tags_to_json(const std::vector<TaggedCondition>& tags) {
  Json out = Json::array();
  for (const auto& t : tags) out.push_back({{"id", t.condition_id}, {"similarity", t.similarity}});
  return out;
}

std::vector<TaggedCondition> tags_from_json(const Json& j) {
  std::vector<TaggedCondition> out;
  for (const auto& t : j) out.push_back({t.at("id").get<std::string>(), t.at("similarity").get<double>()});
  return out;
}

Json evaluation_to_json(const ConditionEvaluation& e) {
  return {{"id", e.condition_id},       {"similarity", e.similarity},
          {"threshold", e.threshold},   {"satisfied", e.satisfied},
          {"positive_sentiment", e.positive_sentiment}, {"sentiment_band", e.sentiment_band}};
}

ConditionEvaluation evaluation_from_json(const Json& j) {
  ConditionEvaluation e;
  e.condition_id = j.at("id").get<std::string>();
  e.similarity = j.at("similarity").get<double>();
  e.threshold = j.at("threshold").get<double>();
  e.satisfied = j.at("satisfied").get<bool>();
  e.positive_sentiment = j.at("positive_sentiment").get<bool>();
  e.sentiment_band = j.at("sentiment_band").get<double>();
  return e;
}

Json header_to_json(const AnnotationReport& report) {
  Json header{{"type", "report"}, {"post_id", report.post_id}, {"final_label", report.final_label},
              {"fallback", report.fallback}};
  if (report.fired_rule) {
    header["fired_rule"] = {{"index", *report.fired_rule_index},
                            {"conditions", report.fired_rule->conditions},
                            {"label", report.fired_rule->label}};
  } else {
    header["fired_rule"] = nullptr;
  }
  Json evals = Json::array();
  for (const auto& e : report.post_level_evaluations) evals.push_back(evaluation_to_json(e));
  header["post_level"] = evals;
  header["fragments"] = report.fragments.size();
  return header;
}

Json fragment_to_json(const FragmentAnnotation& fa) {
  return {{"type", "fragment"},
          {"post_id", fa.fragment.post_id},
          {"index", fa.fragment.index},
          {"sentence_span", {fa.fragment.first_sentence, fa.fragment.last_sentence}},
          {"text", fa.fragment.text},
          {"satisfied", tags_to_json(fa.satisfied)},
          {"positive_sentiment", tags_to_json(fa.positive_sentiment)}};
}

}  // namespace

Json report_to_json(const AnnotationReport& report) {
  Json doc = header_to_json(report);
  doc.erase("type");
  Json frags = Json::array();
  for (const auto& fa : report.fragments) {
    Json f = fragment_to_json(fa);
    f.erase("type");
    frags.push_back(f);
  }
  doc["fragments"] = frags;
  return doc;
}

AnnotationReport parse_structured_report(std::string_view text) {
  AnnotationReport report;
  bool have_header = false;
  std::size_t expected = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const Json rec = Json::parse(line);
      const auto type = rec.at("type").get<std::string>();
      if (type == "report") {
        if (have_header) throw Error("malformed-record", "line " + std::to_string(line_no) + ": second header");
        have_header = true;
        report.post_id = rec.at("post_id").get<std::string>();
        report.final_label = rec.at("final_label").get<std::string>();
        report.fallback = rec.at("fallback").get<bool>();
        if (!rec.at("fired_rule").is_null()) {
          const auto& fr = rec.at("fired_rule");
          report.fired_rule_index = fr.at("index").get<std::size_t>();
          report.fired_rule = Rule{fr.at("conditions").get<std::vector<std::string>>(),
                                   fr.at("label").get<std::string>()};
        }
        for (const auto& e : rec.at("post_level")) report.post_level_evaluations.push_back(evaluation_from_json(e));
        expected = rec.at("fragments").get<std::size_t>();
      } else if (type == "fragment") {
        if (!have_header) throw Error("malformed-record", "line " + std::to_string(line_no) + ": fragment before header");
        FragmentAnnotation fa;
        fa.fragment.post_id = rec.at("post_id").get<std::string>();
        fa.fragment.index = rec.at("index").get<std::size_t>();
        fa.fragment.first_sentence = rec.at("sentence_span").at(0).get<std::size_t>();
        fa.fragment.last_sentence = rec.at("sentence_span").at(1).get<std::size_t>();
        fa.fragment.text = rec.at("text").get<std::string>();
        fa.satisfied = tags_from_json(rec.at("satisfied"));
        fa.positive_sentiment = tags_from_json(rec.at("positive_sentiment"));
        report.fragments.push_back(std::move(fa));
      } else {
        throw Error("malformed-record", "line " + std::to_string(line_no) + ": unknown record type " + type);
      }
    }
  } catch (const Json::exception& e) {
    throw Error("malformed-record", "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_header) throw Error("malformed-record", "structured report has no header record");
  if (report.fragments.size() != expected) {
    throw Error("malformed-record", "structured report declares " + std::to_string(expected) +
                                        " fragments, found " + std::to_string(report.fragments.size()));
  }
  return report;
}

std::string render_report(const AnnotationReport& report, const ProcessKnowledge& pk, ReportFormat format) {
  if (format == ReportFormat::structured) {
    std::string out = header_to_json(report).dump() + "\n";
    for (const auto& fa : report.fragments) out += fragment_to_json(fa).dump() + "\n";
    return out;
  }

  auto text_of = [&](const std::string& id) -> std::string {
    const auto idx = pk.condition_index(id);
    return idx ? pk.conditions()[*idx].text : id;
  };
  char num[64];
  std::ostringstream out;
  out << "Post " << report.post_id << "\n";
  out << "Assessment: " << report.final_label << "\n";
  if (report.fired_rule) {
    out << "Because all of these apply (rule " << (*report.fired_rule_index + 1) << ", "
        << format_rule(*report.fired_rule) << "):\n";
    for (const auto& id : report.fired_rule->conditions) out << "  - " << text_of(id) << "\n";
  } else if (report.fallback) {
    out << "No condition-specific rule matched; default assessment applies.\n";
  } else {
    out << "no process-knowledge rule matched\n";
  }

  out << "\nCondition checks on the whole post:\n";
  for (const auto& e : report.post_level_evaluations) {
    std::snprintf(num, sizeof num, "similarity %.3f, threshold %.3f", e.similarity, e.threshold);
    out << "  [" << (e.satisfied ? 'x' : ' ') << "] " << text_of(e.condition_id) << " (" << num << ")\n";
  }

  out << "\nFragments:\n";
  for (const auto& fa : report.fragments) {
    out << "  #" << (fa.fragment.index + 1) << " (sentences " << (fa.fragment.first_sentence + 1) << "-"
        << (fa.fragment.last_sentence + 1) << "): \"" << fa.fragment.text << "\"\n";
    if (fa.satisfied.empty()) {
      out << "    concerns: none\n";
    } else {
      for (const auto& t : fa.satisfied) {
        std::snprintf(num, sizeof num, "%.3f", t.similarity);
        out << "    concern: " << text_of(t.condition_id) << " (" << num << ")\n";
      }
    }
    if (!fa.positive_sentiment.empty()) {
      out << "    positive sentiment relative to:";
      for (std::size_t i = 0; i < fa.positive_sentiment.size(); ++i) {
        out << (i ? ";" : "") << " " << text_of(fa.positive_sentiment[i].condition_id);
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace pkil
