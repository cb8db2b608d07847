#pragma once

// Fragment-level explanations. A post is split into sentences, grouped into
// consecutive non-overlapping windows of three, and every window is scored
// against each condition with the model's thresholds. The post-level label
// comes from the whole-post embedding; fragments only drive the tags.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pkil/embedding.hpp"
#include "pkil/rule_engine.hpp"

namespace pkil {

inline constexpr std::size_t kFragmentSentences = 3;

struct Post {
  std::string id;
  std::string text;
};

/// Splits after runs of '.', '!' or '?' (plus closing quotes/brackets) that
/// are followed by whitespace or the end of the text. A '.' ending a known
/// abbreviation ("Dr.", "e.g.") does not split. Sentences are trimmed.
/// Throws `Error{"empty-text"}` for blank input.
std::vector<std::string> split_sentences(std::string_view text);

struct Fragment {
  std::string post_id;
  std::size_t index = 0;
  std::size_t first_sentence = 0;  // inclusive
  std::size_t last_sentence = 0;   // inclusive
  std::string text;                // sentences joined by single spaces

  bool operator==(const Fragment&) const = default;
};

std::vector<Fragment> fragment(const Post& post);

/// Supplies embeddings by store key, embedding `text` when the key is unknown
/// and the source can do so.
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual std::size_t dim() const = 0;
  /// Throws `Error{"missing-embedding"}` when the vector cannot be produced.
  virtual std::vector<double> embed(std::string_view key, std::string_view text) const = 0;
};

class HashEmbedder final : public EmbeddingSource {
 public:
  HashEmbedder(std::size_t dim, std::int64_t seed) : dim_(dim), seed_(seed) {}
  std::size_t dim() const override { return dim_; }
  std::int64_t seed() const { return seed_; }
  std::vector<double> embed(std::string_view key, std::string_view text) const override;

 private:
  std::size_t dim_;
  std::int64_t seed_;
};

/// Looks keys up in a precomputed store; falls back to `fallback` (if any)
/// for keys the store lacks.
class StoreSource final : public EmbeddingSource {
 public:
  explicit StoreSource(const EmbeddingStore& store, const EmbeddingSource* fallback = nullptr)
      : store_(store), fallback_(fallback) {}
  std::size_t dim() const override { return store_.dim(); }
  std::vector<double> embed(std::string_view key, std::string_view text) const override;

 private:
  const EmbeddingStore& store_;
  const EmbeddingSource* fallback_;
};

struct TaggedCondition {
  std::string condition_id;
  double similarity = 0.0;

  bool operator==(const TaggedCondition&) const = default;
};

struct FragmentAnnotation {
  Fragment fragment;
  std::vector<TaggedCondition> satisfied;
  std::vector<TaggedCondition> positive_sentiment;

  bool operator==(const FragmentAnnotation&) const = default;
};

struct AnnotationReport {
  std::string post_id;
  std::string final_label;
  std::optional<std::size_t> fired_rule_index;
  std::optional<Rule> fired_rule;
  bool fallback = false;
  std::vector<FragmentAnnotation> fragments;
  std::vector<ConditionEvaluation> post_level_evaluations;

  bool no_match() const noexcept { return final_label == kNoMatch; }
  bool operator==(const AnnotationReport&) const = default;
};

struct AnnotateOptions {
  // Derive condition truths from the best-matching fragment instead of the
  // whole-post embedding.
  bool label_from_fragments = false;
};

/// The post embedding is looked up under the post id, then under its content
/// key; fragments under their content keys; conditions under `cond:<id>`.
AnnotationReport annotate(const ThresholdModel& model, const Post& post, const EmbeddingSource& source,
                          const AnnotateOptions& options = {});

enum class ReportFormat { human, structured };

ReportFormat parse_report_format(std::string_view name);

/// Human: plain text naming condition texts and the fired rule. Structured:
/// one JSON record per line (a "report" header then one "fragment" record per
/// fragment), lossless.
std::string render_report(const AnnotationReport& report, const ProcessKnowledge& pk, ReportFormat format);

/// Inverse of the structured rendering.
AnnotationReport parse_structured_report(std::string_view text);

Json report_to_json(const AnnotationReport& report);

}  // namespace pkil
