#pragma once

// Evaluating process knowledge against embeddings.
//
// Hard semantics: condition j holds iff S(x, C_j) >= theta_j, and the label is
// the first rule (in source order) whose conjunction holds, else the fallback,
// else NO_MATCH.
//
// Soft semantics (training): condition j holds independently with
// probability s_j = logistic((S_j - theta_j) / tau), and P(label) is the
// probability that the hard decision over the sampled truths returns it. This
// is computed exactly over all 2^m truth assignments.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pkil/embedding.hpp"
#include "pkil/pk_dsl.hpp"

namespace pkil {

inline constexpr std::size_t kMaxSoftConditions = 16;
inline constexpr double kDefaultTau = 0.05;

struct ConditionEvaluation {
  std::string condition_id;
  double similarity = 0.0;
  double threshold = 0.0;
  bool satisfied = false;
  bool positive_sentiment = false;
  double sentiment_band = 0.0;

  bool operator==(const ConditionEvaluation&) const = default;
};

/// Builds an evaluation enforcing satisfied <=> similarity >= threshold and
/// positive_sentiment <=> similarity <= threshold + band.
ConditionEvaluation make_evaluation(std::string condition_id, double similarity, double threshold,
                                    double band);

struct TrainingMetadata {
  std::string optimizer;  // "grid", "newton", or "" when untrained
  double final_loss = 0.0;
  int epochs = 0;
  bool converged = false;
  double grid_step = 0.0;
  int batch_size = 0;
  std::int64_t seed = 0;
  std::size_t examples = 0;

  bool operator==(const TrainingMetadata&) const = default;
};

/// Embedder that produced the training store, when known; lets inference embed
/// new text consistently.
struct EmbedderSpec {
  std::string kind;
  std::size_t dim = 0;
  std::int64_t seed = 0;

  bool operator==(const EmbedderSpec&) const = default;
};

struct ThresholdModel {
  ProcessKnowledge pk;
  KernelConfig kernel;
  std::vector<double> thetas;  // indexed like pk.conditions()
  std::vector<double> gammas;  // indexed like pk.conditions()
  double tau = kDefaultTau;
  TrainingMetadata training;
  std::optional<EmbedderSpec> embedder;

  /// Untrained model: theta = 0, gamma = 0 for every condition.
  static ThresholdModel initial(ProcessKnowledge pk, KernelConfig kernel, double tau = kDefaultTau);

  double theta(std::string_view condition_id) const;
  double gamma(std::string_view condition_id) const;
  void set_theta(std::string_view condition_id, double value);
  void set_gamma(std::string_view condition_id, double value);

  /// Throws `Error{"invalid-model"}` when sizes, ranges or tau are off.
  void validate() const;

  bool operator==(const ThresholdModel&) const = default;
};

/// Probability per output label (pk labels, plus NO_MATCH when the pk has no
/// fallback). Sums to one.
struct LabelDistribution {
  std::vector<std::string> labels;
  std::vector<double> probs;

  double prob(std::string_view label) const;
  /// Label with the largest probability (earliest on ties).
  const std::string& argmax() const;
};

struct LabelDecision {
  std::string label;                     // NO_MATCH when nothing applies
  std::optional<std::size_t> rule_index;  // index of the rule that fired
  bool fallback = false;

  bool no_match() const noexcept { return label == kNoMatch; }
  bool operator==(const LabelDecision&) const = default;
};

/// First-match rule evaluation. `satisfied` is indexed like pk.conditions().
LabelDecision hard_label(const ProcessKnowledge& pk, const std::vector<bool>& satisfied);
/// Map form; throws `Error{"missing-condition"}` if an id is absent.
LabelDecision hard_label(const ProcessKnowledge& pk, const std::map<std::string, bool>& satisfied);

/// Precomputed outcome for every truth assignment (bit j = condition j).
class DecisionTable {
 public:
  /// Throws `Error{"too-many-conditions"}` when m > kMaxSoftConditions.
  explicit DecisionTable(const ProcessKnowledge& pk);

  std::size_t condition_count() const noexcept { return m_; }
  std::size_t assignment_count() const noexcept { return outcome_.size(); }
  /// Output labels; NO_MATCH is last when present.
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<std::size_t> label_index(std::string_view label) const;
  std::optional<std::size_t> no_match_index() const noexcept { return no_match_; }

  std::size_t outcome(std::uint32_t mask) const noexcept { return outcome_[mask]; }

  /// Exact label probabilities for independent satisfaction probabilities
  /// `s` (size m). `scratch` is resized as needed and may be reused.
  void distribution(std::span<const double> s, std::span<double> out,
                    std::vector<double>& scratch) const;
  /// Probability of a single output label.
  double probability(std::size_t label, std::span<const double> s, std::vector<double>& scratch) const;

 private:
  std::size_t m_;
  std::vector<std::string> labels_;
  std::optional<std::size_t> no_match_;
  std::vector<std::uint32_t> outcome_;
};

/// Numerically stable logistic function.
double logistic(double z) noexcept;

/// s_j = logistic((similarity_j - theta_j) / tau)
double satisfaction_probability(double similarity, double theta, double tau) noexcept;

/// Condition embeddings gathered into one contiguous block so that all
/// similarities for an input come from a single batched kernel call.
class ConditionBank {
 public:
  /// Throws `Error{"missing-embedding"}` for any condition without `cond:<id>`.
  ConditionBank(const ProcessKnowledge& pk, const EmbeddingStore& store);

  std::size_t size() const noexcept { return m_; }
  std::size_t dim() const noexcept { return dim_; }
  void similarities(const KernelConfig& kernel, std::span<const double> x, std::span<double> out) const;

 private:
  std::size_t m_;
  std::size_t dim_;
  std::vector<double> rows_;
};

std::vector<ConditionEvaluation> evaluate_conditions(const ThresholdModel& model,
                                                     std::span<const double> x_embedding,
                                                     const EmbeddingStore& store);
/// Same, from precomputed similarities indexed like pk.conditions().
std::vector<ConditionEvaluation> evaluate_similarities(const ThresholdModel& model,
                                                       std::span<const double> similarities);

LabelDistribution soft_label_distribution(const ThresholdModel& model,
                                          std::span<const double> x_embedding,
                                          const EmbeddingStore& store);
LabelDistribution soft_distribution_from_similarities(const ThresholdModel& model,
                                                      std::span<const double> similarities);

struct Prediction {
  LabelDecision decision;
  std::vector<ConditionEvaluation> evaluations;
};

Prediction predict(const ThresholdModel& model, std::span<const double> x_embedding,
                   const EmbeddingStore& store);
Prediction predict_from_evaluations(const ProcessKnowledge& pk,
                                    std::vector<ConditionEvaluation> evaluations);

/// Human-readable account of which rules fire for a truth assignment, e.g.
/// "rule 1 (if (C1 & C2) -> ideation): missing C2; rule 2 ...: fires".
std::string rule_trace(const ProcessKnowledge& pk, const std::vector<bool>& satisfied);

}  // namespace pkil
