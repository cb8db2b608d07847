#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pkil/rule_engine.hpp"
#include "pkil/text_util.hpp"

namespace pkil {

/// Fraction of positions where `preds[i] == golds[i]`. NO_MATCH never
/// equals a gold label.
double accuracy(std::span<const std::string> preds, std::span<const std::string> golds);

struct ScoredExample {
  LabelDistribution dist;
  std::string gold;
};

/// Binary AUC of `scores` against boolean class membership: the probability
/// that a random positive outranks a random negative, ties counting one half.
/// Computed from mid-ranks in O(n log n). Returns nullopt when either class is
/// empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

/// Two labels in play: AUC of P(positive_label), where positive_label defaults
/// to the lexicographically greater label ("1" over "0"). More labels: macro
/// average of one-vs-rest AUCs over gold labels present, scoring P(label).
/// Throws `Error{"unknown-label"}` when a gold label is absent from every
/// distribution and `Error{"insufficient-data"}` for n < 2 or no defined AUC.
double auc_roc(std::span<const ScoredExample> scores,
               const std::optional<std::string>& positive_label = std::nullopt);

/// Per-label one-vs-rest AUCs (labels with both classes present).
std::map<std::string, double> one_vs_rest_auc(std::span<const ScoredExample> scores);

/// ratings[item][rater]. Requires >= 2 raters, >= 1 item and a rectangular
/// matrix. Returns 1 when every rater agrees on every item (including the
/// degenerate single-category case).
double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings);

/// Cohen's kappa for two raters over the same items.
double cohen_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b);

/// Fraction of `true` votes.
double explanation_benefit_rate(std::span<const bool> votes);
double explanation_benefit_rate(const std::vector<bool>& votes);

struct LabelBreakdown {
  std::size_t support = 0;  // gold count
  std::size_t predicted = 0;
  std::size_t correct = 0;
  std::optional<double> auc;  // one-vs-rest
};

struct EvalResult {
  std::size_t n = 0;
  double accuracy = 0.0;
  double auc_roc = 0.0;
  std::string majority_label;
  double majority_accuracy = 0.0;
  std::map<std::string, LabelBreakdown> per_label;
  std::optional<std::map<std::string, double>> condition_accuracy;
};

struct EvalExample {
  std::string id;
  std::string gold;
  std::string predicted;
  LabelDistribution dist;
  std::vector<ConditionEvaluation> evaluations;
  std::optional<std::map<std::string, bool>> condition_truths;
};

EvalResult summarize(std::span<const EvalExample> examples,
                     const std::optional<std::string>& positive_label = std::nullopt);

Json eval_result_to_json(const EvalResult& result);
/// Fixed-width text table for terminals.
std::string format_eval_table(const EvalResult& result);

}  // namespace pkil
