#pragma once

// Learning per-condition thresholds (theta) and sentiment bands (gamma).
//
// Objective: mean cross-entropy of the gold label under the soft rule
// semantics, with probabilities floored at 1e-12 before the log.
//
// Both optimizers work one coordinate at a time. Holding every other theta
// fixed, the probability of the gold label for input i is affine in s_ij:
//
//   P_i(theta_j) = B_i + s_ij * (A_i - B_i)
//
// where A_i / B_i are the gold probabilities with condition j forced true /
// false. A and B are computed once per coordinate update, after which each
// candidate theta_j costs O(n).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pkil/rule_engine.hpp"

namespace pkil {

inline constexpr double kProbabilityFloor = 1e-12;

enum class Optimizer { grid, newton };

std::string to_string(Optimizer optimizer);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::grid;
  KernelConfig kernel = KernelConfig::cosine();
  double tau = kDefaultTau;
  double grid_step = 0.001;  // must divide [-1,1] evenly
  int max_epochs = 100;
  int batch_size = 16;
  double early_stop_delta = 0.001;
  double hessian_epsilon = 1e-6;
  int max_halvings = 30;
  std::int64_t seed = 0;
  // Starting thetas (indexed like pk.conditions()). Defaults to the median
  // similarity of each condition over the training inputs.
  std::optional<std::vector<double>> initial_thetas;

  /// Throws `Error{"invalid-config"}`.
  void validate() const;
  /// Number of grid intervals, 2 / grid_step.
  std::size_t grid_intervals() const;
};

Json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const Json& doc);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Value of grid point k out of `intervals`: -1 + 2k / intervals.
double grid_value(std::size_t k, std::size_t intervals) noexcept;

struct TrainReport {
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // full-data loss after each epoch / sweep
  int epochs_run = 0;
  bool converged = false;
  // Newton: epoch whose iterate was returned (0 = the start point).
  int best_epoch = 0;
  // trajectories[j][e] = theta_j after epoch e (entry 0 is the start point)
  std::vector<std::vector<double>> trajectories;
  // Loss after every individual coordinate update (grid sweeps only).
  std::vector<double> coordinate_trace;
};

Json train_report_to_json(const TrainReport& report, const ProcessKnowledge& pk);

/// An input referenced by id (its embedding is looked up in the store) and
/// its gold label.
struct TrainingPoint {
  std::string id;
  std::string gold;
};

/// Similarities S(x_i, C_j) for every training input under one kernel, plus
/// the gold label of each input as an index into the decision table labels.
class SimilarityTable {
 public:
  SimilarityTable(const ProcessKnowledge& pk, const KernelConfig& kernel,
                  std::span<const TrainingPoint> points, const EmbeddingStore& store);
  /// From raw similarities (row-major n x m).
  SimilarityTable(const ProcessKnowledge& pk, std::vector<double> similarities,
                  std::span<const std::string> golds, std::vector<std::string> ids = {});

  std::size_t rows() const noexcept { return golds_.size(); }
  std::size_t cols() const noexcept { return m_; }
  double at(std::size_t i, std::size_t j) const noexcept { return sims_[i * m_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {sims_.data() + i * m_, m_}; }
  std::size_t gold(std::size_t i) const noexcept { return golds_[i]; }
  const std::string& id(std::size_t i) const noexcept { return ids_[i]; }
  const DecisionTable& decisions() const noexcept { return table_; }

 private:
  void check_golds(const ProcessKnowledge& pk, std::span<const std::string> golds);

  DecisionTable table_;
  std::size_t m_;
  std::vector<double> sims_;
  std::vector<std::size_t> golds_;
  std::vector<std::string> ids_;
};

/// Mean cross-entropy computed through the full soft distribution of every
/// input. `rows` restricts to a subset (all rows when empty).
double cross_entropy_loss(const SimilarityTable& table, std::span<const double> thetas, double tau,
                          std::span<const std::size_t> rows = {});
double cross_entropy_loss(const ThresholdModel& model, std::span<const TrainingPoint> data,
                          const EmbeddingStore& store);

struct CoordinateDerivatives {
  double loss = 0.0;
  double gradient = 0.0;  // d loss / d theta_j
  double hessian = 0.0;   // d^2 loss / d theta_j^2
};

/// Analytic derivatives of the mean loss over `rows` (all when empty) with
/// respect to theta_j, all other thetas fixed.
CoordinateDerivatives coordinate_derivatives(const SimilarityTable& table,
                                             std::span<const double> thetas, double tau,
                                             std::size_t j, std::span<const std::size_t> rows = {});

struct TrainResult {
  ThresholdModel model;
  TrainReport report;
};

/// Cyclic coordinate grid search. Each coordinate takes the grid value with
/// the lowest loss; among equal minima it takes the middle of the longest
/// contiguous run (lowest run on ties). Stops when a full sweep changes
/// nothing or after max_epochs sweeps.
TrainResult grid_search(const ProcessKnowledge& pk, const SimilarityTable& table, const TrainConfig& cfg);
TrainResult grid_search(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                        const EmbeddingStore& store, const TrainConfig& cfg);

/// Cyclic one-parameter projected Newton on mini-batches. Each update is
/// theta_j - t * g / d with d = h + eps (|h| + eps when h <= 0), t halved
/// until the projected candidate does not increase the batch loss. Stops
/// after max_epochs or when an epoch moves the thetas by less than
/// early_stop_delta in total, then returns the epoch-end iterate with the
/// lowest full-data loss.
TrainResult newton_fit(const ProcessKnowledge& pk, const SimilarityTable& table, const TrainConfig& cfg);
TrainResult newton_fit(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                       const EmbeddingStore& store, const TrainConfig& cfg);

/// Dispatches on cfg.optimizer.
TrainResult train(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                  const EmbeddingStore& store, const TrainConfig& cfg);

/// Clamp to [-1, 1].
double project_unit(double value) noexcept;

struct GammaFit {
  ThresholdModel model;
  std::vector<double> agreements;  // best agreement per condition
};

/// Balanced agreement between the band predicate S <= theta + gamma and an
/// external positive-sentiment oracle over the labelled inputs:
/// (positives in band / positives) - (negatives in band / negatives), a term
/// dropped when its class is empty.
double band_agreement(std::span<const double> similarities, std::span<const bool> positive,
                      double theta, double gamma);

/// Grid-scans each gamma_j over [-1,1], keeping the best agreement; ties go to
/// the smallest |gamma| (then the smaller gamma). Inputs without an oracle
/// verdict are skipped. Throws `Error{"empty-sentiment"}` when no input has
/// a verdict.
GammaFit fit_gammas(const ThresholdModel& model, std::span<const TrainingPoint> data,
                    const EmbeddingStore& store, const std::map<std::string, bool>& sentiment_labels,
                    double grid_step = 0.001);
GammaFit fit_gammas(const ThresholdModel& model, const SimilarityTable& table,
                    const std::map<std::string, bool>& sentiment_labels, double grid_step = 0.001);

}  // namespace pkil
