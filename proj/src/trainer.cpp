#include "pkil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

namespace pkil {

std::string to_string(Optimizer optimizer) {
  return optimizer == Optimizer::grid ? "grid" : "newton";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "grid") return Optimizer::grid;
  if (name == "newton") return Optimizer::newton;
  throw Error("invalid-config", "unknown optimizer '" + std::string(name) + "' (grid|newton)");
}

std::size_t TrainConfig::grid_intervals() const {
  return static_cast<std::size_t>(std::llround(2.0 / grid_step));
}

void TrainConfig::validate() const {
  kernel.validate();
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("invalid-config", "tau must be positive");
  if (!(grid_step > 0.0) || grid_step > 2.0) throw Error("invalid-config", "grid_step must lie in (0, 2]");
  const double intervals = 2.0 / grid_step;
  if (std::abs(intervals - std::round(intervals)) > 1e-9 * intervals) {
    throw Error("invalid-config", "grid_step must divide [-1,1] evenly");
  }
  if (max_epochs < 1) throw Error("invalid-config", "max_epochs must be >= 1");
  if (batch_size < 1) throw Error("invalid-config", "batch_size must be >= 1");
  if (!(early_stop_delta >= 0.0)) throw Error("invalid-config", "early_stop_delta must be >= 0");
  if (!(hessian_epsilon > 0.0)) throw Error("invalid-config", "hessian_epsilon must be positive");
  if (max_halvings < 0) throw Error("invalid-config", "max_halvings must be >= 0");
  if (initial_thetas) {
    for (double t : *initial_thetas) {
      if (!(t >= -1.0 && t <= 1.0)) throw Error("invalid-config", "initial thetas must lie in [-1,1]");
    }
  }
}

Json train_config_to_json(const TrainConfig& cfg) {
  Json kernel{{"kind", to_string(cfg.kernel.kind)}};
  if (cfg.kernel.scale) kernel["scale"] = *cfg.kernel.scale;
  Json doc{{"optimizer", to_string(cfg.optimizer)},
           {"kernel", kernel},
           {"tau", cfg.tau},
           {"grid_step", cfg.grid_step},
           {"max_epochs", cfg.max_epochs},
           {"batch_size", cfg.batch_size},
           {"early_stop_delta", cfg.early_stop_delta},
           {"hessian_epsilon", cfg.hessian_epsilon},
           {"max_halvings", cfg.max_halvings},
           {"seed", cfg.seed}};
  if (cfg.initial_thetas) doc["initial_thetas"] = *cfg.initial_thetas;
  return doc;
}

TrainConfig train_config_from_json(const Json& doc) {
  TrainConfig cfg;
  try {
    if (doc.contains("optimizer")) cfg.optimizer = parse_optimizer(doc["optimizer"].get<std::string>());
    if (doc.contains("kernel")) {
      const auto& k = doc["kernel"];
      cfg.kernel.kind = parse_kernel_kind(k.at("kind").get<std::string>());
      cfg.kernel.scale.reset();
      if (k.contains("scale")) cfg.kernel.scale = k["scale"].get<double>();
    }
    cfg.tau = doc.value("tau", cfg.tau);
    cfg.grid_step = doc.value("grid_step", cfg.grid_step);
    cfg.max_epochs = doc.value("max_epochs", cfg.max_epochs);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.early_stop_delta = doc.value("early_stop_delta", cfg.early_stop_delta);
    cfg.hessian_epsilon = doc.value("hessian_epsilon", cfg.hessian_epsilon);
    cfg.max_halvings = doc.value("max_halvings", cfg.max_halvings);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("initial_thetas")) cfg.initial_thetas = doc["initial_thetas"].get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw Error("invalid-config", std::string("malformed train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  try {
    return train_config_from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw Error("invalid-config", path.string() + ": " + e.what());
  }
}

double grid_value(std::size_t k, std::size_t intervals) noexcept {
  return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(intervals);
}

double project_unit(double value) noexcept { return std::clamp(value, -1.0, 1.0); }

Json train_report_to_json(const TrainReport& report, const ProcessKnowledge& pk) {
  Json trajectories = Json::object();
  for (std::size_t j = 0; j < report.trajectories.size(); ++j) {
    trajectories[pk.conditions().at(j).id] = report.trajectories[j];
  }
  return Json{{"final_loss", report.final_loss},     {"loss_trace", report.loss_trace},
              {"epochs_run", report.epochs_run},     {"converged", report.converged}, {"best_epoch", report.best_epoch},
              {"trajectories", trajectories},        {"coordinate_trace", report.coordinate_trace}};
}

// ---------------------------------------------------------------------------
// SimilarityTable

SimilarityTable::SimilarityTable(const ProcessKnowledge& pk, const KernelConfig& kernel,
                                 std::span<const TrainingPoint> points, const EmbeddingStore& store)
    : table_(pk), m_(pk.condition_count()) {
  kernel.validate();
  ConditionBank bank(pk, store);
  sims_.resize(points.size() * m_);
  std::vector<std::string> golds;
  golds.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    bank.similarities(kernel, store.at(points[i].id), std::span<double>(sims_.data() + i * m_, m_));
    golds.push_back(points[i].gold);
    ids_.push_back(points[i].id);
  }
  check_golds(pk, golds);
}

SimilarityTable::SimilarityTable(const ProcessKnowledge& pk, std::vector<double> similarities,
                                 std::span<const std::string> golds, std::vector<std::string> ids)
    : table_(pk), m_(pk.condition_count()), sims_(std::move(similarities)), ids_(std::move(ids)) {
  if (sims_.size() != golds.size() * m_) {
    throw Error("dimension-mismatch", "similarity matrix does not match gold count x conditions");
  }
  if (ids_.empty()) {
    for (std::size_t i = 0; i < golds.size(); ++i) ids_.push_back(std::to_string(i));
  }
  if (ids_.size() != golds.size()) throw Error("dimension-mismatch", "ids do not match gold count");
  check_golds(pk, golds);
}

void SimilarityTable::check_golds(const ProcessKnowledge& pk, std::span<const std::string> golds) {
  (void)pk;
  golds_.clear();
  golds_.reserve(golds.size());
  for (const auto& g : golds) {
    const auto idx = table_.label_index(g);
    if (!idx || g == kNoMatch) {
      throw Error("unknown-label", "gold label '" + g + "' is not produced by the process knowledge");
    }
    golds_.push_back(*idx);
  }
}

// ---------------------------------------------------------------------------
// Loss and derivatives

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

// Gold-label probabilities with condition j forced true (a) and false (b),
// for each row in `rows`.
struct CoordinateSlice {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> sim;
};

CoordinateSlice slice_for(const SimilarityTable& table, std::span<const double> thetas, double tau,
                          std::size_t j, std::span<const std::size_t> rows) {
  const auto& decisions = table.decisions();
  const std::size_t m = table.cols();
  CoordinateSlice out;
  out.a.reserve(rows.size());
  out.b.reserve(rows.size());
  out.sim.reserve(rows.size());
  std::vector<double> s(m);
  std::vector<double> scratch;
  for (std::size_t i : rows) {
    for (std::size_t k = 0; k < m; ++k) {
      s[k] = satisfaction_probability(table.at(i, k), thetas[k], tau);
    }
    s[j] = 1.0;
    out.a.push_back(decisions.probability(table.gold(i), s, scratch));
    s[j] = 0.0;
    out.b.push_back(decisions.probability(table.gold(i), s, scratch));
    out.sim.push_back(table.at(i, j));
  }
  return out;
}

double slice_loss(const CoordinateSlice& slice, double theta, double tau) {
  double total = 0.0;
  for (std::size_t r = 0; r < slice.a.size(); ++r) {
    const double s = satisfaction_probability(slice.sim[r], theta, tau);
    const double p = slice.b[r] + s * (slice.a[r] - slice.b[r]);
    total -= std::log(std::max(p, kProbabilityFloor));
  }
  return total / static_cast<double>(slice.a.size());
}

CoordinateDerivatives slice_derivatives(const CoordinateSlice& slice, double theta, double tau) {
  CoordinateDerivatives d;
  const double n = static_cast<double>(slice.a.size());
  for (std::size_t r = 0; r < slice.a.size(); ++r) {
    const double s = satisfaction_probability(slice.sim[r], theta, tau);
    const double diff = slice.a[r] - slice.b[r];
    const double p = slice.b[r] + s * diff;
    if (p < kProbabilityFloor) {
      d.loss -= std::log(kProbabilityFloor);
      continue;
    }
    const double ds = -s * (1.0 - s) / tau;
    const double d2s = (1.0 - 2.0 * s) * s * (1.0 - s) / (tau * tau);
    const double dp = diff * ds;
    const double d2p = diff * d2s;
    d.loss -= std::log(p);
    d.gradient -= dp / p;
    d.hessian += -d2p / p + (dp / p) * (dp / p);
  }
  d.loss /= n;
  d.gradient /= n;
  d.hessian /= n;
  return d;
}

std::vector<double> starting_thetas(const SimilarityTable& table, const TrainConfig& cfg) {
  const std::size_t m = table.cols();
  if (cfg.initial_thetas) {
    if (cfg.initial_thetas->size() != m) {
      throw Error("invalid-config", "initial_thetas needs one value per condition");
    }
    return *cfg.initial_thetas;
  }
  std::vector<double> thetas(m, 0.0);
  std::vector<double> column(table.rows());
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < table.rows(); ++i) column[i] = table.at(i, j);
    const auto mid = column.begin() + static_cast<std::ptrdiff_t>(column.size() / 2);
    std::nth_element(column.begin(), mid, column.end());
    thetas[j] = project_unit(*mid);
  }
  return thetas;
}

ThresholdModel model_from(const ProcessKnowledge& pk, const TrainConfig& cfg, std::vector<double> thetas) {
  ThresholdModel model = ThresholdModel::initial(pk, cfg.kernel, cfg.tau);
  model.thetas = std::move(thetas);
  return model;
}

void require_data(const SimilarityTable& table) {
  if (table.rows() == 0) throw Error("empty-dataset", "training requires at least one example");
}

}  // namespace

double cross_entropy_loss(const SimilarityTable& table, std::span<const double> thetas, double tau,
                          std::span<const std::size_t> rows) {
  const auto& decisions = table.decisions();
  const std::size_t m = table.cols();
  std::vector<std::size_t> every;
  if (rows.empty()) {
    every = all_rows(table.rows());
    rows = every;
  }
  if (rows.empty()) throw Error("empty-dataset", "loss over an empty dataset");
  std::vector<double> s(m);
  std::vector<double> dist(decisions.labels().size());
  std::vector<double> scratch;
  double total = 0.0;
  for (std::size_t i : rows) {
    for (std::size_t k = 0; k < m; ++k) s[k] = satisfaction_probability(table.at(i, k), thetas[k], tau);
    decisions.distribution(s, dist, scratch);
    total -= std::log(std::max(dist[table.gold(i)], kProbabilityFloor));
  }
  return total / static_cast<double>(rows.size());
}

double cross_entropy_loss(const ThresholdModel& model, std::span<const TrainingPoint> data,
                          const EmbeddingStore& store) {
  SimilarityTable table(model.pk, model.kernel, data, store);
  return cross_entropy_loss(table, model.thetas, model.tau);
}

CoordinateDerivatives coordinate_derivatives(const SimilarityTable& table,
                                             std::span<const double> thetas, double tau,
                                             std::size_t j, std::span<const std::size_t> rows) {
  std::vector<std::size_t> every;
  if (rows.empty()) {
    every = all_rows(table.rows());
    rows = every;
  }
  const auto slice = slice_for(table, thetas, tau, j, rows);
  return slice_derivatives(slice, thetas[j], tau);
}

// ---------------------------------------------------------------------------
// Grid search

TrainResult grid_search(const ProcessKnowledge& pk, const SimilarityTable& table, const TrainConfig& cfg) {
  cfg.validate();
  require_data(table);
  const std::size_t m = table.cols();
  const std::size_t intervals = cfg.grid_intervals();
  const auto rows = all_rows(table.rows());

  // Start on the grid so that every accepted value is a grid point.
  std::vector<double> thetas = starting_thetas(table, cfg);
  for (double& t : thetas) {
    const double k = std::round((t + 1.0) * static_cast<double>(intervals) / 2.0);
    t = grid_value(static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(intervals))), intervals);
  }

  TrainReport report;
  report.trajectories.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) report.trajectories[j].push_back(thetas[j]);

  std::vector<double> losses(intervals + 1);
  for (int sweep = 1; sweep <= cfg.max_epochs; ++sweep) {
    bool changed = false;
    for (std::size_t j = 0; j < m; ++j) {
      const auto slice = slice_for(table, thetas, cfg.tau, j, rows);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k <= intervals; ++k) {
        losses[k] = slice_loss(slice, grid_value(k, intervals), cfg.tau);
        best = std::min(best, losses[k]);
      }
      // Longest run of exact minima; the first such run wins ties.
      std::size_t run_start = 0;
      std::size_t run_len = 0;
      for (std::size_t k = 0; k <= intervals;) {
        if (losses[k] != best) {
          ++k;
          continue;
        }
        std::size_t end = k;
        while (end + 1 <= intervals && losses[end + 1] == best) ++end;
        if (end - k + 1 > run_len) {
          run_start = k;
          run_len = end - k + 1;
        }
        k = end + 1;
      }
      const double chosen = grid_value(run_start + (run_len - 1) / 2, intervals);
      if (chosen != thetas[j]) changed = true;
      thetas[j] = chosen;
      report.coordinate_trace.push_back(best);
    }
    report.loss_trace.push_back(cross_entropy_loss(table, thetas, cfg.tau));
    for (std::size_t j = 0; j < m; ++j) report.trajectories[j].push_back(thetas[j]);
    report.epochs_run = sweep;
    if (!changed) {
      report.converged = true;
      break;
    }
  }
  report.final_loss = report.loss_trace.back();

  TrainResult result{model_from(pk, cfg, thetas), std::move(report)};
  result.model.training = TrainingMetadata{"grid", result.report.final_loss, result.report.epochs_run,
                                           result.report.converged, cfg.grid_step, 0, cfg.seed,
                                           table.rows()};
  return result;
}

TrainResult grid_search(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                        const EmbeddingStore& store, const TrainConfig& cfg) {
  if (data.empty()) throw Error("empty-dataset", "training requires at least one example");
  return grid_search(pk, SimilarityTable(pk, cfg.kernel, data, store), cfg);
}

// ---------------------------------------------------------------------------
// Projected Newton

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::int64_t seed, int epoch) {
  std::vector<std::size_t> order = all_rows(n);
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 0x9e3779b97f4a7c15ULL +
                      static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t k = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[k]);
  }
  return order;
}

}  // namespace

TrainResult newton_fit(const ProcessKnowledge& pk, const SimilarityTable& table, const TrainConfig& cfg) {
  cfg.validate();
  require_data(table);
  const std::size_t m = table.cols();
  const std::size_t n = table.rows();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  std::vector<double> thetas = starting_thetas(table, cfg);
  TrainReport report;
  report.trajectories.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) report.trajectories[j].push_back(thetas[j]);
  // Per-batch steps jitter around the full-data optimum, so the result is the
  // epoch-end iterate with the lowest full-data loss.
  std::vector<double> best_thetas = thetas;
  double best_loss = cross_entropy_loss(table, thetas, cfg.tau);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch);
    double moved = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::span<const std::size_t> rows(order.data() + begin, std::min(batch, n - begin));
      for (std::size_t j = 0; j < m; ++j) {
        const auto slice = slice_for(table, thetas, cfg.tau, j, rows);
        const auto d = slice_derivatives(slice, thetas[j], cfg.tau);
        if (!std::isfinite(d.gradient) || !std::isfinite(d.hessian)) {
          throw Error("non-finite-derivative",
                      "non-finite derivative for theta of " + pk.conditions()[j].id + " in epoch " +
                          std::to_string(epoch));
        }
        double curvature = d.hessian + cfg.hessian_epsilon;
        if (d.hessian <= 0.0) curvature = std::abs(d.hessian) + cfg.hessian_epsilon;
        const double step = d.gradient / curvature;
        double t = 1.0;
        for (int h = 0; h <= cfg.max_halvings; ++h, t *= 0.5) {
          const double candidate = project_unit(thetas[j] - t * step);
          if (slice_loss(slice, candidate, cfg.tau) <= d.loss) {
            moved += std::abs(candidate - thetas[j]);
            thetas[j] = candidate;
            break;
          }
        }
      }
    }
    const double loss = cross_entropy_loss(table, thetas, cfg.tau);
    report.loss_trace.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_thetas = thetas;
      report.best_epoch = epoch;
    }
    for (std::size_t j = 0; j < m; ++j) report.trajectories[j].push_back(thetas[j]);
    report.epochs_run = epoch;
    if (moved < cfg.early_stop_delta) {
      report.converged = true;
      break;
    }
  }
  report.final_loss = best_loss;

  TrainResult result{model_from(pk, cfg, best_thetas), std::move(report)};
  result.model.training = TrainingMetadata{"newton", result.report.final_loss, result.report.epochs_run,
                                           result.report.converged, 0.0, cfg.batch_size, cfg.seed,
                                           table.rows()};
  return result;
}

TrainResult newton_fit(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                       const EmbeddingStore& store, const TrainConfig& cfg) {
  if (data.empty()) throw Error("empty-dataset", "training requires at least one example");
  return newton_fit(pk, SimilarityTable(pk, cfg.kernel, data, store), cfg);
}

TrainResult train(const ProcessKnowledge& pk, std::span<const TrainingPoint> data,
                  const EmbeddingStore& store, const TrainConfig& cfg) {
  return cfg.optimizer == Optimizer::grid ? grid_search(pk, data, store, cfg)
                                          : newton_fit(pk, data, store, cfg);
}

// ---------------------------------------------------------------------------
// Sentiment bands

double band_agreement(std::span<const double> similarities, std::span<const bool> positive,
                      double theta, double gamma) {
  std::size_t n_pos = 0, n_neg = 0, pos_in = 0, neg_in = 0;
  const double edge = theta + gamma;
  for (std::size_t i = 0; i < similarities.size(); ++i) {
    const bool in_band = similarities[i] <= edge;
    if (positive[i]) {
      ++n_pos;
      pos_in += in_band ? 1 : 0;
    } else {
      ++n_neg;
      neg_in += in_band ? 1 : 0;
    }
  }
  double score = 0.0;
  if (n_pos > 0) score += static_cast<double>(pos_in) / static_cast<double>(n_pos);
  if (n_neg > 0) score -= static_cast<double>(neg_in) / static_cast<double>(n_neg);
  return score;
}

GammaFit fit_gammas(const ThresholdModel& model, const SimilarityTable& table,
                    const std::map<std::string, bool>& sentiment_labels, double grid_step) {
  if (sentiment_labels.empty()) throw Error("empty-sentiment", "no sentiment labels supplied");
  TrainConfig grid;
  grid.grid_step = grid_step;
  grid.validate();
  const std::size_t intervals = grid.grid_intervals();

  std::vector<std::size_t> rows;
  std::vector<bool> verdicts;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto it = sentiment_labels.find(table.id(i));
    if (it == sentiment_labels.end()) continue;
    rows.push_back(i);
    verdicts.push_back(it->second);
  }
  if (rows.empty()) throw Error("empty-sentiment", "no training input has a sentiment label");
  // std::vector<bool> has no contiguous storage; copy into a plain buffer.
  std::unique_ptr<bool[]> positive(new bool[verdicts.size()]);
  for (std::size_t r = 0; r < verdicts.size(); ++r) positive[r] = verdicts[r];
  const std::span<const bool> positive_span(positive.get(), verdicts.size());

  GammaFit fit{model, std::vector<double>(table.cols(), 0.0)};
  std::vector<double> sims(rows.size());
  for (std::size_t j = 0; j < table.cols(); ++j) {
    for (std::size_t r = 0; r < rows.size(); ++r) sims[r] = table.at(rows[r], j);
    double best_score = -std::numeric_limits<double>::infinity();
    double best_gamma = 0.0;
    for (std::size_t k = 0; k <= intervals; ++k) {
      const double gamma = grid_value(k, intervals);
      const double score = band_agreement(sims, positive_span, model.thetas[j], gamma);
      const bool better = score > best_score ||
                          (score == best_score && (std::abs(gamma) < std::abs(best_gamma) ||
                                                   (std::abs(gamma) == std::abs(best_gamma) &&
                                                    gamma < best_gamma)));
      if (better) {
        best_score = score;
        best_gamma = gamma;
      }
    }
    fit.model.gammas[j] = best_gamma;
    fit.agreements[j] = best_score;
  }
  return fit;
}

GammaFit fit_gammas(const ThresholdModel& model, std::span<const TrainingPoint> data,
                    const EmbeddingStore& store, const std::map<std::string, bool>& sentiment_labels,
                    double grid_step) {
  return fit_gammas(model, SimilarityTable(model.pk, model.kernel, data, store), sentiment_labels,
                    grid_step);
}

}  // namespace pkil
