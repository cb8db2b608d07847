#include "pkil/rule_engine.hpp"

#include <algorithm>
#include <cmath>

#include "pkil/simd/kernels.hpp"

namespace pkil {

ConditionEvaluation make_evaluation(std::string condition_id, double similarity, double threshold,
                                    double band) {
  ConditionEvaluation e;
  e.condition_id = std::move(condition_id);
  e.similarity = similarity;
  e.threshold = threshold;
  e.sentiment_band = band;
  e.satisfied = similarity >= threshold;
  e.positive_sentiment = similarity <= threshold + band;
  return e;
}

ThresholdModel ThresholdModel::initial(ProcessKnowledge pk, KernelConfig kernel, double tau) {
  ThresholdModel model;
  const std::size_t m = pk.condition_count();
  model.pk = std::move(pk);
  model.kernel = kernel;
  model.thetas.assign(m, 0.0);
  model.gammas.assign(m, 0.0);
  model.tau = tau;
  model.validate();
  return model;
}

double ThresholdModel::theta(std::string_view condition_id) const {
  const auto i = pk.condition_index(condition_id);
  if (!i) throw Error("unknown-condition", "unknown condition " + std::string(condition_id));
  return thetas.at(*i);
}

double ThresholdModel::gamma(std::string_view condition_id) const {
  const auto i = pk.condition_index(condition_id);
  if (!i) throw Error("unknown-condition", "unknown condition " + std::string(condition_id));
  return gammas.at(*i);
}

void ThresholdModel::set_theta(std::string_view condition_id, double value) {
  const auto i = pk.condition_index(condition_id);
  if (!i) throw Error("unknown-condition", "unknown condition " + std::string(condition_id));
  thetas.at(*i) = value;
}

void ThresholdModel::set_gamma(std::string_view condition_id, double value) {
  const auto i = pk.condition_index(condition_id);
  if (!i) throw Error("unknown-condition", "unknown condition " + std::string(condition_id));
  gammas.at(*i) = value;
}

void ThresholdModel::validate() const {
  const std::size_t m = pk.condition_count();
  if (thetas.size() != m || gammas.size() != m) {
    throw Error("invalid-model", "model needs one theta and one gamma per condition");
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!(thetas[j] >= -1.0 && thetas[j] <= 1.0)) {
      throw Error("invalid-model", "theta for " + pk.conditions()[j].id + " outside [-1,1]");
    }
    if (!(gammas[j] >= -1.0 && gammas[j] <= 1.0)) {
      throw Error("invalid-model", "gamma for " + pk.conditions()[j].id + " outside [-1,1]");
    }
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error("invalid-model", "tau must be positive");
  kernel.validate();
}

double LabelDistribution::prob(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return probs[i];
  }
  return 0.0;
}

const std::string& LabelDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return labels.at(best);
}

namespace {

std::vector<std::size_t> rule_indices(const ProcessKnowledge& pk, const Rule& rule) {
  std::vector<std::size_t> out;
  out.reserve(rule.conditions.size());
  for (const auto& id : rule.conditions) out.push_back(*pk.condition_index(id));
  return out;
}

}  // namespace

LabelDecision hard_label(const ProcessKnowledge& pk, const std::vector<bool>& satisfied) {
  if (satisfied.size() != pk.condition_count()) {
    throw Error("missing-condition", "truth assignment does not cover every condition");
  }
  const auto& rules = pk.rules();
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& ids = rules[r].conditions;
    const bool fires = std::all_of(ids.begin(), ids.end(), [&](const std::string& id) {
      return satisfied[*pk.condition_index(id)];
    });
    if (fires) return {rules[r].label, r, false};
  }
  if (pk.fallback_label()) return {*pk.fallback_label(), std::nullopt, true};
  return {std::string(kNoMatch), std::nullopt, false};
}

LabelDecision hard_label(const ProcessKnowledge& pk, const std::map<std::string, bool>& satisfied) {
  std::vector<bool> truths(pk.condition_count());
  for (std::size_t j = 0; j < pk.condition_count(); ++j) {
    const auto it = satisfied.find(pk.conditions()[j].id);
    if (it == satisfied.end()) {
      throw Error("missing-condition", "no truth value for condition " + pk.conditions()[j].id);
    }
    truths[j] = it->second;
  }
  return hard_label(pk, truths);
}

DecisionTable::DecisionTable(const ProcessKnowledge& pk) : m_(pk.condition_count()) {
  if (m_ > kMaxSoftConditions) {
    throw Error("too-many-conditions", "soft semantics enumerate 2^m assignments; m = " +
                                           std::to_string(m_) + " exceeds " +
                                           std::to_string(kMaxSoftConditions));
  }
  labels_ = pk.label_set();
  if (!pk.fallback_label()) {
    no_match_ = labels_.size();
    labels_.emplace_back(kNoMatch);
  }
  std::vector<std::uint32_t> rule_masks;
  std::vector<std::size_t> rule_labels;
  for (const auto& rule : pk.rules()) {
    std::uint32_t mask = 0;
    for (std::size_t j : rule_indices(pk, rule)) mask |= (1u << j);
    rule_masks.push_back(mask);
    rule_labels.push_back(*label_index(rule.label));
  }
  const std::size_t none = pk.fallback_label() ? *label_index(*pk.fallback_label()) : *no_match_;
  outcome_.assign(std::size_t{1} << m_, static_cast<std::uint32_t>(none));
  for (std::uint32_t mask = 0; mask < outcome_.size(); ++mask) {
    for (std::size_t r = 0; r < rule_masks.size(); ++r) {
      if ((mask & rule_masks[r]) == rule_masks[r]) {
        outcome_[mask] = static_cast<std::uint32_t>(rule_labels[r]);
        break;
      }
    }
  }
}

std::optional<std::size_t> DecisionTable::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

namespace {

// Fills scratch[0, 2^m) with the probability of every assignment.
const double* assignment_mass(std::span<const double> s, std::size_t m, std::vector<double>& scratch) {
  const std::size_t n = std::size_t{1} << m;
  scratch.resize(2 * n);
  double* cur = scratch.data();
  double* next = scratch.data() + n;
  cur[0] = 1.0;
  const auto& k = simd::active();
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t width = std::size_t{1} << j;
    k.split_mass(cur, width, s[j], next, next + width);
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace

void DecisionTable::distribution(std::span<const double> s, std::span<double> out,
                                 std::vector<double>& scratch) const {
  if (s.size() != m_ || out.size() != labels_.size()) {
    throw Error("dimension-mismatch", "distribution: wrong input or output size");
  }
  const double* mass = assignment_mass(s, m_, scratch);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t a = 0; a < outcome_.size(); ++a) out[outcome_[a]] += mass[a];
}

double DecisionTable::probability(std::size_t label, std::span<const double> s,
                                  std::vector<double>& scratch) const {
  const double* mass = assignment_mass(s, m_, scratch);
  double p = 0.0;
  for (std::size_t a = 0; a < outcome_.size(); ++a) {
    if (outcome_[a] == label) p += mass[a];
  }
  return p;
}

double logistic(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double satisfaction_probability(double similarity, double theta, double tau) noexcept {
  return logistic((similarity - theta) / tau);
}

ConditionBank::ConditionBank(const ProcessKnowledge& pk, const EmbeddingStore& store)
    : m_(pk.condition_count()), dim_(store.dim()) {
  rows_.reserve(m_ * dim_);
  for (const auto& c : pk.conditions()) {
    const auto vec = store.find(condition_key(c.id));
    if (!vec) {
      throw Error("missing-embedding",
                  "no embedding for condition " + c.id + " (key " + condition_key(c.id) + ")");
    }
    rows_.insert(rows_.end(), vec->begin(), vec->end());
  }
}

void ConditionBank::similarities(const KernelConfig& kernel, std::span<const double> x,
                                 std::span<double> out) const {
  if (x.size() != dim_) {
    throw Error("dimension-mismatch", "input embedding has dim " + std::to_string(x.size()) +
                                          ", conditions have " + std::to_string(dim_));
  }
  simd::active().dot_rows(rows_.data(), m_, dim_, x.data(), out.data());
  if (kernel.kind != KernelKind::cosine) {
    for (std::size_t j = 0; j < m_; ++j) out[j] = kernel_from_cosine(kernel, out[j]);
  }
}

std::vector<ConditionEvaluation> evaluate_similarities(const ThresholdModel& model,
                                                       std::span<const double> similarities) {
  const auto& conds = model.pk.conditions();
  std::vector<ConditionEvaluation> out;
  out.reserve(conds.size());
  for (std::size_t j = 0; j < conds.size(); ++j) {
    out.push_back(make_evaluation(conds[j].id, similarities[j], model.thetas[j], model.gammas[j]));
  }
  return out;
}

std::vector<ConditionEvaluation> evaluate_conditions(const ThresholdModel& model,
                                                     std::span<const double> x_embedding,
                                                     const EmbeddingStore& store) {
  ConditionBank bank(model.pk, store);
  std::vector<double> sims(bank.size());
  bank.similarities(model.kernel, x_embedding, sims);
  return evaluate_similarities(model, sims);
}

LabelDistribution soft_distribution_from_similarities(const ThresholdModel& model,
                                                      std::span<const double> similarities) {
  DecisionTable table(model.pk);
  std::vector<double> s(table.condition_count());
  for (std::size_t j = 0; j < s.size(); ++j) {
    s[j] = satisfaction_probability(similarities[j], model.thetas[j], model.tau);
  }
  LabelDistribution dist;
  dist.labels = table.labels();
  dist.probs.resize(dist.labels.size());
  std::vector<double> scratch;
  table.distribution(s, dist.probs, scratch);
  return dist;
}

LabelDistribution soft_label_distribution(const ThresholdModel& model,
                                          std::span<const double> x_embedding,
                                          const EmbeddingStore& store) {
  ConditionBank bank(model.pk, store);
  std::vector<double> sims(bank.size());
  bank.similarities(model.kernel, x_embedding, sims);
  return soft_distribution_from_similarities(model, sims);
}

Prediction predict_from_evaluations(const ProcessKnowledge& pk,
                                    std::vector<ConditionEvaluation> evaluations) {
  std::vector<bool> truths(pk.condition_count());
  for (const auto& e : evaluations) truths.at(*pk.condition_index(e.condition_id)) = e.satisfied;
  return {hard_label(pk, truths), std::move(evaluations)};
}

Prediction predict(const ThresholdModel& model, std::span<const double> x_embedding,
                   const EmbeddingStore& store) {
  return predict_from_evaluations(model.pk, evaluate_conditions(model, x_embedding, store));
}

std::string rule_trace(const ProcessKnowledge& pk, const std::vector<bool>& satisfied) {
  std::string out;
  const auto& rules = pk.rules();
  for (std::size_t r = 0; r < rules.size(); ++r) {
    if (!out.empty()) out += "; ";
    out += "rule " + std::to_string(r + 1) + " (" + format_rule(rules[r]) + "): ";
    std::string missing;
    for (const auto& id : rules[r].conditions) {
      if (!satisfied.at(*pk.condition_index(id))) missing += (missing.empty() ? "" : ",") + id;
    }
    if (missing.empty()) {
      out += "fires";
      return out;
    }
    out += "missing " + missing;
  }
  if (!out.empty()) out += "; ";
  out += pk.fallback_label() ? "else -> " + *pk.fallback_label() : "no rule matched (NO_MATCH)";
  return out;
}

}  // namespace pkil
