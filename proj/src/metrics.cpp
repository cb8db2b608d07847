#include "pkil/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace pkil {

double accuracy(std::span<const std::string> preds, std::span<const std::string> golds) {
  if (preds.size() != golds.size()) {
    throw Error("length-mismatch", "accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                                       std::to_string(golds.size()) + " gold labels");
  }
  if (preds.empty()) throw Error("insufficient-data", "accuracy of an empty list");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i] && preds[i] != kNoMatch) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks (1-based) so ties contribute one half per pair.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        pos_rank_sum += mid;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

namespace {

std::vector<std::string> labels_in_play(std::span<const ScoredExample> scores) {
  std::set<std::string> labels;
  for (const auto& s : scores) {
    labels.insert(s.gold);
    for (const auto& l : s.dist.labels) {
      if (l != kNoMatch) labels.insert(l);
    }
  }
  return {labels.begin(), labels.end()};
}

void check_support(std::span<const ScoredExample> scores) {
  for (const auto& s : scores) {
    const bool anywhere = std::any_of(scores.begin(), scores.end(), [&](const ScoredExample& other) {
      return std::find(other.dist.labels.begin(), other.dist.labels.end(), s.gold) != other.dist.labels.end();
    });
    if (!anywhere) {
      throw Error("unknown-label", "gold label '" + s.gold + "' is absent from every distribution");
    }
  }
}

std::optional<double> label_auc(std::span<const ScoredExample> scores, const std::string& label) {
  std::vector<double> values(scores.size());
  std::unique_ptr<bool[]> positive(new bool[scores.size()]);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    values[i] = scores[i].dist.prob(label);
    positive[i] = scores[i].gold == label;
  }
  return binary_auc(values, std::span<const bool>(positive.get(), scores.size()));
}

}  // namespace

std::map<std::string, double> one_vs_rest_auc(std::span<const ScoredExample> scores) {
  std::map<std::string, double> out;
  std::set<std::string> golds;
  for (const auto& s : scores) golds.insert(s.gold);
  for (const auto& label : golds) {
    if (auto auc = label_auc(scores, label)) out[label] = *auc;
  }
  return out;
}

double auc_roc(std::span<const ScoredExample> scores, const std::optional<std::string>& positive_label) {
  if (scores.size() < 2) throw Error("insufficient-data", "AUC needs at least two examples");
  check_support(scores);
  const auto labels = labels_in_play(scores);
  if (labels.size() == 2) {
    const std::string positive = positive_label.value_or(labels.back());
    const auto auc = label_auc(scores, positive);
    if (!auc) throw Error("insufficient-data", "AUC undefined: only one class present");
    return *auc;
  }
  const auto per_label = one_vs_rest_auc(scores);
  if (per_label.empty()) throw Error("insufficient-data", "AUC undefined: only one class present");
  double sum = 0.0;
  for (const auto& [label, auc] : per_label) sum += auc;
  return sum / static_cast<double>(per_label.size());
}

double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.empty()) throw Error("insufficient-data", "kappa of an empty rating matrix");
  const std::size_t raters = ratings.front().size();
  if (raters < 2) throw Error("insufficient-data", "kappa needs at least two raters");
  std::map<std::string, double> category_totals;
  double agreement_sum = 0.0;
  for (const auto& item : ratings) {
    if (item.size() != raters) throw Error("insufficient-data", "every item needs the same number of ratings");
    std::map<std::string, std::size_t> counts;
    for (const auto& r : item) ++counts[r];
    double pairs = 0.0;
    for (const auto& [category, c] : counts) {
      pairs += static_cast<double>(c) * static_cast<double>(c - 1);
      category_totals[category] += static_cast<double>(c);
    }
    agreement_sum += pairs / (static_cast<double>(raters) * static_cast<double>(raters - 1));
  }
  const double items = static_cast<double>(ratings.size());
  const double observed = agreement_sum / items;
  double expected = 0.0;
  for (const auto& [category, total] : category_totals) {
    const double p = total / (items * static_cast<double>(raters));
    expected += p * p;
  }
  if (expected >= 1.0) return observed >= 1.0 ? 1.0 : 0.0;
  return (observed - expected) / (1.0 - expected);
}

double cohen_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b) {
  if (rater_a.size() != rater_b.size()) throw Error("length-mismatch", "raters rated different item counts");
  if (rater_a.empty()) throw Error("insufficient-data", "kappa of an empty rating matrix");
  const double n = static_cast<double>(rater_a.size());
  std::map<std::string, double> marg_a, marg_b;
  double agree = 0.0;
  for (std::size_t i = 0; i < rater_a.size(); ++i) {
    marg_a[rater_a[i]] += 1.0;
    marg_b[rater_b[i]] += 1.0;
    if (rater_a[i] == rater_b[i]) agree += 1.0;
  }
  const double observed = agree / n;
  double expected = 0.0;
  for (const auto& [category, count] : marg_a) {
    const auto it = marg_b.find(category);
    if (it != marg_b.end()) expected += (count / n) * (it->second / n);
  }
  if (expected >= 1.0) return observed >= 1.0 ? 1.0 : 0.0;
  return (observed - expected) / (1.0 - expected);
}

double explanation_benefit_rate(std::span<const bool> votes) {
  if (votes.empty()) throw Error("insufficient-data", "benefit rate of zero votes");
  const auto yes = std::count(votes.begin(), votes.end(), true);
  return static_cast<double>(yes) / static_cast<double>(votes.size());
}

double explanation_benefit_rate(const std::vector<bool>& votes) {
  if (votes.empty()) throw Error("insufficient-data", "benefit rate of zero votes");
  const auto yes = std::count(votes.begin(), votes.end(), true);
  return static_cast<double>(yes) / static_cast<double>(votes.size());
}

EvalResult summarize(std::span<const EvalExample> examples, const std::optional<std::string>& positive_label) {
  if (examples.empty()) throw Error("insufficient-data", "nothing to evaluate");
  EvalResult result;
  result.n = examples.size();
  std::vector<std::string> preds, golds;
  std::vector<ScoredExample> scored;
  std::map<std::string, std::size_t> gold_counts;
  for (const auto& ex : examples) {
    preds.push_back(ex.predicted);
    golds.push_back(ex.gold);
    scored.push_back({ex.dist, ex.gold});
    ++gold_counts[ex.gold];
    auto& gold_row = result.per_label[ex.gold];
    ++gold_row.support;
    if (ex.predicted == ex.gold) ++gold_row.correct;
    ++result.per_label[ex.predicted].predicted;
  }
  result.accuracy = accuracy(preds, golds);
  if (examples.size() >= 2) {
    try {
      result.auc_roc = auc_roc(scored, positive_label);
    } catch (const Error& e) {
      if (e.code() != "insufficient-data") throw;
      result.auc_roc = 0.5;
    }
  }
  for (const auto& [label, auc] : one_vs_rest_auc(scored)) result.per_label[label].auc = auc;

  std::size_t best = 0;
  for (const auto& [label, count] : gold_counts) {
    if (count > best) {
      best = count;
      result.majority_label = label;
    }
  }
  result.majority_accuracy = static_cast<double>(best) / static_cast<double>(examples.size());

  // Condition-level accuracy where ground-truth condition values exist.
  std::map<std::string, std::pair<std::size_t, std::size_t>> cond;  // correct, total
  for (const auto& ex : examples) {
    if (!ex.condition_truths) continue;
    for (const auto& e : ex.evaluations) {
      const auto it = ex.condition_truths->find(e.condition_id);
      if (it == ex.condition_truths->end()) continue;
      auto& [correct, total] = cond[e.condition_id];
      ++total;
      if (it->second == e.satisfied) ++correct;
    }
  }
  if (!cond.empty()) {
    std::map<std::string, double> acc;
    for (const auto& [id, ct] : cond) {
      acc[id] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }
    result.condition_accuracy = std::move(acc);
  }
  return result;
}

Json eval_result_to_json(const EvalResult& result) {
  Json per_label = Json::object();
  for (const auto& [label, b] : result.per_label) {
    Json row{{"support", b.support}, {"predicted", b.predicted}, {"correct", b.correct}};
    row["auc"] = b.auc ? Json(*b.auc) : Json(nullptr);
    per_label[label] = row;
  }
  Json doc{{"n", result.n},
           {"accuracy", result.accuracy},
           {"auc_roc", result.auc_roc},
           {"majority_label", result.majority_label},
           {"majority_accuracy", result.majority_accuracy},
           {"per_label", per_label}};
  if (result.condition_accuracy) doc["condition_accuracy"] = *result.condition_accuracy;
  return doc;
}

std::string format_eval_table(const EvalResult& result) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %10s\n", "model", "accuracy", "auc_roc");
  out << line;
  std::snprintf(line, sizeof line, "%-22s %10.4f %10s\n", ("majority(" + result.majority_label + ")").c_str(),
                result.majority_accuracy, "0.5000");
  out << line;
  std::snprintf(line, sizeof line, "%-22s %10.4f %10.4f\n", "pkil", result.accuracy, result.auc_roc);
  out << line;
  out << '\n';
  std::snprintf(line, sizeof line, "%-22s %8s %9s %8s %8s\n", "label", "support", "predicted", "recall", "auc");
  out << line;
  for (const auto& [label, b] : result.per_label) {
    const double recall = b.support ? static_cast<double>(b.correct) / static_cast<double>(b.support) : 0.0;
    char auc[16];
    if (b.auc) {
      std::snprintf(auc, sizeof auc, "%.4f", *b.auc);
    } else {
      std::snprintf(auc, sizeof auc, "-");
    }
    std::snprintf(line, sizeof line, "%-22s %8zu %9zu %8.4f %8s\n", label.c_str(), b.support, b.predicted,
                  recall, auc);
    out << line;
  }
  if (result.condition_accuracy) {
    out << '\n';
    for (const auto& [id, acc] : *result.condition_accuracy) {
      std::snprintf(line, sizeof line, "condition %-12s accuracy %.4f\n", id.c_str(), acc);
      out << line;
    }
  }
  std::snprintf(line, sizeof line, "\nn = %zu\n", result.n);
  out << line;
  return out.str();
}

}  // namespace pkil
