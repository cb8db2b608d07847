#pragma once

// Independent oracles and fixtures shared by the test programs. Nothing here
// calls into the code under test for the quantity being checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pkil/pk_dsl.hpp"

namespace pkil::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(PKIL_TEST_DATA_DIR) / name;
}

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pkil-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Straight-line rule interpreter over the set of satisfied condition ids.
inline std::string naive_label(const ProcessKnowledge& pk, const std::set<std::string>& satisfied) {
  for (const auto& rule : pk.rules()) {
    bool all = true;
    for (const auto& c : rule.conditions) {
      if (satisfied.find(c) == satisfied.end()) all = false;
    }
    if (all) return rule.label;
  }
  if (pk.fallback_label()) return *pk.fallback_label();
  return std::string(kNoMatch);
}

inline std::set<std::string> satisfied_ids(const ProcessKnowledge& pk, std::uint32_t mask) {
  std::set<std::string> out;
  for (std::size_t j = 0; j < pk.condition_count(); ++j) {
    if ((mask >> j) & 1U) out.insert(pk.conditions()[j].id);
  }
  return out;
}

/// P(label) by summing the product probability of every assignment whose
/// naive label is `label`.
inline double naive_probability(const ProcessKnowledge& pk, const std::vector<double>& s, const std::string& label) {
  const std::size_t m = pk.condition_count();
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1U << m); ++mask) {
    double p = 1.0;
    for (std::size_t j = 0; j < m; ++j) p *= ((mask >> j) & 1U) ? s[j] : 1.0 - s[j];
    if (naive_label(pk, satisfied_ids(pk, mask)) == label) total += p;
  }
  return total;
}

inline double naive_logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Random process knowledge with `m` conditions and up to `max_rules` rules.
inline ProcessKnowledge random_pk(std::mt19937_64& rng, std::size_t m, std::size_t max_rules, bool with_fallback) {
  std::vector<Condition> conds;
  for (std::size_t j = 0; j < m; ++j) conds.push_back({"C" + std::to_string(j + 1), "condition " + std::to_string(j + 1)});
  std::vector<Rule> rules;
  std::set<std::set<std::string>> used;
  const std::size_t n_rules = 1 + rng() % max_rules;
  for (std::size_t r = 0; r < n_rules * 4 && rules.size() < n_rules; ++r) {
    std::set<std::string> cs;
    const std::size_t k = 1 + rng() % m;
    while (cs.size() < k) cs.insert(conds[rng() % m].id);
    if (!used.insert(cs).second) continue;
    rules.push_back({{cs.begin(), cs.end()}, "L" + std::to_string(rng() % 4)});
  }
  std::optional<std::string> fallback;
  if (with_fallback) fallback = "LF";
  return ProcessKnowledge(std::move(conds), std::move(rules), fallback);
}

/// AUC by counting every positive/negative pair; ties count one half.
inline double pair_counting_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (positive[k]) continue;
      pairs += 1.0;
      if (scores[i] > scores[k]) wins += 1.0;
      if (scores[i] == scores[k]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace pkil::testing
