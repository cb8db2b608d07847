#include <doctest.h>

#include <random>

#include "pkil/metrics.hpp"
#include "support.hpp"

using namespace pkil;

namespace {

LabelDistribution binary(double p1) { return {{"1", "0"}, {p1, 1.0 - p1}}; }

}  // namespace

TEST_CASE("accuracy never credits NO_MATCH") {
  const std::vector<std::string> preds = {"a", "b", "NO_MATCH", "a"};
  const std::vector<std::string> golds = {"a", "a", "NO_MATCH", "a"};
  CHECK(accuracy(preds, golds) == doctest::Approx(0.5));
  CHECK_THROWS(accuracy(preds, std::vector<std::string>{"a"}));
  CHECK_THROWS(accuracy(std::vector<std::string>{}, std::vector<std::string>{}));
}

TEST_CASE("binary AUC equals pair counting") {
  std::mt19937_64 rng(31);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> scores(n);
    std::vector<bool> positive(n);
    std::unique_ptr<bool[]> pos(new bool[n]);
    // Coarse scores so ties are common.
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 17) / 16.0;
      positive[i] = rng() % 3 == 0;
      pos[i] = positive[i];
    }
    positive[0] = true;
    pos[0] = true;
    positive[1] = false;
    pos[1] = false;
    const auto auc = binary_auc(scores, std::span<const bool>(pos.get(), n));
    REQUIRE(auc.has_value());
    CHECK(std::abs(*auc - testing::pair_counting_auc(scores, positive)) <= 1e-12);
  }
  const double s[] = {0.1, 0.2};
  const bool p[] = {true, true};
  CHECK_FALSE(binary_auc(s, p).has_value());
}

TEST_CASE("auc_roc on distributions") {
  std::vector<ScoredExample> ex = {
      {binary(0.9), "1"}, {binary(0.8), "1"}, {binary(0.3), "0"}, {binary(0.85), "0"}, {binary(0.1), "0"}};
  // Positive defaults to the greater label "1". Pairs: 0.9 beats all 3, 0.8 beats 2 of 3.
  CHECK(auc_roc(ex) == doctest::Approx(5.0 / 6.0));
  CHECK(auc_roc(ex, std::string("0")) == doctest::Approx(5.0 / 6.0));

  std::vector<ScoredExample> multi = {
      {{{"a", "b", "c"}, {0.7, 0.2, 0.1}}, "a"},
      {{{"a", "b", "c"}, {0.2, 0.6, 0.2}}, "b"},
      {{{"a", "b", "c"}, {0.1, 0.1, 0.8}}, "c"},
      {{{"a", "b", "c"}, {0.5, 0.4, 0.1}}, "b"},
  };
  const auto per = one_vs_rest_auc(multi);
  REQUIRE(per.size() == 3);
  double mean = 0.0;
  for (const auto& [label, auc] : per) mean += auc;
  CHECK(auc_roc(multi) == doctest::Approx(mean / 3.0));
  CHECK(per.at("c") == 1.0);

  std::vector<ScoredExample> unknown = {{binary(0.5), "1"}, {binary(0.5), "7"}};
  CHECK_THROWS_WITH_AS(auc_roc(unknown), doctest::Contains("7"), Error);
  CHECK_THROWS(auc_roc(std::vector<ScoredExample>{{binary(0.5), "1"}}));
}

TEST_CASE("cohen kappa worked example") {
  // 2x2 table: both yes 20, a yes b no 5, a no b yes 10, both no 15.
  std::vector<std::string> a, b;
  auto add = [&](const char* x, const char* y, int n) {
    for (int i = 0; i < n; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  add("yes", "yes", 20);
  add("yes", "no", 5);
  add("no", "yes", 10);
  add("no", "no", 15);
  // po = 0.7, pe = 0.5*0.6 + 0.5*0.4 = 0.5
  CHECK(cohen_kappa(a, b) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(cohen_kappa(a, a) == 1.0);
}

TEST_CASE("fleiss kappa worked example") {
  const std::vector<std::vector<std::string>> r = {
      {"a", "a", "a"}, {"a", "a", "b"}, {"b", "b", "b"}, {"a", "b", "b"}};
  // P_i = 1, 1/3, 1, 1/3 -> Pbar = 2/3; p_a = p_b = 1/2 -> Pe = 1/2.
  CHECK(fleiss_kappa(r) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(fleiss_kappa({{"x", "x"}, {"x", "x"}}) == 1.0);
  CHECK(fleiss_kappa({{"x", "x", "x"}, {"y", "y", "y"}}) == 1.0);
  CHECK_THROWS(fleiss_kappa({{"x"}}));
  CHECK_THROWS(fleiss_kappa({{"x", "y"}, {"x"}}));
  CHECK_THROWS(fleiss_kappa({}));
}

TEST_CASE("fleiss with two raters matches the hand formula") {
  std::mt19937_64 rng(32);
  const std::vector<std::string> cats = {"p", "q", "r"};
  std::vector<std::vector<std::string>> r;
  for (int i = 0; i < 40; ++i) r.push_back({cats[rng() % 3], cats[rng() % 3]});
  double agree = 0.0;
  std::map<std::string, double> tot;
  for (const auto& item : r) {
    agree += item[0] == item[1] ? 1.0 : 0.0;
    tot[item[0]] += 1.0;
    tot[item[1]] += 1.0;
  }
  const double po = agree / 40.0;
  double pe = 0.0;
  for (const auto& [c, t] : tot) pe += (t / 80.0) * (t / 80.0);
  CHECK(fleiss_kappa(r) == doctest::Approx((po - pe) / (1.0 - pe)).epsilon(1e-12));
}

TEST_CASE("explanation benefit rate") {
  std::vector<bool> votes(10, false);
  for (int i = 0; i < 7; ++i) votes[static_cast<std::size_t>(i)] = true;
  CHECK(explanation_benefit_rate(votes) == doctest::Approx(0.7));
  CHECK_THROWS(explanation_benefit_rate(std::vector<bool>{}));
}

TEST_CASE("summaries") {
  std::vector<EvalExample> ex;
  ex.push_back({"a", "1", "1", binary(0.9), {}, std::nullopt});
  ex.push_back({"b", "1", "0", binary(0.4), {}, std::nullopt});
  ex.push_back({"c", "0", "0", binary(0.2), {}, std::nullopt});
  ex.push_back({"d", "0", "0", binary(0.3), {}, std::nullopt});
  ex.push_back({"e", "0", "NO_MATCH", binary(0.1), {}, std::nullopt});
  const auto r = summarize(ex);
  CHECK(r.n == 5);
  CHECK(r.accuracy == doctest::Approx(0.6));
  CHECK(r.majority_label == "0");
  CHECK(r.majority_accuracy == doctest::Approx(0.6));
  CHECK(r.per_label.at("1").support == 2);
  CHECK(r.per_label.at("1").correct == 1);
  CHECK(r.per_label.at("0").predicted == 3);
  CHECK(r.auc_roc == doctest::Approx(1.0));
  const auto j = eval_result_to_json(r);
  CHECK(j.at("n") == 5);
  CHECK(j.at("accuracy").get<double>() == doctest::Approx(0.6));
  CHECK(format_eval_table(r).find("accuracy") != std::string::npos);
}
