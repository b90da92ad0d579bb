#include "nfbst/metrics.hpp"
#include "nfbst/net.hpp"
#include "nfbst/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace nfbst;

namespace {

// AUC as the probability a random positive outscores a random negative.
double pair_auc(const std::vector<bool>& labels, const std::vector<double>& scores) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("perfect predictions") {
  const std::vector<bool> y{true, false, true, true, false};
  const auto s = precision_recall_f1(y, y);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 1.0);
  CHECK_FALSE(s.undefined);
  CHECK(s.counts.tp == 3);
  CHECK(s.counts.tn == 2);
}

TEST_CASE("predicting everything positive on a balanced set") {
  const std::vector<bool> y{true, false, true, false};
  const auto s = precision_recall_f1(y, std::vector<bool>(4, true));
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.counts.total() == 4);
}

TEST_CASE("hand confusion counts") {
  const std::vector<bool> y{true, true, true, false, false, false, false};
  const std::vector<bool> p{true, false, false, true, false, false, true};
  const auto s = precision_recall_f1(y, p);
  CHECK(s.counts.tp == 1);
  CHECK(s.counts.fn == 2);
  CHECK(s.counts.fp == 2);
  CHECK(s.counts.tn == 2);
  CHECK(s.precision == doctest::Approx(1.0 / 3.0));
  CHECK(s.recall == doctest::Approx(1.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("zero denominators are flagged") {
  const std::vector<bool> y{true, false};
  const auto none = precision_recall_f1(y, {false, false});
  CHECK(none.undefined);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  const auto no_positives = precision_recall_f1({false, false}, {false, false});
  CHECK(no_positives.undefined);
  CHECK(no_positives.recall == 0.0);
}

TEST_CASE("length mismatch is rejected") {
  CHECK_THROWS_AS(precision_recall_f1({true, false}, {true}), DimensionError);
  CHECK_THROWS_AS(roc_auc({true, false}, {0.5}), DimensionError);
  CHECK_THROWS_AS(trapezoid_area({0.0, 1.0}, {0.0}), DimensionError);
}

TEST_CASE("labels used as scores give a perfect AUC") {
  const std::vector<bool> y{true, false, false, true, false, true};
  std::vector<double> s;
  for (bool v : y) s.push_back(v ? 1.0 : 0.0);
  CHECK(roc_auc(y, s).auc == 1.0);
}

TEST_CASE("hand AUC with a tie") {
  // positives 0.9, 0.4, 0.3; negatives 0.4, 0.2, 0.1
  // pairs won: 3 + (0.5 + 1 + 1) + (1 + 1) = 7.5 of 9
  const std::vector<bool> y{true, true, true, false, false, false};
  const std::vector<double> s{0.9, 0.4, 0.3, 0.4, 0.2, 0.1};
  CHECK(roc_auc(y, s).auc == doctest::Approx(7.5 / 9.0).epsilon(1e-15));
}

TEST_CASE("AUC equals exhaustive pair counting") {
  Rng rng(1);
  std::uniform_int_distribution<int> len(2, 60);
  std::uniform_int_distribution<int> level(0, 5);  // coarse scores force ties
  std::bernoulli_distribution coin(0.4);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = len(rng);
    std::vector<bool> y(static_cast<std::size_t>(n));
    std::vector<double> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] = coin(rng);
      s[static_cast<std::size_t>(i)] = rep % 2 ? level(rng) : std::uniform_real_distribution<double>(0, 1)(rng);
    }
    y[0] = true;
    y[1] = false;
    CHECK(roc_auc(y, s).auc == doctest::Approx(pair_auc(y, s)).epsilon(1e-12));
  }
}

TEST_CASE("reversing the scores complements the AUC") {
  Rng rng(2);
  std::normal_distribution<double> normal;
  std::vector<bool> y;
  std::vector<double> s;
  for (int i = 0; i < 200; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(normal(rng) + (i % 3 == 0 ? 0.7 : 0.0));
  }
  std::vector<double> reversed;
  for (double v : s) reversed.push_back(-v);
  CHECK(roc_auc(y, reversed).auc == doctest::Approx(1.0 - roc_auc(y, s).auc).epsilon(1e-12));
}

TEST_CASE("AUC is invariant to monotone transforms and permutation") {
  Rng rng(3);
  std::normal_distribution<double> normal;
  std::vector<bool> y;
  std::vector<double> s;
  for (int i = 0; i < 150; ++i) {
    y.push_back(i % 2 == 0);
    s.push_back(normal(rng) + (i % 2 == 0 ? 0.5 : 0.0));
  }
  const double auc = roc_auc(y, s).auc;
  std::vector<double> transformed;
  for (double v : s) transformed.push_back(std::exp(3.0 * v) + 1.0);
  CHECK(roc_auc(y, transformed).auc == doctest::Approx(auc).epsilon(1e-14));

  std::vector<std::size_t> order(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> py;
  std::vector<double> ps;
  for (std::size_t i : order) {
    py.push_back(y[i]);
    ps.push_back(s[i]);
  }
  CHECK(roc_auc(py, ps).auc == doctest::Approx(auc).epsilon(1e-14));
}

TEST_CASE("AUC needs both classes and finite scores") {
  CHECK_THROWS_AS(roc_auc({true, true}, {0.1, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(roc_auc({false, false}, {0.1, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(roc_auc({true, false}, {std::nan(""), 0.2}), std::invalid_argument);
}

TEST_CASE("ROC curve runs from the origin to (1, 1) monotonically") {
  Rng rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<bool> y;
  std::vector<double> s;
  for (int i = 0; i < 80; ++i) {
    y.push_back(u(rng) < 0.3 || i == 0);
    s.push_back(std::round(u(rng) * 10.0));
  }
  y[1] = false;
  const RocCurve roc = roc_auc(y, s);
  CHECK(roc.fpr.front() == 0.0);
  CHECK(roc.tpr.front() == 0.0);
  CHECK(roc.fpr.back() == 1.0);
  CHECK(roc.tpr.back() == 1.0);
  CHECK(std::isinf(roc.thresholds.front()));
  for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
    CHECK(roc.fpr[k] >= roc.fpr[k - 1]);
    CHECK(roc.tpr[k] >= roc.tpr[k - 1]);
    CHECK(roc.thresholds[k] < roc.thresholds[k - 1]);
  }
}

TEST_CASE("trapezoid area of simple curves") {
  CHECK(trapezoid_area({0.0, 1.0}, {0.0, 1.0}) == 0.5);
  CHECK(trapezoid_area({0.0, 0.0, 1.0}, {0.0, 1.0, 1.0}) == 1.0);
  CHECK(trapezoid_area({0.0, 0.5, 1.0}, {0.0, 0.0, 1.0}) == 0.25);
  CHECK(trapezoid_area({}, {}) == 0.0);
}
