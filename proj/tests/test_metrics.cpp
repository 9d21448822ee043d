// Evaluation metrics against hand-worked confusion matrices and independent
// oracles: pair counting for AUROC, precision-at-positive-ranks for AP.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "eegfm/metrics.hpp"
#include "eegfm/rng.hpp"

using namespace eegfm;

namespace {

// Expands a confusion matrix (rows = true class, cols = predicted) into
// label vectors.
void expand(const std::vector<std::vector<int>>& conf, std::vector<int>& yt,
            std::vector<int>& yp) {
  for (size_t t = 0; t < conf.size(); ++t)
    for (size_t p = 0; p < conf[t].size(); ++p)
      for (int k = 0; k < conf[t][p]; ++k) {
        yt.push_back(static_cast<int>(t));
        yp.push_back(static_cast<int>(p));
      }
}

// AUROC by brute force: the fraction of (positive, negative) pairs ranked
// correctly, ties worth one half.
double pair_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0.0;
  int64_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      ++n_pos;
      for (size_t j = 0; j < y.size(); ++j) {
        if (y[j] == 0) num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    } else {
      ++n_neg;
    }
  }
  return num / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision for tie-free scores: mean over positives of the
// precision at each positive's rank in the descending sweep.
double ap_unique_scores(const std::vector<int>& y, const std::vector<double>& s) {
  std::vector<size_t> order(y.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s[a] > s[b]; });
  double sum = 0.0;
  int64_t tp = 0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (y[order[r]] == 1) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(tp);
}

}  // namespace

TEST_CASE("hand-worked confusion matrices") {
  SUBCASE("three classes, two swapped wholesale") {
    // True 0 predicted perfectly, classes 1 and 2 exchanged.
    std::vector<int> yt, yp;
    expand({{5, 0, 0}, {0, 0, 5}, {0, 5, 0}}, yt, yp);
    Metrics m = classification_metrics(yt, yp);
    CHECK(*m.balanced_accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // Chance agreement equals observed agreement here, so kappa is zero.
    CHECK(*m.cohen_kappa == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*m.weighted_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("constant predictor on balanced binary labels") {
    std::vector<int> yt, yp;
    expand({{5, 0}, {5, 0}}, yt, yp);
    Metrics m = classification_metrics(yt, yp);
    CHECK(*m.balanced_accuracy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(*m.cohen_kappa == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("perfect predictor") {
    std::vector<int> yt, yp;
    expand({{4, 0, 0}, {0, 7, 0}, {0, 0, 2}}, yt, yp);
    Metrics m = classification_metrics(yt, yp);
    CHECK(*m.balanced_accuracy == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*m.cohen_kappa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*m.weighted_f1 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("general binary case, worked by hand") {
    // Confusion [[3,1],[2,4]]: recalls 3/4 and 2/3; p_o = 0.7, p_e = 0.5;
    // per-class F1 2/3 and 8/11 with supports 4 and 6.
    std::vector<int> yt, yp;
    expand({{3, 1}, {2, 4}}, yt, yp);
    Metrics m = classification_metrics(yt, yp);
    CHECK(*m.balanced_accuracy == doctest::Approx((0.75 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(*m.cohen_kappa == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(*m.weighted_f1 ==
          doctest::Approx(0.4 * (2.0 / 3.0) + 0.6 * (8.0 / 11.0)).epsilon(1e-12));
  }
  SUBCASE("single observed class leaves kappa undefined") {
    Metrics m = classification_metrics({0, 0, 0}, {0, 0, 0});
    CHECK(*m.balanced_accuracy == doctest::Approx(1.0));
    CHECK(!m.cohen_kappa.has_value());
    CHECK(*m.weighted_f1 == doctest::Approx(1.0));
  }
  SUBCASE("prediction of an unseen class") {
    // True labels only {0,1}, predictor sometimes says 2.
    Metrics m = classification_metrics({0, 0, 1, 1}, {0, 2, 1, 2});
    CHECK(*m.balanced_accuracy == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(classification_metrics({0, 1}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(classification_metrics({}, {}), std::invalid_argument);
  }
}

TEST_CASE("auroc matches the pair-counting oracle, ties included") {
  Rng rng = Rng(404).stream("auroc");
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(60));
    std::vector<int> y(n);
    std::vector<double> s(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
      (y[i] ? has_pos : has_neg) = true;
      // Quantize to one decimal so tie groups actually occur.
      s[i] = std::round(rng.uniform() * 10.0) / 10.0;
    }
    if (!has_pos || !has_neg) {
      CHECK(!auroc_score(y, s).has_value());
      continue;
    }
    const auto got = auroc_score(y, s);
    REQUIRE(got.has_value());
    CHECK(*got == doctest::Approx(pair_auc(y, s)).epsilon(1e-12));
  }
}

TEST_CASE("auroc endpoints and degenerate labels") {
  CHECK(*auroc_score({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9}) == doctest::Approx(1.0));
  CHECK(*auroc_score({0, 0, 1, 1}, {0.9, 0.8, 0.2, 0.1}) == doctest::Approx(0.0));
  CHECK(*auroc_score({0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.5));
  CHECK(!auroc_score({1, 1, 1}, {0.1, 0.2, 0.3}).has_value());
  CHECK(!auroc_score({0, 0, 0}, {0.1, 0.2, 0.3}).has_value());
  CHECK_THROWS_AS(auroc_score({0, 2}, {0.1, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(auroc_score({0, 1}, {0.1}), std::invalid_argument);
}

TEST_CASE("average precision matches the rank oracle on tie-free scores") {
  Rng rng = Rng(405).stream("ap");
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(60));
    std::vector<int> y(n);
    std::vector<double> s(n);
    bool has_pos = false;
    for (int i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.35) ? 1 : 0;
      has_pos = has_pos || y[i] == 1;
      s[i] = rng.uniform();  // continuous, ties have probability zero
    }
    if (!has_pos) {
      CHECK(!auc_pr_score(y, s).has_value());
      continue;
    }
    const auto got = auc_pr_score(y, s);
    REQUIRE(got.has_value());
    CHECK(*got == doctest::Approx(ap_unique_scores(y, s)).epsilon(1e-12));
  }
}

TEST_CASE("average precision tie handling and endpoints, worked by hand") {
  // Tie group {0.9, 0.9} holds one positive and one negative: the sweep
  // reaches recall 1/2 at precision 1/2, then recall 1 at precision 2/3.
  const auto ap = auc_pr_score({1, 0, 1}, {0.9, 0.9, 0.3});
  CHECK(*ap == doctest::Approx(0.5 * 0.5 + 0.5 * (2.0 / 3.0)).epsilon(1e-12));

  CHECK(*auc_pr_score({0, 1, 1}, {0.1, 0.7, 0.9}) == doctest::Approx(1.0));
  CHECK(*auc_pr_score({1, 1}, {0.3, 0.6}) == doctest::Approx(1.0));  // no negatives
  CHECK(!auc_pr_score({0, 0}, {0.3, 0.6}).has_value());
  CHECK_THROWS_AS(auc_pr_score({0, 3}, {0.1, 0.2}), std::invalid_argument);
}

TEST_CASE("binary_metrics carries both families") {
  const std::vector<int> yt = {0, 0, 0, 1, 1, 1};
  const std::vector<int> yp = {0, 0, 1, 1, 1, 0};
  const std::vector<double> s = {0.1, 0.2, 0.6, 0.7, 0.9, 0.3};
  Metrics m = binary_metrics(yt, yp, s);
  CHECK(*m.balanced_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(*m.auroc == doctest::Approx(pair_auc(yt, s)).epsilon(1e-12));
  CHECK(*m.auc_pr == doctest::Approx(ap_unique_scores(yt, s)).epsilon(1e-12));
}

TEST_CASE("json round trip preserves values and undefined entries") {
  Metrics m;
  m.balanced_accuracy = 0.875;
  m.weighted_f1 = 0.25;
  // kappa, auroc, auc_pr stay undefined
  nlohmann::json j = m.to_json();
  CHECK(j.at("cohen_kappa").is_null());
  CHECK(j.at("balanced_accuracy").get<double>() == 0.875);

  Metrics back = metrics_from_json(j);
  CHECK(*back.balanced_accuracy == 0.875);
  CHECK(*back.weighted_f1 == 0.25);
  CHECK(!back.cohen_kappa.has_value());
  CHECK(!back.auroc.has_value());
  CHECK(!back.auc_pr.has_value());

  // Missing keys behave like nulls.
  Metrics sparse = metrics_from_json(nlohmann::json{{"auroc", 0.5}});
  CHECK(*sparse.auroc == 0.5);
  CHECK(!sparse.balanced_accuracy.has_value());
}

TEST_CASE("aggregate_metrics averages only the defined entries") {
  Metrics a, b, c;
  a.balanced_accuracy = 0.8;
  b.balanced_accuracy = 0.6;
  c.balanced_accuracy = 0.7;
  a.cohen_kappa = 0.5;
  b.cohen_kappa = 0.1;
  // c.kappa undefined; auroc undefined everywhere
  nlohmann::json agg = aggregate_metrics({a, b, c});

  CHECK(agg.at("runs").get<int>() == 3);
  CHECK(agg.at("balanced_accuracy").at("mean").get<double>() == doctest::Approx(0.7));
  const double expected_std = std::sqrt((0.01 + 0.01 + 0.0) / 3.0);
  CHECK(agg.at("balanced_accuracy").at("std").get<double>() ==
        doctest::Approx(expected_std).epsilon(1e-12));
  CHECK(agg.at("balanced_accuracy").at("defined_in").get<int>() == 3);

  CHECK(agg.at("cohen_kappa").at("mean").get<double>() == doctest::Approx(0.3));
  CHECK(agg.at("cohen_kappa").at("defined_in").get<int>() == 2);
  CHECK(agg.at("auroc").is_null());
}

TEST_CASE("csv dumps use the undefined sentinel") {
  Metrics m;
  m.balanced_accuracy = 0.5;
  m.weighted_f1 = 0.25;
  CHECK(metrics_csv(m) ==
        "metric,value\n"
        "balanced_accuracy,0.5\n"
        "cohen_kappa,undefined\n"
        "weighted_f1,0.25\n"
        "auroc,undefined\n"
        "auc_pr,undefined\n");

  Metrics k;
  k.auroc = 1.0;
  CHECK(runs_csv({m, k}) ==
        "run,balanced_accuracy,cohen_kappa,weighted_f1,auroc,auc_pr\n"
        "0,0.5,undefined,0.25,undefined,undefined\n"
        "1,undefined,undefined,undefined,1,undefined\n");
}
