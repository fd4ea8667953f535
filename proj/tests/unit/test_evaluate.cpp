#include "oracles.hpp"

#include "seqgan/error.hpp"
#include "seqgan/evaluate.hpp"

#include <doctest.h>

#include <array>
#include <random>

using namespace seqgan;
using namespace seqgan::evaluate;

namespace {

Matrix one_hot_proba(const LabelVector& pred, Eigen::Index classes) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(pred.size()), classes);
  for (std::size_t i = 0; i < pred.size(); ++i) p(static_cast<Eigen::Index>(i), pred[i]) = 1.0;
  return p;
}

Matrix random_proba(std::mt19937_64& gen, std::size_t rows, Eigen::Index classes, bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(1, 4);
  Matrix p(static_cast<Eigen::Index>(rows), classes);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < classes; ++j) p(i, j) = coarse ? level(gen) : u(gen);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> as_int(const LabelVector& v) { return {v.begin(), v.end()}; }

MetricsReport with_accuracy(double a) {
  MetricsReport r;
  r.accuracy = a;
  return r;
}

}  // namespace

TEST_CASE("metrics: perfect predictions") {
  const LabelVector y = {0, 1, 2, 2, 1, 0};
  const auto r = compute_metrics(y, y, one_hot_proba(y, 3));
  CHECK(r.accuracy == 1.0);
  CHECK(r.f1_weighted == 1.0);
  CHECK(r.f1_macro == 1.0);
  CHECK(r.roc_auc_ovr_macro == 1.0);
}

TEST_CASE("metrics: hand-computed binary confusion matrix") {
  const LabelVector y = {0, 0, 1, 1}, p = {0, 1, 1, 1};
  const auto r = compute_metrics(y, p, one_hot_proba(p, 2));
  CHECK(r.accuracy == doctest::Approx(0.75));
  // class 0: P=1, R=1/2, F1=2/3; class 1: P=2/3, R=1, F1=4/5
  CHECK(r.f1_macro == doctest::Approx(11.0 / 15.0));
  CHECK(r.f1_weighted == doctest::Approx(11.0 / 15.0));
  CHECK(r.precision_weighted == doctest::Approx(5.0 / 6.0));
  CHECK(r.recall_weighted == r.accuracy);
}

TEST_CASE("metrics: predicting one class on balanced data") {
  const LabelVector y = {0, 0, 1, 1}, p = {1, 1, 1, 1};
  const auto r = compute_metrics(y, p, one_hot_proba(p, 2));
  CHECK(r.accuracy == 0.5);
  CHECK(r.f1_macro == doctest::Approx(1.0 / 3.0));
  CHECK(r.zero_division >= 1);
}

TEST_CASE("metrics: agree with a brute-force confusion matrix on 1000 random instances") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 4);
    const std::size_t n = 5 + gen() % 30;
    LabelVector y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<Label>(gen() % static_cast<unsigned>(k));
      p[i] = static_cast<Label>(gen() % static_cast<unsigned>(k));
    }
    y[1] = y[0] == 0 ? 1 : 0;  // at least two classes, so the AUC is defined
    const auto r = compute_metrics(y, p, random_proba(gen, n, k, false));
    const auto o = oracle::metrics(as_int(y), as_int(p), k);
    CAPTURE(trial);
    CHECK(r.accuracy == doctest::Approx(o.accuracy).epsilon(1e-12));
    CHECK(r.precision_weighted == doctest::Approx(o.precision).epsilon(1e-12));
    CHECK(r.recall_weighted == doctest::Approx(o.recall).epsilon(1e-12));
    CHECK(r.f1_weighted == doctest::Approx(o.f1_weighted).epsilon(1e-12));
    CHECK(r.f1_macro == doctest::Approx(o.f1_macro).epsilon(1e-12));
    CHECK(r.recall_weighted == doctest::Approx(r.accuracy).epsilon(1e-15));
    for (double v : r.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("metrics: length mismatch is an error") {
  CHECK_THROWS(compute_metrics({0, 1}, {0}, Matrix::Zero(2, 2)));
}

TEST_CASE("auc: perfect ranking, constant scores, pair oracle") {
  const std::vector<double> ranked = {0.1, 0.2, 0.8, 0.9};
  const bool pos_arr[] = {false, false, true, true};
  CHECK(binary_auc(ranked, std::span(pos_arr)) == 1.0);
  const double flat[] = {0.3, 0.3, 0.3, 0.3};
  CHECK(binary_auc(flat, std::span(pos_arr)) == 0.5);

  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 40;
    LabelVector y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % 3);  // every class present
    std::shuffle(y.begin(), y.end(), gen);
    const Matrix proba = random_proba(gen, n, 3, trial % 2 == 0);  // coarse scores produce ties
    double expected = 0.0;
    for (Eigen::Index c = 0; c < 3; ++c) {
      std::vector<double> s(proba.col(c).data(), proba.col(c).data() + 0);
      std::vector<bool> positive;
      for (std::size_t i = 0; i < n; ++i) {
        s.push_back(proba(static_cast<Eigen::Index>(i), c));
        positive.push_back(y[i] == c);
      }
      expected += oracle::auc_pairs(s, positive) / 3.0;
    }
    CAPTURE(trial);
    CHECK(roc_auc_ovr_macro(y, proba) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("auc: invariant under strictly monotone transforms") {
  std::mt19937_64 gen(4);
  LabelVector y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = static_cast<Label>(i % 3);
  const Matrix p = random_proba(gen, 30, 3, false);
  const Matrix transformed = (p.array() * 7.0).exp().matrix() - Matrix::Constant(30, 3, 3.0);
  CHECK(roc_auc_ovr_macro(y, transformed) == doctest::Approx(roc_auc_ovr_macro(y, p)).epsilon(1e-14));
}

TEST_CASE("auc: binary complement and skipped classes") {
  std::mt19937_64 gen(5);
  LabelVector y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = static_cast<Label>(i % 2);
  const Matrix p = random_proba(gen, 20, 2, false);
  std::vector<double> s0, s1;
  std::array<bool, 20> pos0{}, pos1{};
  for (std::size_t i = 0; i < 20; ++i) {
    s0.push_back(p(static_cast<Eigen::Index>(i), 0));
    s1.push_back(p(static_cast<Eigen::Index>(i), 1));
    pos0[i] = y[i] == 0;
    pos1[i] = y[i] == 1;
  }
  const double a0 = binary_auc(s0, pos0);
  const double a1 = binary_auc(s1, pos1);
  // With s1 = 1 - s0 the class-1 positives are the class-0 negatives, so the
  // two one-vs-rest AUCs coincide; flipping only the labels gives 1 - AUC.
  CHECK(a1 == doctest::Approx(a0).epsilon(1e-14));
  CHECK(binary_auc(s0, pos1) == doctest::Approx(1.0 - a0).epsilon(1e-14));
  CHECK(roc_auc_ovr_macro(y, p) == doctest::Approx(0.5 * (a0 + a1)).epsilon(1e-14));

  // a score column for a class absent from y_true does not enter the average
  std::size_t skipped = 0;
  Matrix p3 = random_proba(gen, 20, 3, false);
  const double v = roc_auc_ovr_macro(y, p3, &skipped);
  CHECK(skipped == 0);
  p3.col(2).setRandom();
  CHECK(roc_auc_ovr_macro(y, p3) == v);

  const LabelVector single(5, 0);
  CHECK_THROWS(roc_auc_ovr_macro(single, random_proba(gen, 5, 2, false)));
}

TEST_CASE("aggregate: mean and sample standard deviation") {
  const std::vector<MetricsReport> two = {with_accuracy(0.9), with_accuracy(1.0)};
  const auto agg = aggregate_runs(two);
  CHECK(agg.n_runs == 2);
  CHECK(agg.metrics[0].mean == doctest::Approx(0.95));
  CHECK(agg.metrics[0].std == doctest::Approx(std::sqrt(0.005)));
  CHECK(agg.metrics[0].std == doctest::Approx(0.0707).epsilon(1e-3));

  const std::vector<MetricsReport> one = {with_accuracy(0.8)};
  CHECK(aggregate_runs(one).metrics[0].std == 0.0);
  const std::vector<MetricsReport> same(4, with_accuracy(0.7));
  CHECK(aggregate_runs(same).metrics[0].mean == doctest::Approx(0.7));
  CHECK(aggregate_runs(same).metrics[0].std == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS(aggregate_runs(std::span<const MetricsReport>{}));
}

TEST_CASE("welch: degenerate conventions") {
  const auto same = welch_ttest(0.8, 0.05, 5, 0.8, 0.05, 5);
  CHECK(same.t == 0.0);
  CHECK(same.p == doctest::Approx(1.0));
  CHECK(welch_ttest(0.5, 0.0, 5, 0.5, 0.0, 5).p == 1.0);
  CHECK(welch_ttest(0.5, 0.0, 5, 0.6, 0.0, 5).p == 0.0);
  CHECK_THROWS(welch_ttest(0.5, 0.1, 1, 0.6, 0.1, 5));
  CHECK_THROWS(welch_ttest(0.5, -0.1, 5, 0.6, 0.1, 5));
}

TEST_CASE("welch: separated means are significant, matching numerical integration") {
  const auto r = welch_ttest(0.0, 0.1, 5, 1.0, 0.1, 5);
  CHECK(r.p < 0.05);
  CHECK(r.df == doctest::Approx(8.0));
  CHECK(r.p == doctest::Approx(oracle::t_two_sided_p(r.t, r.df)).epsilon(1e-6));
}

TEST_CASE("welch: p-values match a Simpson-integration oracle") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> mean(0.0, 1.0), sd(0.01, 0.3);
  std::uniform_int_distribution<int> n(2, 10);
  for (int trial = 0; trial < 100; ++trial) {
    const double ma = mean(gen), mb = mean(gen), sa = sd(gen), sb = sd(gen);
    const int na = n(gen), nb = n(gen);
    const auto r = welch_ttest(ma, sa, static_cast<std::size_t>(na), mb, sb, static_cast<std::size_t>(nb));
    const double se = std::sqrt(sa * sa / na + sb * sb / nb);
    CAPTURE(trial);
    CHECK(std::abs(r.t) == doctest::Approx(std::abs(ma - mb) / se).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(oracle::welch_df(sa, na, sb, nb)).epsilon(1e-12));
    CHECK(std::abs(r.p - oracle::t_two_sided_p(r.t, r.df)) <= 1e-6);
  }
}

TEST_CASE("welch: p decreases as the mean gap grows") {
  double previous = 1.0 + 1e-12;
  for (int i = 0; i <= 40; ++i) {
    const double p = welch_ttest(0.5, 0.1, 5, 0.5 + 0.01 * i, 0.15, 5).p;
    CHECK(p <= previous);
    previous = p;
  }
}

TEST_CASE("compare reports a p-value per metric") {
  std::vector<MetricsReport> a, b;
  for (double v : {0.80, 0.82, 0.81}) a.push_back(with_accuracy(v));
  for (double v : {0.90, 0.91, 0.92}) b.push_back(with_accuracy(v));
  const auto p = compare(aggregate_runs(a), aggregate_runs(b));
  CHECK(p.size() == 6);
  CHECK(p.at("accuracy") < 0.01);
  CHECK(p.at("f1_macro") == 1.0);  // all zero on both sides
}
