#include "oracles.hpp"

#include "seqgan/classify.hpp"
#include "seqgan/error.hpp"

#include <doctest.h>

#include <random>

using namespace seqgan;
using namespace seqgan::classify;

namespace {

struct Data {
  Matrix x;
  LabelVector y;
};

/// Gaussian blobs centred at c * spacing along every axis.
Data blobs(std::size_t per_class, std::size_t classes, std::size_t dim, double spacing, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sd);
  Data d;
  d.x.resize(static_cast<Eigen::Index>(per_class * classes), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto r = static_cast<Eigen::Index>(c * per_class + i);
      for (std::size_t j = 0; j < dim; ++j) {
        // Each class sits on its own axis so classes are pairwise separated.
        const double centre = (j % classes == c) ? spacing : 0.0;
        d.x(r, static_cast<Eigen::Index>(j)) = centre + noise(gen);
      }
      d.y.push_back(static_cast<Label>(c));
    }
  }
  return d;
}

ClassifierConfig quick_config() {
  ClassifierConfig cfg;
  cfg.rf_trees = 15;
  cfg.mlp_epochs = 60;
  cfg.mlp_hidden = {16};
  cfg.mlp_lr = 1e-2;
  cfg.lr_epochs = 300;
  cfg.seed = 5;
  return cfg;
}

double accuracy(const LabelVector& a, const LabelVector& b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

double gini(const std::vector<double>& counts) {
  double n = 0.0, sq = 0.0;
  for (double c : counts) {
    n += c;
    sq += c * c;
  }
  return n > 0 ? 1.0 - sq / (n * n) : 0.0;
}

/// Weighted child Gini of the best axis-aligned split, by enumerating every
/// feature and every midpoint between distinct sorted values.
double best_split_impurity(const Matrix& x, const LabelVector& y, std::size_t n_classes) {
  double best = std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<double> values(x.col(f).data(), x.col(f).data() + 0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) values.push_back(x(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double t = 0.5 * (values[i] + values[i + 1]);
      std::vector<double> left(n_classes, 0.0), right(n_classes, 0.0);
      for (Eigen::Index r = 0; r < x.rows(); ++r) (x(r, f) <= t ? left : right)[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])] += 1.0;
      double nl = 0.0;
      for (double c : left) nl += c;
      best = std::min(best, nl / n * gini(left) + (n - nl) / n * gini(right));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("family names round trip") {
  CHECK(all_families().size() == 6);
  for (auto f : all_families()) CHECK(family_from_string(to_string(f)) == f);
  CHECK(family_from_string("KNN") == Family::KNN);
  CHECK_THROWS_AS(family_from_string("svm"), ConfigError);
}

TEST_CASE("every family separates well-spaced blobs") {
  const auto train = blobs(40, 3, 6, 6.0, 0.5, 1);
  const auto test = blobs(20, 3, 6, 6.0, 0.5, 2);
  for (auto family : all_families()) {
    CAPTURE(to_string(family));
    const auto model = fit(family, train.x, train.y, 3, quick_config());
    CHECK(model->family() == family);
    CHECK(model->n_classes() == 3);
    CHECK(model->feature_dim() == 6);
    CHECK(accuracy(model->predict(test.x), test.y) >= 0.95);
    const Matrix p = model->predict_proba(test.x);
    REQUIRE(p.cols() == 3);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(p.row(i).minCoeff() >= 0.0);
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("predict is argmax of predict_proba and batch equals row by row") {
  const auto train = blobs(20, 3, 4, 1.5, 1.0, 3);  // overlapping, so probabilities are non-trivial
  const auto test = blobs(10, 3, 4, 1.5, 1.0, 4);
  for (auto family : all_families()) {
    CAPTURE(to_string(family));
    const auto model = fit(family, train.x, train.y, 3, quick_config());
    const Matrix p = model->predict_proba(test.x);
    CHECK(model->predict(test.x) == argmax_rows(p));
    for (Eigen::Index i = 0; i < test.x.rows(); ++i) {
      const Matrix one = model->predict_proba(test.x.row(i));
      CHECK((one - p.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("argmax ties go to the lower class") {
  Matrix p(3, 3);
  p << 0.5, 0.5, 0.0, 0.2, 0.4, 0.4, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  CHECK(argmax_rows(p) == LabelVector{0, 1, 0});
}

TEST_CASE("knn: k=1 reproduces the training labels; vote fractions") {
  const auto train = blobs(15, 2, 3, 1.0, 1.0, 5);
  auto cfg = quick_config();
  cfg.knn_k = 1;
  CHECK(fit(Family::KNN, train.x, train.y, 2, cfg)->predict(train.x) == train.y);

  Matrix x(4, 1);
  x << 0.0, 1.0, 2.0, 10.0;
  const LabelVector y = {0, 0, 1, 1};
  cfg.knn_k = 3;
  const auto model = fit(Family::KNN, x, y, 2, cfg);
  Matrix q(1, 1);
  q << 0.9;  // neighbours 1.0 (A), 0.0 (A), 2.0 (B)
  const Matrix p = model->predict_proba(q);
  CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("naive bayes: equal-variance midpoint is a coin flip; location shift invariance") {
  Matrix x(4, 1);
  x << -1.0, -3.0, 1.0, 3.0;
  const LabelVector y = {0, 0, 1, 1};
  const auto model = fit(Family::NB, x, y, 2, quick_config());
  Matrix mid(1, 1);
  mid << 0.0;
  CHECK(model->predict_proba(mid)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  const auto train = blobs(20, 3, 4, 2.0, 1.0, 6);
  const auto test = blobs(10, 3, 4, 2.0, 1.0, 7);
  const Matrix shift = Matrix::Constant(1, 4, 37.5);
  Matrix shifted_train = train.x.rowwise() + shift.row(0);
  Matrix shifted_test = test.x.rowwise() + shift.row(0);
  const Matrix a = fit(Family::NB, train.x, train.y, 3, quick_config())->predict_proba(test.x);
  const Matrix b = fit(Family::NB, shifted_train, train.y, 3, quick_config())->predict_proba(shifted_test);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("logistic regression: probability is monotone along the separating axis; loss never increases") {
  Matrix x(40, 1);
  LabelVector y;
  std::mt19937_64 gen(8);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const bool positive = i >= 20;
    x(i, 0) = (positive ? 1.0 : -1.0) + noise(gen);
    y.push_back(positive ? 1 : 0);
  }
  const auto model = fit(Family::LR, x, y, 2, quick_config());
  Matrix grid(50, 1);
  for (Eigen::Index i = 0; i < 50; ++i) grid(i, 0) = -5.0 + 0.2 * static_cast<double>(i);
  const Matrix p = model->predict_proba(grid);
  for (Eigen::Index i = 1; i < 50; ++i) CHECK(p(i, 1) >= p(i - 1, 1));
  CHECK(p(49, 1) > 0.9);
  CHECK(p(0, 1) < 0.1);

  const auto& history = lr_loss_history(*model);
  REQUIRE(history.size() >= 2);
  for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] + 1e-12);
  CHECK_THROWS_AS(lr_loss_history(*fit(Family::NB, x, y, 2, quick_config())), ConfigError);
}

TEST_CASE("decision tree: splits at the midpoint of a gap and fits training data exactly") {
  Matrix x(6, 1);
  x << 0.0, 1.0, 2.0, 7.0, 8.0, 9.0;
  const LabelVector y = {0, 0, 0, 1, 1, 1};
  const auto model = fit(Family::DT, x, y, 2, quick_config());
  const auto& nodes = tree_nodes(*model);
  REQUIRE(nodes.size() == 3);
  CHECK(nodes.feature[0] == 0);
  CHECK(nodes.threshold[0] == 4.5);
  CHECK(nodes.depth() == 1);

  const auto data = blobs(30, 3, 5, 1.0, 1.0, 9);
  const auto deep = fit(Family::DT, data.x, data.y, 3, quick_config());
  CHECK(accuracy(deep->predict(data.x), data.y) == 1.0);
}

TEST_CASE("decision tree: root split matches exhaustive Gini search") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = blobs(12, 3, 4, 1.0, 1.0, 100 + seed);
    const auto model = fit(Family::DT, data.x, data.y, 3, quick_config());
    const auto& nodes = tree_nodes(*model);
    REQUIRE(nodes.feature[0] >= 0);
    std::vector<double> left(3, 0.0), right(3, 0.0);
    for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
      (data.x(r, nodes.feature[0]) <= nodes.threshold[0] ? left : right)[static_cast<std::size_t>(data.y[static_cast<std::size_t>(r)])] += 1.0;
    }
    const double nl = left[0] + left[1] + left[2];
    const double n = static_cast<double>(data.x.rows());
    const double chosen = nl / n * gini(left) + (n - nl) / n * gini(right);
    CAPTURE(seed);
    CHECK(chosen == doctest::Approx(best_split_impurity(data.x, data.y, 3)).epsilon(1e-12));
  }
}

TEST_CASE("decision tree: max depth is honoured") {
  const auto data = blobs(30, 3, 5, 0.5, 1.0, 10);
  auto cfg = quick_config();
  cfg.dt_max_depth = 2;
  CHECK(tree_nodes(*fit(Family::DT, data.x, data.y, 3, cfg)).depth() <= 2);
}

TEST_CASE("random forest with one full-feature tree and no bootstrap equals the decision tree") {
  const auto train = blobs(20, 3, 4, 1.0, 1.0, 11);
  const auto test = blobs(20, 3, 4, 1.0, 1.0, 12);
  auto cfg = quick_config();
  cfg.rf_trees = 1;
  cfg.rf_bootstrap = false;
  cfg.rf_max_features = 4;
  const auto rf = fit(Family::RF, train.x, train.y, 3, cfg);
  const auto dt = fit(Family::DT, train.x, train.y, 3, cfg);
  CHECK(rf->predict_proba(test.x) == dt->predict_proba(test.x));
  CHECK(tree_nodes(*rf, 0).size() == tree_nodes(*dt).size());
  CHECK_THROWS_AS(tree_nodes(*dt, 1), ConfigError);
}

TEST_CASE("fitting is deterministic in the seed") {
  const auto train = blobs(20, 3, 4, 1.0, 1.0, 13);
  const auto test = blobs(10, 3, 4, 1.0, 1.0, 14);
  for (auto family : {Family::RF, Family::MLP}) {
    CAPTURE(to_string(family));
    const Matrix a = fit(family, train.x, train.y, 3, quick_config())->predict_proba(test.x);
    const Matrix b = fit(family, train.x, train.y, 3, quick_config())->predict_proba(test.x);
    CHECK(a == b);
  }
}

TEST_CASE("save and load reproduce predictions exactly") {
  const auto train = blobs(20, 3, 4, 1.0, 1.0, 15);
  const auto test = blobs(10, 3, 4, 1.0, 1.0, 16);
  const auto dir = oracle::scratch_dir("classify");
  for (auto family : all_families()) {
    CAPTURE(to_string(family));
    const auto model = fit(family, train.x, train.y, 3, quick_config());
    const auto path = dir / (std::string(to_string(family)) + ".model");
    model->save(path);
    const auto back = load_classifier(path);
    CHECK(back->family() == family);
    CHECK(back->predict_proba(test.x) == model->predict_proba(test.x));
  }
}

TEST_CASE("input validation") {
  const auto data = blobs(5, 2, 3, 3.0, 1.0, 17);
  const auto cfg = quick_config();
  CHECK_THROWS_AS(fit(Family::NB, data.x, LabelVector(3, 0), 2, cfg), ShapeError);
  CHECK_THROWS_AS(fit(Family::NB, data.x, data.y, 1, cfg), ConfigError);
  CHECK_THROWS_AS(fit(Family::NB, data.x, data.y, 3, cfg), ValidationError);  // class 2 empty
  LabelVector bad = data.y;
  bad[0] = 7;
  CHECK_THROWS_AS(fit(Family::NB, data.x, bad, 2, cfg), ValidationError);
  Matrix nan_x = data.x;
  nan_x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit(Family::NB, nan_x, data.y, 2, cfg), NumericError);

  const auto model = fit(Family::KNN, data.x, data.y, 2, cfg);
  CHECK_THROWS_AS(model->predict(Matrix::Zero(2, 4)), ShapeError);
  CHECK_THROWS_AS(model->predict(nan_x), NumericError);

  auto bad_cfg = cfg;
  bad_cfg.knn_k = 0;
  CHECK_THROWS_AS(bad_cfg.validate(), ConfigError);
  bad_cfg = cfg;
  bad_cfg.dt_max_depth = 0;
  CHECK_THROWS_AS(bad_cfg.validate(), ConfigError);
}

TEST_CASE("standardizer z-scores with training statistics") {
  Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s(x);
  const Matrix z = s.apply(x);
  CHECK(std::abs(z.col(0).mean()) <= 1e-12);
  CHECK((z.col(0).array().square().mean()) == doctest::Approx(1.0));
  CHECK(z.col(1).isZero());  // constant column is centred only
  Matrix q(1, 2);
  q << 2.5, 6.0;
  CHECK(s.apply(q)(0, 0) == doctest::Approx(0.0));
  CHECK(s.apply(q)(0, 1) == doctest::Approx(1.0));
}
