#include "classify_impl.hpp"

#include "seqgan/error.hpp"
#include "seqgan/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace seqgan::classify {

std::string_view to_string(Family family) noexcept {
  switch (family) {
    case Family::NB:
      return "nb";
    case Family::MLP:
      return "mlp";
    case Family::KNN:
      return "knn";
    case Family::RF:
      return "rf";
    case Family::LR:
      return "lr";
    case Family::DT:
      return "dt";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto f : all_families()) {
    if (to_string(f) == lower) return f;
  }
  throw ConfigError("unknown classifier '" + std::string(name) + "'");
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families = {Family::NB, Family::MLP, Family::KNN, Family::RF, Family::LR, Family::DT};
  return families;
}

void ClassifierConfig::validate() const {
  if (knn_k == 0) throw ConfigError("knn_k must be at least 1");
  if (rf_trees == 0) throw ConfigError("rf_trees must be at least 1");
  if (dt_max_depth && *dt_max_depth == 0) throw ConfigError("dt_max_depth must be positive");
  if (mlp_epochs == 0 || mlp_batch == 0 || !(mlp_lr > 0.0)) throw ConfigError("invalid MLP training settings");
  if (lr_rate < 0.0) throw ConfigError("lr_rate must be non-negative");
  if (!(nb_var_smoothing >= 0.0)) throw ConfigError("nb_var_smoothing must be non-negative");
}

LabelVector argmax_rows(const Matrix& proba) {
  LabelVector out(static_cast<std::size_t>(proba.rows()));
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < proba.cols(); ++j) {
      if (proba(i, j) > proba(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

Matrix Classifier::predict_proba(const Matrix& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != feature_dim_) {
    throw ShapeError(std::string(to_string(family())) + ": expected " + std::to_string(feature_dim_) +
                     " features, got " + std::to_string(rows.cols()));
  }
  if (!rows.allFinite()) throw NumericError("classifier input contains non-finite values");
  return proba(rows);
}

LabelVector Classifier::predict(const Matrix& rows) const { return argmax_rows(predict_proba(rows)); }

void Classifier::save(const std::filesystem::path& path) const {
  Container c("classifier");
  c.meta()["family"] = to_string(family());
  c.meta()["n_classes"] = n_classes_;
  c.meta()["feature_dim"] = feature_dim_;
  write_to(c);
  c.save(path);
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path) {
  const auto c = Container::load(path, "classifier");
  switch (family_from_string(c.meta().at("family").get<std::string>())) {
    case Family::NB:
      return detail::GaussianNaiveBayes::read_from(c);
    case Family::KNN:
      return detail::KNearestNeighbors::read_from(c);
    case Family::LR:
      return detail::LogisticRegression::read_from(c);
    case Family::MLP:
      return detail::MlpClassifier::read_from(c);
    case Family::DT:
      return detail::DecisionTree::read_from(c);
    case Family::RF:
      return detail::RandomForest::read_from(c);
  }
  throw IoError("unreachable classifier family");
}

std::unique_ptr<Classifier> fit(Family family, const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                const ClassifierConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ShapeError("fit: row count and label count differ");
  if (x.cols() == 0) throw ShapeError("fit: zero-width features");
  if (n_classes < 2) throw ConfigError("fit: at least two classes are required");
  if (!x.allFinite()) throw NumericError("fit: non-finite features");
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) throw ValidationError("fit: label out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) throw ValidationError("fit: class " + std::to_string(c) + " has no training rows");
  }

  switch (family) {
    case Family::NB:
      return detail::GaussianNaiveBayes::fit(x, y, n_classes, config);
    case Family::KNN:
      return std::make_unique<detail::KNearestNeighbors>(x, y, n_classes, config.knn_k);
    case Family::LR:
      return detail::LogisticRegression::fit(x, y, n_classes, config);
    case Family::MLP:
      return detail::MlpClassifier::fit(x, y, n_classes, config);
    case Family::DT:
      return detail::DecisionTree::fit(x, y, n_classes, config);
    case Family::RF:
      return detail::RandomForest::fit(x, y, n_classes, config);
  }
  throw ConfigError("unknown classifier family");
}

std::unique_ptr<Classifier> fit(Family family, const featurize::FeatureMatrix& train, const ClassifierConfig& config) {
  return fit(family, train.values, train.labels, train.n_classes(), config);
}

Standardizer::Standardizer(const Matrix& fit_rows) {
  const double n = static_cast<double>(std::max<Eigen::Index>(fit_rows.rows(), 1));
  mean_ = fit_rows.colwise().mean();
  const RowVector var = (fit_rows.rowwise() - mean_).array().square().colwise().sum() / n;
  scale_ = var.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; });
}

Matrix Standardizer::apply(const Matrix& rows) const {
  return ((rows.rowwise() - mean_).array().rowwise() * scale_.array()).matrix();
}

const TreeNodes& tree_nodes(const Classifier& model, std::size_t index) {
  if (const auto* dt = dynamic_cast<const detail::DecisionTree*>(&model)) {
    if (index != 0) throw ConfigError("a decision tree has a single tree");
    return dt->nodes();
  }
  if (const auto* rf = dynamic_cast<const detail::RandomForest*>(&model)) return rf->trees().at(index);
  throw ConfigError("model is not tree-based");
}

const std::vector<double>& lr_loss_history(const Classifier& model) {
  if (const auto* lr = dynamic_cast<const detail::LogisticRegression*>(&model)) return lr->history();
  throw ConfigError("model is not a logistic regression");
}

namespace detail {

namespace {

std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> flat(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix matrix_of(const Container::Array& a) {
  if (a.shape.size() != 2) throw IoError("classifier: '" + a.name + "' is not a matrix");
  return Eigen::Map<const Matrix>(a.data.data(), static_cast<Eigen::Index>(a.shape[0]),
                                  static_cast<Eigen::Index>(a.shape[1]));
}

Vector vector_of(const Container::Array& a) {
  return Eigen::Map<const Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

/// exp-normalizes each row of log-scores.
Matrix softmax_rows(Matrix scores) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double peak = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - peak).exp().matrix();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

Matrix one_hot(const LabelVector& y, std::size_t n_classes) {
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(n_classes));
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

GaussianNaiveBayes::GaussianNaiveBayes(Matrix means, Matrix variances, Vector log_priors)
    : Classifier(static_cast<std::size_t>(means.rows()), static_cast<std::size_t>(means.cols())),
      means_(std::move(means)),
      variances_(std::move(variances)),
      log_priors_(std::move(log_priors)) {}

std::unique_ptr<Classifier> GaussianNaiveBayes::fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                                    const ClassifierConfig& config) {
  const auto d = x.cols();
  const auto c = static_cast<Eigen::Index>(n_classes);
  Matrix means = Matrix::Zero(c, d);
  Matrix variances = Matrix::Zero(c, d);
  Vector counts = Vector::Zero(c);
  for (std::size_t i = 0; i < y.size(); ++i) {
    means.row(y[i]) += x.row(static_cast<Eigen::Index>(i));
    counts[y[i]] += 1.0;
  }
  for (Eigen::Index k = 0; k < c; ++k) means.row(k) /= counts[k];
  for (std::size_t i = 0; i < y.size(); ++i) {
    variances.row(y[i]) += (x.row(static_cast<Eigen::Index>(i)) - means.row(y[i])).array().square().matrix();
  }
  for (Eigen::Index k = 0; k < c; ++k) variances.row(k) /= counts[k];

  const RowVector overall = (x.rowwise() - x.colwise().mean()).array().square().colwise().mean();
  double floor = config.nb_var_smoothing * overall.maxCoeff();
  if (!(floor > 0.0)) floor = std::numeric_limits<double>::min();
  variances.array() += floor;

  const Vector log_priors = (counts / static_cast<double>(y.size())).array().log();
  return std::make_unique<GaussianNaiveBayes>(std::move(means), std::move(variances), log_priors);
}

Matrix GaussianNaiveBayes::proba(const Matrix& rows) const {
  const auto c = means_.rows();
  Matrix scores(rows.rows(), c);
  const Vector log_norm = -0.5 * (2.0 * std::numbers::pi * variances_.array()).log().rowwise().sum();
  const Matrix inv_var = variances_.cwiseInverse();
  for (Eigen::Index k = 0; k < c; ++k) {
    const Vector quad = ((rows.rowwise() - means_.row(k)).array().square().rowwise() * inv_var.row(k).array())
                            .rowwise()
                            .sum();
    scores.col(k) = (log_priors_[k] + log_norm[k] - 0.5 * quad.array()).matrix();
  }
  return softmax_rows(std::move(scores));
}

void GaussianNaiveBayes::write_to(Container& c) const {
  c.add("means", {static_cast<std::size_t>(means_.rows()), static_cast<std::size_t>(means_.cols())}, flat(means_));
  c.add("variances", {static_cast<std::size_t>(variances_.rows()), static_cast<std::size_t>(variances_.cols())},
        flat(variances_));
  c.add("log_priors", flat(log_priors_));
}

std::unique_ptr<Classifier> GaussianNaiveBayes::read_from(const Container& c) {
  return std::make_unique<GaussianNaiveBayes>(matrix_of(c.array("means")), matrix_of(c.array("variances")),
                                              vector_of(c.array("log_priors")));
}

// ---------------------------------------------------------------------------
// k-nearest neighbors

KNearestNeighbors::KNearestNeighbors(Matrix x, LabelVector y, std::size_t n_classes, std::size_t k)
    : Classifier(n_classes, static_cast<std::size_t>(x.cols())), x_(std::move(x)), y_(std::move(y)), k_(k) {}

Matrix KNearestNeighbors::proba(const Matrix& rows) const {
  const std::size_t n = y_.size();
  const std::size_t k = std::min(k_, n);
  Matrix out = Matrix::Zero(rows.rows(), static_cast<Eigen::Index>(n_classes()));
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (Eigen::Index q = 0; q < rows.rows(); ++q) {
    const Vector d = (x_.rowwise() - rows.row(q)).rowwise().squaredNorm();
    for (std::size_t i = 0; i < n; ++i) dist[i] = {d[static_cast<Eigen::Index>(i)], i};
    // Pair order breaks equal distances toward the lower training index.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t j = 0; j < k; ++j) out(q, y_[dist[j].second]) += 1.0 / static_cast<double>(k);
  }
  return out;
}

void KNearestNeighbors::write_to(Container& c) const {
  c.meta()["k"] = k_;
  c.add("x", {static_cast<std::size_t>(x_.rows()), static_cast<std::size_t>(x_.cols())}, flat(x_));
  c.add("y", std::vector<double>(y_.begin(), y_.end()));
}

std::unique_ptr<Classifier> KNearestNeighbors::read_from(const Container& c) {
  const auto& ys = c.array("y").data;
  LabelVector y(ys.begin(), ys.end());
  return std::make_unique<KNearestNeighbors>(matrix_of(c.array("x")), std::move(y),
                                             c.meta().at("n_classes").get<std::size_t>(),
                                             c.meta().at("k").get<std::size_t>());
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression

LogisticRegression::LogisticRegression(Matrix weights, Vector bias, std::vector<double> history)
    : Classifier(static_cast<std::size_t>(weights.rows()), static_cast<std::size_t>(weights.cols())),
      weights_(std::move(weights)),
      bias_(std::move(bias)),
      history_(std::move(history)) {}

namespace {

/// Largest eigenvalue of [X 1]^T [X 1] / n by power iteration.
double design_spectral_norm(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  Vector v = Vector::Ones(x.cols() + 1);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Vector xv = x * v.head(x.cols()) + Vector::Constant(x.rows(), v[x.cols()]);
    Vector w(x.cols() + 1);
    w.head(x.cols()) = x.transpose() * xv / n;
    w[x.cols()] = xv.sum() / n;
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-10 * next) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace

std::unique_ptr<Classifier> LogisticRegression::fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                                    const ClassifierConfig& config) {
  const auto c = static_cast<Eigen::Index>(n_classes);
  const double n = static_cast<double>(x.rows());
  const Matrix targets = one_hot(y, n_classes);

  double step = config.lr_rate;
  if (step == 0.0) {
    // Softmax cross-entropy is L-smooth with L <= lambda_max([X 1]^T [X 1] / n) / 2.
    const double lipschitz = 0.5 * design_spectral_norm(x);
    step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  }

  Matrix w = Matrix::Zero(c, x.cols());
  Vector b = Vector::Zero(c);
  auto forward = [&](Matrix& p) {
    Matrix logits = x * w.transpose();
    logits.rowwise() += b.transpose();
    p = softmax_rows(std::move(logits));
    return nn::loss_value(p, targets, nn::Loss::CategoricalCrossEntropy);
  };

  Matrix p;
  std::vector<double> history{forward(p)};
  for (std::size_t epoch = 0; epoch < config.lr_epochs; ++epoch) {
    const Matrix g = (p - targets) / n;
    w.noalias() -= step * (g.transpose() * x);
    b -= step * g.colwise().sum().transpose();
    history.push_back(forward(p));
    if (std::abs(history[history.size() - 2] - history.back()) < config.lr_tol) break;
  }
  return std::make_unique<LogisticRegression>(std::move(w), std::move(b), std::move(history));
}

Matrix LogisticRegression::proba(const Matrix& rows) const {
  Matrix logits = rows * weights_.transpose();
  logits.rowwise() += bias_.transpose();
  return softmax_rows(std::move(logits));
}

void LogisticRegression::write_to(Container& c) const {
  c.add("weights", {static_cast<std::size_t>(weights_.rows()), static_cast<std::size_t>(weights_.cols())},
        flat(weights_));
  c.add("bias", flat(bias_));
  c.add("loss_history", history_);
}

std::unique_ptr<Classifier> LogisticRegression::read_from(const Container& c) {
  return std::make_unique<LogisticRegression>(matrix_of(c.array("weights")), vector_of(c.array("bias")),
                                              c.array("loss_history").data);
}

// ---------------------------------------------------------------------------
// Multilayer perceptron

MlpClassifier::MlpClassifier(nn::Network net, std::size_t n_classes)
    : Classifier(n_classes, net.input_dim()), net_(std::move(net)) {}

std::unique_ptr<Classifier> MlpClassifier::fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                               const ClassifierConfig& config) {
  nn::Network net = nn::Network::build(
      {static_cast<std::size_t>(x.cols()), config.mlp_hidden, n_classes, nn::Head::Softmax, false},
      derive_seed(config.seed, "mlp.init"));
  nn::AdamState adam(nn::AdamConfig{config.mlp_lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(config.seed, "mlp.shuffle"));
  const Matrix targets = one_hot(y, n_classes);

  const std::size_t n = y.size();
  const std::size_t batch = std::min(config.mlp_batch, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.mlp_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      Matrix xb(static_cast<Eigen::Index>(end - start), x.cols());
      Matrix tb(static_cast<Eigen::Index>(end - start), targets.cols());
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
        tb.row(static_cast<Eigen::Index>(i - start)) = targets.row(static_cast<Eigen::Index>(order[i]));
      }
      net.forward(xb, nn::Mode::Train);
      epoch_loss += net.backward_loss(tb, nn::Loss::CategoricalCrossEntropy) * static_cast<double>(end - start);
      adam.step(net.parameters());
    }
    epoch_loss /= static_cast<double>(n);
    if (epoch_loss < best - config.mlp_tol) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= config.mlp_patience) {
      break;
    }
  }
  return std::make_unique<MlpClassifier>(std::move(net), n_classes);
}

Matrix MlpClassifier::proba(const Matrix& rows) const { return net_.infer(rows); }

void MlpClassifier::write_to(Container& c) const { net_.write_to(c, "mlp."); }

std::unique_ptr<Classifier> MlpClassifier::read_from(const Container& c) {
  return std::make_unique<MlpClassifier>(nn::Network::read_from(c, "mlp."),
                                         c.meta().at("n_classes").get<std::size_t>());
}

}  // namespace detail
}  // namespace seqgan::classify
