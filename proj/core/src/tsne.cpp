#include "seqgan/tsne.hpp"

#include "seqgan/error.hpp"
#include "seqgan/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace seqgan::tsne {

namespace {

constexpr double kEntropyTolerance = 1e-5;  // bits
constexpr int kSearchSteps = 50;
constexpr double kQFloor = 1e-12;

Matrix squared_distances(const Matrix& x) {
  const Vector norms = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * x * x.transpose()).eval();
  d.colwise() += norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

/// Fills `row` with p_{j|i} for precision beta; returns the entropy in bits.
double conditional_row(const Matrix& d, Eigen::Index i, double beta, double shift, Vector& row) {
  double z = 0.0;
  double weighted = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    const double e = std::exp(-beta * (d(i, j) - shift));
    row[j] = e;
    z += e;
    weighted += e * (d(i, j) - shift);
  }
  row /= z;
  return (std::log(z) + beta * weighted / z) / std::log(2.0);
}

}  // namespace

Matrix joint_probabilities(const Matrix& x, double perplexity, std::vector<double>* achieved) {
  const auto n = x.rows();
  if (n < 2) throw ValidationError("t-SNE needs at least two points");
  const Matrix d = squared_distances(x);
  const double target = std::log2(perplexity);

  Matrix conditional = Matrix::Zero(n, n);
  if (achieved) achieved->assign(static_cast<std::size_t>(n), 0.0);
  Vector row(n);
  std::size_t misses = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double shift = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) shift = std::min(shift, d(i, j));
    }
    // Entropy falls as log(beta) grows; bisect on log(beta).
    double lo = -60.0;
    double hi = 60.0;
    double log_beta = 0.0;
    double entropy = conditional_row(d, i, std::exp(log_beta), shift, row);
    for (int step = 0; step < kSearchSteps && std::abs(entropy - target) > kEntropyTolerance; ++step) {
      (entropy > target ? lo : hi) = log_beta;
      log_beta = 0.5 * (lo + hi);
      entropy = conditional_row(d, i, std::exp(log_beta), shift, row);
    }
    if (std::abs(entropy - target) > kEntropyTolerance) ++misses;
    conditional.row(i) = row.transpose();
    if (achieved) (*achieved)[static_cast<std::size_t>(i)] = std::exp2(entropy);
  }
  if (misses > 0) spdlog::warn("t-SNE: bandwidth search missed the perplexity target for {} point(s)", misses);

  Matrix p = (conditional + conditional.transpose()) / (2.0 * static_cast<double>(n));
  return p;
}

double kl_divergence(const Matrix& p, const Matrix& y) {
  const Matrix num = (1.0 + squared_distances(y).array()).inverse().matrix();
  double z = num.sum() - static_cast<double>(num.rows());  // drop the diagonal ones
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / z, kQFloor);
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  }
  return std::max(kl, 0.0);
}

Embedding2D fit_tsne(const Matrix& x, const LabelVector& labels, const TsneConfig& config) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ShapeError("t-SNE: labels do not match rows");
  if (config.max_points < 10) throw ConfigError("t-SNE: max_points must be at least 10");
  if (config.output_dim == 0) throw ConfigError("t-SNE: output dimension must be positive");
  if (!x.allFinite()) throw NumericError("t-SNE: non-finite input");

  Embedding2D out;
  out.source_rows.resize(static_cast<std::size_t>(x.rows()));
  std::iota(out.source_rows.begin(), out.source_rows.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, "tsne"));
  if (out.source_rows.size() > config.max_points) {
    rng.shuffle(std::span(out.source_rows));
    out.source_rows.resize(config.max_points);
    std::sort(out.source_rows.begin(), out.source_rows.end());
  }
  const auto n = static_cast<Eigen::Index>(out.source_rows.size());
  if (n < 10) throw ValidationError("t-SNE needs at least 10 points");
  if (!(config.perplexity > 1.0 && config.perplexity < static_cast<double>(n - 1) / 3.0)) {
    throw ConfigError("t-SNE: perplexity " + std::to_string(config.perplexity) + " is infeasible for " +
                      std::to_string(n) + " points (need 1 < perplexity < (n - 1) / 3)");
  }

  Matrix sample(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    sample.row(i) = x.row(static_cast<Eigen::Index>(out.source_rows[static_cast<std::size_t>(i)]));
    out.point_labels.push_back(labels[out.source_rows[static_cast<std::size_t>(i)]]);
  }

  const Matrix p = joint_probabilities(sample, config.perplexity, &out.achieved_perplexity);
  const auto dims = static_cast<Eigen::Index>(config.output_dim);
  Matrix y(n, dims);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal(0.0, 1e-2);  // variance 1e-4
  Matrix update = Matrix::Zero(n, dims);
  Matrix gains = Matrix::Ones(n, dims);
  Matrix grad(n, dims);

  out.kl_trace.reserve(config.iterations);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
    const double momentum = it < config.momentum_switch ? 0.5 : 0.8;

    Matrix num = (1.0 + squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();

    // dC/dy_i = 4 sum_j (e * p_ij - q_ij) num_ij (y_i - y_j)
    const Matrix q = (num / z).cwiseMax(kQFloor);
    const Matrix w = ((exaggeration * p) - q).cwiseProduct(num);
    const Vector w_rows = w.rowwise().sum();
    grad = 4.0 * (w_rows.asDiagonal() * y - w * y);

    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / q(i, j));
      }
    }
    out.kl_trace.push_back(std::max(kl, 0.0));

    for (Eigen::Index k = 0; k < gains.size(); ++k) {
      double& g = gains.data()[k];
      const bool same_sign = (grad.data()[k] > 0.0) == (update.data()[k] > 0.0);
      g = same_sign ? std::max(g * 0.8, 0.01) : g + 0.2;
    }
    update = momentum * update - config.learning_rate * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();
    if (!y.allFinite()) throw NumericError("t-SNE diverged at iteration " + std::to_string(it));
  }

  out.coordinates = std::move(y);
  return out;
}

Embedding2D fit_tsne(const featurize::FeatureMatrix& matrix, const TsneConfig& config) {
  return fit_tsne(matrix.values, matrix.labels, config);
}

void Embedding2D::write_csv(std::ostream& out, const std::vector<std::string>& class_names) const {
  out << std::setprecision(10);
  for (Eigen::Index d = 0; d < coordinates.cols(); ++d) out << (d == 0 ? "x" : d == 1 ? "y" : "z" + std::to_string(d)) << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    for (Eigen::Index d = 0; d < coordinates.cols(); ++d) out << coordinates(i, d) << ',';
    const auto label = point_labels[static_cast<std::size_t>(i)];
    if (static_cast<std::size_t>(label) < class_names.size()) {
      out << class_names[static_cast<std::size_t>(label)];
    } else {
      out << label;
    }
    out << '\n';
  }
}

void Embedding2D::write_kl_trace(std::ostream& out) const {
  out << std::setprecision(10) << "iteration,kl\n";
  for (std::size_t i = 0; i < kl_trace.size(); ++i) out << i << ',' << kl_trace[i] << '\n';
}

}  // namespace seqgan::tsne
