#pragma once

#include "seqgan/featurize.hpp"
#include "seqgan/types.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace seqgan::tsne {

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  /// Momentum 0.5 before this iteration, 0.8 from it on.
  std::size_t momentum_switch = 250;
  std::size_t output_dim = 2;
  /// Larger inputs are uniformly subsampled to this many rows.
  std::size_t max_points = 2000;
  std::uint64_t seed = 0;
};

struct Embedding2D {
  Matrix coordinates;  // n x output_dim
  LabelVector point_labels;
  /// Input row of each point (after subsampling).
  std::vector<std::size_t> source_rows;
  /// KL(P || Q) at each iteration, before that iteration's update.
  std::vector<double> kl_trace;
  /// Perplexity reached by each point's bandwidth search.
  std::vector<double> achieved_perplexity;

  /// "x,y,label" rows (class names when given, else ids).
  void write_csv(std::ostream& out, const std::vector<std::string>& class_names = {}) const;
  /// "iteration,kl" rows.
  void write_kl_trace(std::ostream& out) const;
};

/// Symmetrized affinities P (n x n, zero diagonal, sums to 1). Each row's
/// Gaussian bandwidth is bisected in log space until the conditional
/// entropy is within 1e-5 bits of log2(perplexity), at most 50 steps.
Matrix joint_probabilities(const Matrix& x, double perplexity, std::vector<double>* achieved_perplexity = nullptr);

/// KL(P || Q) for low-dimensional points y under the Student-t kernel.
double kl_divergence(const Matrix& p, const Matrix& y);

/// Exact O(n^2) t-SNE.
Embedding2D fit_tsne(const Matrix& x, const LabelVector& labels, const TsneConfig& config);
Embedding2D fit_tsne(const featurize::FeatureMatrix& matrix, const TsneConfig& config);

}  // namespace seqgan::tsne
