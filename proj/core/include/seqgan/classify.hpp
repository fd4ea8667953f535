#pragma once

#include "seqgan/container.hpp"
#include "seqgan/featurize.hpp"
#include "seqgan/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace seqgan::classify {

enum class Family { NB, MLP, KNN, RF, LR, DT };

std::string_view to_string(Family family) noexcept;
/// "nb", "mlp", "knn", "rf", "lr", "dt" (case-insensitive).
Family family_from_string(std::string_view name);
/// All six families in table order.
const std::vector<Family>& all_families();

struct ClassifierConfig {
  std::size_t knn_k = 3;

  std::size_t rf_trees = 100;
  /// Features tried per split; 0 means floor(sqrt(dim)).
  std::size_t rf_max_features = 0;
  bool rf_bootstrap = true;

  std::optional<std::size_t> dt_max_depth;

  std::vector<std::size_t> mlp_hidden = {100};
  std::size_t mlp_epochs = 200;
  std::size_t mlp_batch = 200;
  double mlp_lr = 1e-3;
  /// Stop once the epoch loss fails to improve by mlp_tol for this many epochs.
  std::size_t mlp_patience = 10;
  double mlp_tol = 1e-4;

  std::size_t lr_epochs = 500;
  /// Gradient-descent step; 0 selects 1/L for the loss's smoothness bound L.
  double lr_rate = 0.0;
  /// Early stop when the full-batch loss changes by less than this.
  double lr_tol = 1e-8;

  /// Variance floor factor, relative to the largest feature variance.
  double nb_var_smoothing = 1e-9;

  std::uint64_t seed = 0;

  void validate() const;
};

/// A fitted model of one family.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Family family() const noexcept = 0;
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }

  /// n x n_classes; every row is a probability distribution.
  Matrix predict_proba(const Matrix& rows) const;

  /// Row-wise argmax of predict_proba; ties go to the lower class id.
  LabelVector predict(const Matrix& rows) const;

  void save(const std::filesystem::path& path) const;

 protected:
  Classifier(std::size_t n_classes, std::size_t feature_dim) : n_classes_(n_classes), feature_dim_(feature_dim) {}

  virtual Matrix proba(const Matrix& rows) const = 0;
  virtual void write_to(Container& container) const = 0;

 private:
  std::size_t n_classes_;
  std::size_t feature_dim_;
};

/// Fits `family` on rows X with labels y in [0, n_classes). Every class must
/// have at least one row.
std::unique_ptr<Classifier> fit(Family family, const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                const ClassifierConfig& config);

std::unique_ptr<Classifier> fit(Family family, const featurize::FeatureMatrix& train, const ClassifierConfig& config);

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path);

/// Row-wise argmax, lower index on ties.
LabelVector argmax_rows(const Matrix& proba);

/// Per-feature z-scoring fitted on one matrix and applied to others.
/// Zero-variance features are centered only.
class Standardizer {
 public:
  explicit Standardizer(const Matrix& fit_rows);
  Matrix apply(const Matrix& rows) const;

 private:
  RowVector mean_;
  RowVector scale_;
};

// ---------------------------------------------------------------------------
// Family-specific views, exposed for tests and inspection.

/// CART node table. Leaves have feature == -1.
struct TreeNodes {
  std::vector<int> feature;
  std::vector<double> threshold;  // go left when x[feature] <= threshold
  std::vector<int> left;
  std::vector<int> right;
  Matrix distribution;  // nodes x n_classes, training-class fractions

  std::size_t size() const noexcept { return feature.size(); }
  std::size_t depth() const;
  /// Index of the leaf reached by `row`.
  std::size_t leaf_of(const double* row) const;
};

/// Node table of a fitted DT, or of tree `index` of a fitted RF.
const TreeNodes& tree_nodes(const Classifier& model, std::size_t index = 0);

/// Full-batch loss after each LR epoch (the first entry is the initial loss).
const std::vector<double>& lr_loss_history(const Classifier& model);

}  // namespace seqgan::classify
