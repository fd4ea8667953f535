#pragma once

#include "seqgan/classify.hpp"
#include "seqgan/nn.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqgan::classify::detail {

class GaussianNaiveBayes final : public Classifier {
 public:
  GaussianNaiveBayes(Matrix means, Matrix variances, Vector log_priors);
  Family family() const noexcept override { return Family::NB; }
  static std::unique_ptr<Classifier> fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                         const ClassifierConfig& config);
  static std::unique_ptr<Classifier> read_from(const Container& c);

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  Matrix means_;
  Matrix variances_;
  Vector log_priors_;
};

class KNearestNeighbors final : public Classifier {
 public:
  KNearestNeighbors(Matrix x, LabelVector y, std::size_t n_classes, std::size_t k);
  Family family() const noexcept override { return Family::KNN; }
  static std::unique_ptr<Classifier> read_from(const Container& c);

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  Matrix x_;
  LabelVector y_;
  std::size_t k_;
};

class LogisticRegression final : public Classifier {
 public:
  LogisticRegression(Matrix weights, Vector bias, std::vector<double> history);
  Family family() const noexcept override { return Family::LR; }
  static std::unique_ptr<Classifier> fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                         const ClassifierConfig& config);
  static std::unique_ptr<Classifier> read_from(const Container& c);
  const std::vector<double>& history() const noexcept { return history_; }

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  Matrix weights_;  // n_classes x dim
  Vector bias_;
  std::vector<double> history_;
};

class MlpClassifier final : public Classifier {
 public:
  MlpClassifier(nn::Network net, std::size_t n_classes);
  Family family() const noexcept override { return Family::MLP; }
  static std::unique_ptr<Classifier> fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                         const ClassifierConfig& config);
  static std::unique_ptr<Classifier> read_from(const Container& c);

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  nn::Network net_;
};

struct TreeOptions {
  std::optional<std::size_t> max_depth;
  /// 0 = every feature at every split.
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

TreeNodes grow_tree(const Matrix& x, const LabelVector& y, std::span<const std::size_t> rows, std::size_t n_classes,
                    const TreeOptions& options);

void write_tree(Container& c, const TreeNodes& tree, const std::string& prefix);
TreeNodes read_tree(const Container& c, const std::string& prefix, std::size_t n_classes);

class DecisionTree final : public Classifier {
 public:
  DecisionTree(TreeNodes tree, std::size_t n_classes, std::size_t dim);
  Family family() const noexcept override { return Family::DT; }
  static std::unique_ptr<Classifier> fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                         const ClassifierConfig& config);
  static std::unique_ptr<Classifier> read_from(const Container& c);
  const TreeNodes& nodes() const noexcept { return tree_; }

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  TreeNodes tree_;
};

class RandomForest final : public Classifier {
 public:
  RandomForest(std::vector<TreeNodes> trees, std::size_t n_classes, std::size_t dim);
  Family family() const noexcept override { return Family::RF; }
  static std::unique_ptr<Classifier> fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                         const ClassifierConfig& config);
  static std::unique_ptr<Classifier> read_from(const Container& c);
  const std::vector<TreeNodes>& trees() const noexcept { return trees_; }

 protected:
  Matrix proba(const Matrix& rows) const override;
  void write_to(Container& c) const override;

 private:
  std::vector<TreeNodes> trees_;
};

}  // namespace seqgan::classify::detail
