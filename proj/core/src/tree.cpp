#include "classify_impl.hpp"

#include "seqgan/error.hpp"
#include "seqgan/parallel.hpp"
#include "seqgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace seqgan::classify {

std::size_t TreeNodes::depth() const {
  std::function<std::size_t(int)> walk = [&](int node) -> std::size_t {
    const auto i = static_cast<std::size_t>(node);
    if (feature[i] < 0) return 0;
    return 1 + std::max(walk(left[i]), walk(right[i]));
  };
  return feature.empty() ? 0 : walk(0);
}

std::size_t TreeNodes::leaf_of(const double* row) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(row[feature[node]] <= threshold[node] ? left[node] : right[node]);
  }
  return node;
}

namespace detail {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum_c l_c^2 / n_l + sum_c r_c^2 / n_r; larger is purer
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const LabelVector& y, std::size_t n_classes, const TreeOptions& options)
      : x_(x), y_(y), n_classes_(n_classes), options_(options), rng_(derive_seed(options.seed, "tree")) {
    const auto d = static_cast<std::size_t>(x.cols());
    use_subset_ = options.max_features > 0 && options.max_features < d;
    all_features_.resize(d);
    std::iota(all_features_.begin(), all_features_.end(), 0);
  }

  TreeNodes build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    TreeNodes out;
    out.feature = std::move(feature_);
    out.threshold = std::move(threshold_);
    out.left = std::move(left_);
    out.right = std::move(right_);
    out.distribution.resize(static_cast<Eigen::Index>(distribution_.size()), static_cast<Eigen::Index>(n_classes_));
    for (std::size_t i = 0; i < distribution_.size(); ++i) {
      for (std::size_t c = 0; c < n_classes_; ++c) {
        out.distribution(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = distribution_[i][c];
      }
    }
    return out;
  }

 private:
  int grow(std::vector<std::size_t> rows, std::size_t depth) {
    const int id = static_cast<int>(feature_.size());
    feature_.push_back(-1);
    threshold_.push_back(0.0);
    left_.push_back(-1);
    right_.push_back(-1);

    std::vector<double> counts(n_classes_, 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y_[r])] += 1.0;
    std::vector<double> dist = counts;
    for (auto& v : dist) v /= static_cast<double>(rows.size());
    distribution_.push_back(std::move(dist));

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
    const bool depth_cap = options_.max_depth && depth >= *options_.max_depth;
    if (pure || rows.size() < 2 || depth_cap) return id;

    const Split split = best_split(rows, counts);
    if (split.feature < 0) return id;  // every feature constant here

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (auto r : rows) {
      (x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const auto i = static_cast<std::size_t>(id);
    feature_[i] = split.feature;
    threshold_[i] = split.threshold;
    const int l = grow(std::move(left_rows), depth + 1);
    left_[i] = l;
    const int r = grow(std::move(right_rows), depth + 1);
    right_[i] = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, const std::vector<double>& counts) {
    Split best;
    if (!use_subset_) {
      for (auto f : all_features_) consider(f, rows, counts, best);
      return best;
    }
    // Partial Fisher-Yates draw, scanned in ascending feature order so the
    // lowest-index rule for equal splits still holds.
    std::vector<std::size_t> pool = all_features_;
    for (std::size_t j = 0; j < options_.max_features; ++j) {
      const auto pick = j + static_cast<std::size_t>(rng_.index(pool.size() - j));
      std::swap(pool[j], pool[pick]);
    }
    std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(options_.max_features));
    std::sort(chosen.begin(), chosen.end());
    for (auto f : chosen) consider(f, rows, counts, best);
    if (best.feature >= 0) return best;
    // No valid split among the drawn features: keep searching the rest.
    std::vector<std::size_t> rest(pool.begin() + static_cast<std::ptrdiff_t>(options_.max_features), pool.end());
    std::sort(rest.begin(), rest.end());
    for (auto f : rest) {
      consider(f, rows, counts, best);
      if (best.feature >= 0) break;
    }
    return best;
  }

  void consider(std::size_t f, const std::vector<std::size_t>& rows, const std::vector<double>& counts, Split& best) {
    const auto fi = static_cast<Eigen::Index>(f);
    const double first = x_(static_cast<Eigen::Index>(rows.front()), fi);
    bool constant = true;
    for (auto r : rows) {
      if (x_(static_cast<Eigen::Index>(r), fi) != first) {
        constant = false;
        break;
      }
    }
    if (constant) return;

    values_.clear();
    for (auto r : rows) values_.emplace_back(x_(static_cast<Eigen::Index>(r), fi), r);
    std::sort(values_.begin(), values_.end());

    left_counts_.assign(n_classes_, 0.0);
    double left_sq = 0.0;
    double right_sq = 0.0;
    for (double c : counts) right_sq += c * c;
    const double n = static_cast<double>(rows.size());
    const double tolerance = 1e-12 * n;

    for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
      const auto c = static_cast<std::size_t>(y_[values_[i].second]);
      const double lc = left_counts_[c];
      const double rc = counts[c] - lc;
      left_sq += 2.0 * lc + 1.0;
      right_sq -= 2.0 * rc - 1.0;
      left_counts_[c] = lc + 1.0;
      if (values_[i].first == values_[i + 1].first) continue;

      const double nl = static_cast<double>(i + 1);
      const double score = left_sq / nl + right_sq / (n - nl);
      if (score > best.score + tolerance) {
        double mid = 0.5 * (values_[i].first + values_[i + 1].first);
        if (!(mid < values_[i + 1].first)) mid = values_[i].first;
        best = {static_cast<int>(f), mid, score};
      }
    }
  }

  const Matrix& x_;
  const LabelVector& y_;
  std::size_t n_classes_;
  TreeOptions options_;
  Rng rng_;
  bool use_subset_ = false;
  std::vector<std::size_t> all_features_;

  std::vector<int> feature_;
  std::vector<double> threshold_;
  std::vector<int> left_;
  std::vector<int> right_;
  std::vector<std::vector<double>> distribution_;

  std::vector<std::pair<double, std::size_t>> values_;
  std::vector<double> left_counts_;
};

Matrix tree_proba(const TreeNodes& tree, const Matrix& rows) {
  Matrix out(rows.rows(), tree.distribution.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.row(i) = tree.distribution.row(static_cast<Eigen::Index>(tree.leaf_of(rows.row(i).data())));
  }
  return out;
}

}  // namespace

TreeNodes grow_tree(const Matrix& x, const LabelVector& y, std::span<const std::size_t> rows, std::size_t n_classes,
                    const TreeOptions& options) {
  if (rows.empty()) throw ValidationError("cannot grow a tree on zero rows");
  TreeBuilder builder(x, y, n_classes, options);
  return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

void write_tree(Container& c, const TreeNodes& tree, const std::string& prefix) {
  c.add(prefix + "feature", std::vector<double>(tree.feature.begin(), tree.feature.end()));
  c.add(prefix + "threshold", tree.threshold);
  c.add(prefix + "left", std::vector<double>(tree.left.begin(), tree.left.end()));
  c.add(prefix + "right", std::vector<double>(tree.right.begin(), tree.right.end()));
  c.add(prefix + "distribution",
        {static_cast<std::size_t>(tree.distribution.rows()), static_cast<std::size_t>(tree.distribution.cols())},
        std::vector<double>(tree.distribution.data(), tree.distribution.data() + tree.distribution.size()));
}

TreeNodes read_tree(const Container& c, const std::string& prefix, std::size_t n_classes) {
  TreeNodes t;
  auto ints = [&](const std::string& name) {
    const auto& d = c.array(prefix + name).data;
    return std::vector<int>(d.begin(), d.end());
  };
  t.feature = ints("feature");
  t.left = ints("left");
  t.right = ints("right");
  t.threshold = c.array(prefix + "threshold").data;
  const auto& dist = c.array(prefix + "distribution");
  if (dist.data.size() != t.feature.size() * n_classes) throw IoError("classifier: tree distribution size mismatch");
  t.distribution = Eigen::Map<const Matrix>(dist.data.data(), static_cast<Eigen::Index>(t.feature.size()),
                                            static_cast<Eigen::Index>(n_classes));
  return t;
}

// ---------------------------------------------------------------------------
// Decision tree

DecisionTree::DecisionTree(TreeNodes tree, std::size_t n_classes, std::size_t dim)
    : Classifier(n_classes, dim), tree_(std::move(tree)) {}

std::unique_ptr<Classifier> DecisionTree::fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                              const ClassifierConfig& config) {
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TreeOptions options{config.dt_max_depth, 0, derive_seed(config.seed, "dt")};
  return std::make_unique<DecisionTree>(grow_tree(x, y, rows, n_classes, options), n_classes,
                                        static_cast<std::size_t>(x.cols()));
}

Matrix DecisionTree::proba(const Matrix& rows) const { return tree_proba(tree_, rows); }

void DecisionTree::write_to(Container& c) const { write_tree(c, tree_, "tree."); }

std::unique_ptr<Classifier> DecisionTree::read_from(const Container& c) {
  const auto n_classes = c.meta().at("n_classes").get<std::size_t>();
  return std::make_unique<DecisionTree>(read_tree(c, "tree.", n_classes), n_classes,
                                        c.meta().at("feature_dim").get<std::size_t>());
}

// ---------------------------------------------------------------------------
// Random forest

RandomForest::RandomForest(std::vector<TreeNodes> trees, std::size_t n_classes, std::size_t dim)
    : Classifier(n_classes, dim), trees_(std::move(trees)) {}

std::unique_ptr<Classifier> RandomForest::fit(const Matrix& x, const LabelVector& y, std::size_t n_classes,
                                              const ClassifierConfig& config) {
  const auto d = static_cast<std::size_t>(x.cols());
  std::size_t max_features = config.rf_max_features;
  if (max_features == 0) max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  max_features = std::min(max_features, d);

  std::vector<TreeNodes> trees(config.rf_trees);
  parallel_for(config.rf_trees, [&](std::size_t t) {
    const auto tree_seed = derive_seed(config.seed, "rf.tree" + std::to_string(t));
    std::vector<std::size_t> rows(y.size());
    if (config.rf_bootstrap) {
      Rng rng(derive_seed(tree_seed, "bootstrap"));
      for (auto& r : rows) r = static_cast<std::size_t>(rng.index(y.size()));
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees[t] = grow_tree(x, y, rows, n_classes, {std::nullopt, max_features == d ? 0 : max_features, tree_seed});
  });
  return std::make_unique<RandomForest>(std::move(trees), n_classes, d);
}

Matrix RandomForest::proba(const Matrix& rows) const {
  Matrix sum = Matrix::Zero(rows.rows(), static_cast<Eigen::Index>(n_classes()));
  for (const auto& tree : trees_) sum += tree_proba(tree, rows);
  return sum / static_cast<double>(trees_.size());
}

void RandomForest::write_to(Container& c) const {
  c.meta()["trees"] = trees_.size();
  for (std::size_t t = 0; t < trees_.size(); ++t) write_tree(c, trees_[t], "tree" + std::to_string(t) + ".");
}

std::unique_ptr<Classifier> RandomForest::read_from(const Container& c) {
  const auto n_classes = c.meta().at("n_classes").get<std::size_t>();
  std::vector<TreeNodes> trees;
  const auto n = c.meta().at("trees").get<std::size_t>();
  for (std::size_t t = 0; t < n; ++t) trees.push_back(read_tree(c, "tree" + std::to_string(t) + ".", n_classes));
  return std::make_unique<RandomForest>(std::move(trees), n_classes, c.meta().at("feature_dim").get<std::size_t>());
}

}  // namespace detail
}  // namespace seqgan::classify
