#include "seqgan/evaluate.hpp"

#include "seqgan/error.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

namespace seqgan::evaluate {

std::array<double, 6> MetricsReport::values() const noexcept {
  return {accuracy, precision_weighted, recall_weighted, f1_weighted, f1_macro, roc_auc_ovr_macro};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  const auto v = values();
  for (std::size_t i = 0; i < v.size(); ++i) j[std::string(kMetricNames[i])] = v[i];
  j["train_time_s"] = train_time_s;
  j["predict_time_s"] = predict_time_s;
  j["run_seed"] = run_seed;
  j["zero_division"] = zero_division;
  j["excluded_classes"] = excluded_classes;
  return j;
}

nlohmann::json AggregateReport::to_json() const {
  nlohmann::json j;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    j[std::string(kMetricNames[i])] = {{"mean", metrics[i].mean}, {"std", metrics[i].std}};
  }
  j["train_time_s"] = {{"mean", train_time.mean}, {"std", train_time.std}};
  j["predict_time_s"] = {{"mean", predict_time.mean}, {"std", predict_time.std}};
  j["n_runs"] = n_runs;
  j["p_values"] = p_values;
  return j;
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ShapeError("auc: score and label lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        positive_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc: needs at least one positive and one negative");
  const double np = static_cast<double>(n_pos);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double roc_auc_ovr_macro(const LabelVector& y_true, const Matrix& y_proba, std::size_t* skipped) {
  if (static_cast<std::size_t>(y_proba.rows()) != y_true.size()) throw ShapeError("auc: row count mismatch");
  const auto n_classes = static_cast<std::size_t>(y_proba.cols());
  std::vector<std::size_t> support(n_classes, 0);
  for (auto y : y_true) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw ValidationError("auc: label outside score columns");
    ++support[static_cast<std::size_t>(y)];
  }

  double total = 0.0;
  std::size_t used = 0;
  std::size_t skip = 0;
  std::vector<double> column(y_true.size());
  std::unique_ptr<bool[]> positive(new bool[y_true.size()]);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (support[c] == 0) continue;  // absent from y_true: not part of the macro set
    if (support[c] == y_true.size()) {
      ++skip;
      continue;
    }
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      column[i] = y_proba(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      positive[i] = y_true[i] == static_cast<Label>(c);
    }
    total += binary_auc(column, std::span<const bool>(positive.get(), y_true.size()));
    ++used;
  }
  if (skip > 0) spdlog::warn("ROC AUC: skipped {} class(es) without negatives", skip);
  if (skipped) *skipped = skip;
  if (used == 0) throw ValidationError("auc: no class has both positives and negatives");
  return total / static_cast<double>(used);
}

MetricsReport compute_metrics(const LabelVector& y_true, const LabelVector& y_pred, const Matrix& y_proba) {
  const std::size_t n = y_true.size();
  if (y_pred.size() != n || static_cast<std::size_t>(y_proba.rows()) != n) {
    throw ShapeError("metrics: y_true, y_pred and y_proba lengths differ");
  }
  if (n == 0) throw ValidationError("metrics: empty evaluation set");
  const auto n_classes = static_cast<std::size_t>(y_proba.cols());

  std::vector<double> support(n_classes, 0.0);
  std::vector<double> predicted(n_classes, 0.0);
  std::vector<double> hits(n_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = y_true[i];
    const auto p = y_pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_classes || p < 0 || static_cast<std::size_t>(p) >= n_classes) {
      throw ValidationError("metrics: label outside the score columns");
    }
    support[static_cast<std::size_t>(t)] += 1.0;
    predicted[static_cast<std::size_t>(p)] += 1.0;
    if (t == p) hits[static_cast<std::size_t>(t)] += 1.0;
  }

  MetricsReport r;
  double correct = 0.0;
  double macro_f1 = 0.0;
  std::size_t macro_classes = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    correct += hits[c];
    if (support[c] == 0.0) {
      if (predicted[c] > 0.0) ++r.excluded_classes;
      continue;
    }
    double precision = 0.0;
    if (predicted[c] > 0.0) {
      precision = hits[c] / predicted[c];
    } else {
      ++r.zero_division;
    }
    const double recall = hits[c] / support[c];
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double weight = support[c] / static_cast<double>(n);
    r.precision_weighted += weight * precision;
    r.recall_weighted += weight * recall;
    r.f1_weighted += weight * f1;
    macro_f1 += f1;
    ++macro_classes;
  }
  if (r.zero_division > 0) spdlog::debug("metrics: {} class(es) with no predictions; precision set to 0", r.zero_division);
  if (r.excluded_classes > 0) {
    spdlog::warn("metrics: {} predicted class(es) absent from y_true excluded from macro averages", r.excluded_classes);
  }
  r.accuracy = correct / static_cast<double>(n);
  r.f1_macro = macro_f1 / static_cast<double>(macro_classes);
  r.roc_auc_ovr_macro = roc_auc_ovr_macro(y_true, y_proba);
  return r;
}

namespace {

Summary summarize(std::span<const double> xs) {
  Summary s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace

AggregateReport aggregate_runs(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("aggregate: no reports");
  AggregateReport agg;
  agg.n_runs = reports.size();
  std::vector<double> column(reports.size());
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    for (std::size_t i = 0; i < reports.size(); ++i) column[i] = reports[i].values()[m];
    agg.metrics[m] = summarize(column);
  }
  for (std::size_t i = 0; i < reports.size(); ++i) column[i] = reports[i].train_time_s;
  agg.train_time = summarize(column);
  for (std::size_t i = 0; i < reports.size(); ++i) column[i] = reports[i].predict_time_s;
  agg.predict_time = summarize(column);
  return agg;
}

TTest welch_ttest(double mean_a, double std_a, std::size_t n_a, double mean_b, double std_b, std::size_t n_b) {
  if (n_a < 2 || n_b < 2) throw ValidationError("t-test: each side needs at least 2 runs");
  if (std_a < 0.0 || std_b < 0.0) throw ValidationError("t-test: negative standard deviation");
  const double va = std_a * std_a / static_cast<double>(n_a);
  const double vb = std_b * std_b / static_cast<double>(n_b);
  const double se2 = va + vb;
  const double diff = mean_a - mean_b;

  TTest r;
  if (se2 == 0.0) {
    r.df = static_cast<double>(n_a + n_b - 2);
    if (diff == 0.0) return r;
    r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p = 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / static_cast<double>(n_a - 1) + vb * vb / static_cast<double>(n_b - 1));
  // Two-sided tail of Student's t: I_{df/(df+t^2)}(df/2, 1/2).
  const double x = r.df / (r.df + r.t * r.t);
  r.p = x >= 1.0 ? 1.0 : boost::math::ibeta(r.df / 2.0, 0.5, x);
  return r;
}

std::map<std::string, double> compare(const AggregateReport& a, const AggregateReport& b) {
  std::map<std::string, double> out;
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    out[std::string(kMetricNames[m])] =
        welch_ttest(a.metrics[m].mean, a.metrics[m].std, a.n_runs, b.metrics[m].mean, b.metrics[m].std, b.n_runs).p;
  }
  return out;
}

}  // namespace seqgan::evaluate
