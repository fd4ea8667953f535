#pragma once

#include "seqgan/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace seqgan::evaluate {

/// Metric columns in table order.
inline constexpr std::array<std::string_view, 6> kMetricNames = {
    "accuracy", "precision", "recall", "f1_weighted", "f1_macro", "roc_auc"};

struct MetricsReport {
  double accuracy = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  double roc_auc_ovr_macro = 0.0;
  double train_time_s = 0.0;
  double predict_time_s = 0.0;
  std::uint64_t run_seed = 0;
  /// Precision cells with no predicted samples (counted as 0).
  std::size_t zero_division = 0;
  /// Classes left out of the macro averages.
  std::size_t excluded_classes = 0;

  /// The six metrics in kMetricNames order.
  std::array<double, 6> values() const noexcept;
  nlohmann::json to_json() const;
};

/// Accuracy, support-weighted precision/recall/F1 and macro F1 over the
/// classes present in y_true, plus one-vs-rest macro ROC AUC from y_proba
/// (one column per class id).
MetricsReport compute_metrics(const LabelVector& y_true, const LabelVector& y_pred, const Matrix& y_proba);

/// Mann-Whitney AUC of `scores` for the positive set, ties at midrank.
double binary_auc(std::span<const double> scores, std::span<const bool> positive);

/// Macro mean over classes of the one-vs-rest AUC of column c. Classes with
/// no positives or no negatives are skipped (counted in `skipped`).
double roc_auc_ovr_macro(const LabelVector& y_true, const Matrix& y_proba, std::size_t* skipped = nullptr);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one run
};

struct AggregateReport {
  std::array<Summary, 6> metrics;
  Summary train_time;
  Summary predict_time;
  std::size_t n_runs = 0;
  /// metric name -> p-value of a configured comparison.
  std::map<std::string, double> p_values;

  nlohmann::json to_json() const;
};

AggregateReport aggregate_runs(std::span<const MetricsReport> reports);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

/// Two-sided Welch t-test from summary statistics. With both standard
/// deviations zero the result is p = 1 for equal means and p = 0 otherwise.
TTest welch_ttest(double mean_a, double std_a, std::size_t n_a, double mean_b, double std_b, std::size_t n_b);

/// Welch p-value per metric between two aggregated cells.
std::map<std::string, double> compare(const AggregateReport& a, const AggregateReport& b);

}  // namespace seqgan::evaluate
