#pragma once

#include <optional>
#include <span>

namespace cxsim::evaluation {

// Both throw Error(kLengthMismatch) / Error(kEmpty).
double rmse(std::span<const double> predicted, std::span<const double> truth);
// Percent in [0, 200]. A term with predicted == truth == 0 contributes 0.
double smape(std::span<const double> predicted, std::span<const double> truth);

// 2TP / (2TP + FP + FN) with positives at score >= threshold; 0 when nothing
// is positive in either the labels or the predictions.
double f1_score(std::span<const double> scores, std::span<const int> labels, double threshold);
// Mann-Whitney with average ranks for ties. Empty when one class is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);
// Step-wise average precision, tied scores form one step.
std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassificationMetrics {
  double f1 = 0.0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
};

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels, double threshold);

}  // namespace cxsim::evaluation
