#include "cxsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cxsim/error.hpp"

namespace cxsim::evaluation {
namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::kLengthMismatch, "inputs differ in length");
  if (a == 0) throw Error(ErrorKind::kEmpty, "metrics need at least one value");
}

void check_labels(std::span<const int> labels) {
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorKind::kInvalidArgument, "labels must be 0 or 1");
  }
}

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  check_lengths(predicted.size(), truth.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predicted.size()));
}

double smape(std::span<const double> predicted, std::span<const double> truth) {
  check_lengths(predicted.size(), truth.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double denom = (std::abs(truth[i]) + std::abs(predicted[i])) / 2.0;
    if (denom == 0.0) continue;
    sum += std::abs(predicted[i] - truth[i]) / denom;
  }
  return 100.0 * sum / static_cast<double>(predicted.size());
}

double f1_score(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores.size(), labels.size());
  check_labels(labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted) {
      (labels[i] == 1 ? tp : fp) += 1;
    } else if (labels[i] == 1) {
      ++fn;
    }
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  check_labels(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  check_labels(labels);
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0 || positives == static_cast<double>(labels.size())) return std::nullopt;

  const auto order = order_by_score_desc(scores);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels, double threshold) {
  return {f1_score(scores, labels, threshold), roc_auc(scores, labels), pr_auc(scores, labels)};
}

}  // namespace cxsim::evaluation
