#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxsim/graph.hpp"
#include "cxsim/json.hpp"
#include "cxsim/metrics.hpp"
#include "cxsim/predictor.hpp"

namespace cxsim::evaluation {

enum class SmapeSupport { kActive, kAll };

std::string_view to_string(SmapeSupport support);
SmapeSupport parse_smape_support(std::string_view text);

struct EvaluationConfig {
  SmapeSupport smape_support = SmapeSupport::kActive;
};

struct MetricsReport {
  std::string model_kind;
  double threshold = 0.0;
  double rmse = 0.0;
  double smape = 0.0;
  double f1 = 0.0;
  std::optional<double> roc_auc;  // over classification scores
  std::optional<double> pr_auc;
  std::optional<double> output_pr_auc;  // over output probabilities
  std::size_t total_pairs = 0;
  std::size_t positive_pairs = 0;
  std::size_t smape_pairs = 0;
};

// A test graph and the segment embedding its pairs are scored with.
struct EvaluationSet {
  const graph::EventTransitionGraph* graph = nullptr;
  std::vector<double> f_seg;
};

// Truth is the test-graph probability of observed edges (count > 0), else 0.
// Every valid ordered pair is scored. Throws Error(kMissingEmbedding).
MetricsReport evaluate(const predictor::PairModel& model, const std::vector<EvaluationSet>& sets,
                       const predictor::NodeEmbeddings& embeddings, const EvaluationConfig& config);
MetricsReport evaluate(const predictor::PairModel& model, const graph::EventTransitionGraph& test_graph,
                       const predictor::NodeEmbeddings& embeddings, std::span<const double> f_seg,
                       const EvaluationConfig& config);

nlohmann::json report_to_json(const MetricsReport& report);
// Aligned table, one row per report: RMSE, SMAPE, F1, ROC-AUC, PR-AUC.
std::string format_table(const std::vector<MetricsReport>& reports);

}  // namespace cxsim::evaluation
