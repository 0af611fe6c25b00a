#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxsim/embedding.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/predictor.hpp"
#include "cxsim/simulator.hpp"

namespace cxsim::assessment {

struct CampaignSpec {
  EventDescriptor descriptor;
  SegmentKey segment;  // empty: the control graph's segment
  std::string label;

  // Throws Error(kInvalidArgument) for an empty descriptor.
  void validate() const;
};

// {"descriptor": {...}, "segment": {...}?, "label": "..."?}; throws Error(kFormat).
CampaignSpec campaign_from_json(const nlohmann::json& j);
nlohmann::json campaign_to_json(const CampaignSpec& c);

struct AssessmentConfig {
  simulator::SimulationConfig simulation;
  bool paired_seeds = true;
  std::size_t sample_sessions = 20;

  void validate() const;
};

struct Treatment {
  EventNode node;
  predictor::NewEventEdges edges;
  graph::EventTransitionGraph graph;
};

// Embeds the campaign and every control node, predicts the new edges and
// inserts the event. Throws Error(kDuplicateNode) when the campaign already is
// a control node, Error(kDimensionMismatch) when the embedder and model disagree.
Treatment build_treatment(const graph::EventTransitionGraph& control, const CampaignSpec& campaign,
                          const predictor::HybridModel& model, embedding::Embedder& embedder);

struct WeightQuantiles {
  double min = 0, p25 = 0, median = 0, p75 = 0, max = 0;
};

// Linear interpolation between order statistics; nullopt for no weights.
std::optional<WeightQuantiles> weight_quantiles(std::vector<double> weights);

struct EdgeSummary {
  std::size_t in_edges = 0;
  std::size_t out_edges = 0;
  std::optional<WeightQuantiles> in_weights;
  std::optional<WeightQuantiles> out_weights;
};

struct GroupResult {
  double cvr = 0.0;
  std::size_t conversions = 0;
  std::uint64_t seed = 0;
  std::vector<nlohmann::json> samples;
};

struct AssessmentReport {
  std::string label;
  std::string campaign_id;
  std::string campaign_text;
  simulator::ConversionRule conversion;
  std::size_t n_sessions = 0;
  std::size_t max_length = 0;
  bool paired_seeds = true;
  GroupResult control;
  GroupResult treatment;
  double uplift = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  EdgeSummary edges;
};

inline constexpr double kZ95 = 1.959963984540054;

// Normal approximation for the difference of two independent proportions.
std::pair<double, double> uplift_interval(std::size_t conv_c, std::size_t conv_t, std::size_t n);

AssessmentReport assess(const graph::EventTransitionGraph& control, const CampaignSpec& campaign,
                        const predictor::HybridModel& model, embedding::Embedder& embedder,
                        const AssessmentConfig& config);

// Simulation and reporting over an already built treatment.
AssessmentReport assess_treatment(const graph::EventTransitionGraph& control, const Treatment& treatment,
                                  const CampaignSpec& campaign, const AssessmentConfig& config);

nlohmann::json report_to_json(const AssessmentReport& r);
std::string format_summary(const AssessmentReport& r);

}  // namespace cxsim::assessment
