#include "fixtures.hpp"

#include <map>

namespace cxsim::fixtures {

EventNode node_of(const std::string& label) {
  if (label == "START") return EventNode::session_start();
  if (label == "END") return EventNode::session_end();
  return EventNode::from_descriptor(EventDescriptor{{"actionType", label}});
}

graph::EventTransitionGraph make_graph(const std::vector<LabeledEdge>& edges) {
  std::map<NodeId, EventNode> nodes;
  nodes.emplace(session_start_id(), EventNode::session_start());
  nodes.emplace(session_end_id(), EventNode::session_end());
  std::vector<graph::EventTransitionGraph::EdgeSpec> specs;
  for (const auto& e : edges) {
    const auto s = node_of(e.src), d = node_of(e.dst);
    nodes.emplace(s.id, s);
    nodes.emplace(d.id, d);
    specs.push_back({s.id, d.id, e.p, 1});
  }
  std::vector<EventNode> list;
  for (auto& [id, n] : nodes) list.push_back(n);
  return graph::EventTransitionGraph::from_parts(list, specs, 5.0, graph::SmoothingSupport::kObserved, {});
}

std::size_t index_of(const graph::EventTransitionGraph& g, const std::string& label) {
  return *g.index_of(node_of(label).id);
}

graph::EventTransitionGraph unreachable_conversion() {
  return make_graph({{"START", "A", 1.0}, {"A", "END", 1.0}, {"Completed purchase", "END", 1.0}});
}

PairSetClassifier::PairSetClassifier(std::size_t dimension,
                                     const std::vector<std::pair<std::string, std::string>>& pairs)
    : dimension_(dimension) {
  for (const auto& [s, d] : pairs) {
    accepted_.emplace(embedding::hash_embed(s, dimension), embedding::hash_embed(d, dimension));
  }
}

double PairSetClassifier::probability(std::span<const double> f) const {
  const auto d = static_cast<std::ptrdiff_t>(dimension_);
  std::pair<std::vector<double>, std::vector<double>> key{{f.begin(), f.begin() + d}, {f.begin() + d, f.begin() + 2 * d}};
  return accepted_.contains(key) ? 1.0 : 0.0;
}

std::shared_ptr<predictor::HybridModel> reject_all_model(std::size_t dimension) {
  return std::make_shared<predictor::HybridModel>(
      std::make_shared<PairSetClassifier>(dimension, std::vector<std::pair<std::string, std::string>>{}),
      std::make_shared<ConstantRegressor>(1.0), predictor::PredictorConfig{}, dimension);
}

std::shared_ptr<predictor::HybridModel> routes_to_conversion_model(std::size_t dimension,
                                                                   const EventNode& campaign) {
  const std::vector<std::pair<std::string, std::string>> pairs{
      {EventNode::session_start().canonical_text, campaign.canonical_text},
      {campaign.canonical_text, node_of("Completed purchase").canonical_text}};
  return std::make_shared<predictor::HybridModel>(std::make_shared<PairSetClassifier>(dimension, pairs),
                                                  std::make_shared<ConstantRegressor>(1.0),
                                                  predictor::PredictorConfig{}, dimension);
}

embedding::Embedder hash_embedder(std::size_t dimension) {
  return embedding::Embedder(std::make_shared<embedding::HashProvider>(dimension),
                             std::make_shared<embedding::EmbeddingCache>());
}

}  // namespace cxsim::fixtures
