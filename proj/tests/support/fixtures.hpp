#pragma once

// Small hand-made graphs and stub models shared by unit and acceptance tests.

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cxsim/embedding.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/predictor.hpp"

namespace cxsim::fixtures {

// "START" and "END" name the sentinels; other labels become {"actionType": label}.
EventNode node_of(const std::string& label);

struct LabeledEdge {
  std::string src, dst;
  double p;
};

// Every listed node plus both sentinels; probabilities taken as given.
graph::EventTransitionGraph make_graph(const std::vector<LabeledEdge>& edges);

std::size_t index_of(const graph::EventTransitionGraph& g, const std::string& label);

// START -> A -> END, with "Completed purchase" present but unreachable.
graph::EventTransitionGraph unreachable_conversion();

// Accepts exactly the listed (source text, destination text) pairs, matching
// the feature blocks against hash embeddings of those texts.
class PairSetClassifier final : public predictor::BinaryClassifier {
 public:
  PairSetClassifier(std::size_t dimension, const std::vector<std::pair<std::string, std::string>>& pairs);
  double probability(std::span<const double> features) const override;

 private:
  std::size_t dimension_;
  std::set<std::pair<std::vector<double>, std::vector<double>>> accepted_;
};

class ConstantRegressor final : public predictor::Regressor {
 public:
  explicit ConstantRegressor(double v) : v_(v) {}
  double value(std::span<const double>) const override { return v_; }

 private:
  double v_;
};

// Rejects every pair.
std::shared_ptr<predictor::HybridModel> reject_all_model(std::size_t dimension);

// Accepts START -> campaign and campaign -> "Completed purchase", both weight 1.
std::shared_ptr<predictor::HybridModel> routes_to_conversion_model(std::size_t dimension,
                                                                   const EventNode& campaign);

embedding::Embedder hash_embedder(std::size_t dimension);

}  // namespace cxsim::fixtures
