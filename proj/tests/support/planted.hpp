#pragma once

// Synthetic clickstreams with a known transition structure. Node i links to
// node j when the cosine similarity of their hash embeddings reaches tau, with
// weight exp(beta * similarity); every node also ends the session with a fixed
// probability and START picks a node uniformly.

#include <cstdint>
#include <memory>
#include <vector>

#include "cxsim/evaluation.hpp"
#include "cxsim/event_model.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/predictor.hpp"

namespace cxsim::planted {

struct PlantedConfig {
  std::size_t nodes = 60;
  std::size_t dimension = 64;
  std::size_t sessions = 5000;
  std::size_t categories = 8;
  double tau = 0.7;
  double beta = 4.0;
  double end_probability = 0.2;
  std::size_t max_length = 50;
};

struct Realization {
  std::vector<EventNode> nodes;  // ordinary nodes; realizations never share one
  std::vector<SessionRecord> sessions;
  // truth[i][j] over 0 = START, 1..n = nodes, n + 1 = END.
  std::vector<std::vector<double>> truth;
};

SegmentKey planted_segment();

// Node names and sessions depend on (seed, index).
Realization realize(const PlantedConfig& config, int index, std::uint64_t seed);

// Three realizations: 0 trains, 1 drives early stopping, 2 is the test set.
struct World {
  std::vector<Realization> realizations;
  std::vector<graph::EventTransitionGraph> graphs;
  predictor::NodeEmbeddings embeddings;
  std::vector<double> f_seg;
};

World make_world(const PlantedConfig& config, std::uint64_t seed);

struct BenchmarkResult {
  evaluation::MetricsReport hybrid;
  evaluation::MetricsReport reg_only;
  std::shared_ptr<const predictor::HybridModel> model;
};

BenchmarkResult run_benchmark(const World& world, std::uint64_t seed,
                              const predictor::PredictorConfig& predictor_config = {});
BenchmarkResult run_benchmark(const PlantedConfig& config, std::uint64_t seed,
                              const predictor::PredictorConfig& predictor_config = {});

// Micro-averaged F1 of predicted new-event edges against the truth when each
// of the first `count` test nodes is removed from the test sessions and
// offered back as a new event.
double held_out_edge_f1(const World& world, const predictor::HybridModel& model, std::size_t count);

}  // namespace cxsim::planted
