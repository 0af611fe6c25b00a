#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cxsim/graph.hpp"

namespace cxsim::simulator {

struct ConversionRule {
  std::string field = "actionType";
  std::string value = "Completed purchase";

  bool matches(const EventNode& node) const;
};

struct SimulationConfig {
  std::size_t n_sessions = 10000;
  std::size_t max_length = 100;  // ordinary events per walk
  std::uint64_t seed = 0;
  ConversionRule conversion;
  std::size_t threads = 1;

  // Throws Error(kInvalidConfig).
  void validate() const;
};

enum class Termination { kReachedEnd, kMaxLength };
std::string_view to_string(Termination t);

// Node indices into the graph the session was sampled from.
struct SimulatedSession {
  std::vector<std::size_t> path;
  Termination terminated_by = Termination::kReachedEnd;

  bool operator==(const SimulatedSession&) const = default;
};

// Seed of the per-session substream k.
std::uint64_t session_seed(std::uint64_t seed, std::uint64_t k);

SimulatedSession sample_session(const graph::EventTransitionGraph& graph, std::uint64_t stream_seed,
                                std::size_t max_length);

// Session k always uses session_seed(config.seed, k).
std::vector<SimulatedSession> simulate(const graph::EventTransitionGraph& graph, const SimulationConfig& config);

// Indices of nodes matching the rule. Throws Error(kUnknownField) when no node
// carries the field.
std::vector<bool> conversion_nodes(const graph::EventTransitionGraph& graph, const ConversionRule& rule);

bool converted(const SimulatedSession& session, const std::vector<bool>& conversion);

double conversion_rate(const std::vector<SimulatedSession>& sessions, const ConversionRule& rule,
                       const graph::EventTransitionGraph& graph);

// {"index", "terminated_by", "nodes": [ids], "events": [texts]?}
nlohmann::json session_to_json(const graph::EventTransitionGraph& graph, const SimulatedSession& session,
                               std::size_t index, bool include_text);

// One session per line.
void write_jsonl(std::ostream& out, const graph::EventTransitionGraph& graph,
                 const std::vector<SimulatedSession>& sessions, bool include_text);

}  // namespace cxsim::simulator
