#include "cxsim/simulator.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "cxsim/error.hpp"

namespace cxsim::simulator {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

bool ConversionRule::matches(const EventNode& node) const {
  const auto v = node.descriptor.get(field);
  return v && *v == value;
}

void SimulationConfig::validate() const {
  if (n_sessions < 1) throw Error(ErrorKind::kInvalidConfig, "n_sessions must be at least 1");
  if (max_length < 1) throw Error(ErrorKind::kInvalidConfig, "max_length must be at least 1");
  if (threads < 1) throw Error(ErrorKind::kInvalidConfig, "threads must be at least 1");
  if (conversion.field.empty()) throw Error(ErrorKind::kInvalidConfig, "conversion field must be non-empty");
}

std::string_view to_string(Termination t) { return t == Termination::kReachedEnd ? "reached_end" : "max_length"; }

std::uint64_t session_seed(std::uint64_t seed, std::uint64_t k) { return splitmix64(splitmix64(seed) ^ k); }

SimulatedSession sample_session(const graph::EventTransitionGraph& graph, std::uint64_t stream_seed,
                                std::size_t max_length) {
  std::mt19937_64 rng(stream_seed);
  SimulatedSession s;
  std::size_t at = graph.start_index();
  s.path.push_back(at);
  std::size_t events = 0;
  for (;;) {
    const auto edges = graph.out_edges(at);
    const double x = unit(rng);
    double acc = 0.0;
    std::size_t next = edges.back().target;  // guards against rounding in the row sum
    for (const auto& e : edges) {
      acc += e.probability;
      if (x < acc) {
        next = e.target;
        break;
      }
    }
    if (next == graph.end_index()) {
      s.path.push_back(next);
      s.terminated_by = Termination::kReachedEnd;
      return s;
    }
    if (events == max_length) {
      s.terminated_by = Termination::kMaxLength;
      return s;
    }
    s.path.push_back(next);
    ++events;
    at = next;
  }
}

std::vector<SimulatedSession> simulate(const graph::EventTransitionGraph& graph, const SimulationConfig& config) {
  config.validate();
  std::vector<SimulatedSession> out(config.n_sessions);
  const std::size_t workers = std::min(config.threads, config.n_sessions);
  auto run = [&](std::size_t w) {
    for (std::size_t k = w; k < out.size(); k += workers) {
      out[k] = sample_session(graph, session_seed(config.seed, k), config.max_length);
    }
  };
  if (workers == 1) {
    run(0);
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  pool.clear();
  return out;
}

std::vector<bool> conversion_nodes(const graph::EventTransitionGraph& graph, const ConversionRule& rule) {
  std::vector<bool> out(graph.node_count(), false);
  bool seen = false;
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    seen = seen || graph.node(i).descriptor.contains(rule.field);
    out[i] = rule.matches(graph.node(i));
  }
  if (!seen) throw Error(ErrorKind::kUnknownField, "no event has field '" + rule.field + "'");
  return out;
}

bool converted(const SimulatedSession& session, const std::vector<bool>& conversion) {
  return std::any_of(session.path.begin(), session.path.end(), [&](std::size_t i) { return conversion[i]; });
}

double conversion_rate(const std::vector<SimulatedSession>& sessions, const ConversionRule& rule,
                       const graph::EventTransitionGraph& graph) {
  const auto conv = conversion_nodes(graph, rule);
  if (sessions.empty()) return 0.0;
  const auto hits = std::count_if(sessions.begin(), sessions.end(),
                                  [&](const SimulatedSession& s) { return converted(s, conv); });
  return static_cast<double>(hits) / static_cast<double>(sessions.size());
}

nlohmann::json session_to_json(const graph::EventTransitionGraph& graph, const SimulatedSession& session,
                               std::size_t index, bool include_text) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json events = nlohmann::json::array();
  for (std::size_t i : session.path) {
    nodes.push_back(graph.node(i).id.hex());
    if (include_text) events.push_back(graph.node(i).canonical_text);
  }
  nlohmann::json j{{"index", index}, {"terminated_by", to_string(session.terminated_by)}, {"nodes", nodes}};
  if (include_text) j["events"] = events;
  return j;
}

void write_jsonl(std::ostream& out, const graph::EventTransitionGraph& graph,
                 const std::vector<SimulatedSession>& sessions, bool include_text) {
  for (std::size_t k = 0; k < sessions.size(); ++k) out << session_to_json(graph, sessions[k], k, include_text).dump() << '\n';
}

}  // namespace cxsim::simulator
