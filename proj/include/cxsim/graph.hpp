#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cxsim/event_model.hpp"

namespace cxsim::graph {

inline constexpr double kRowSumTolerance = 1e-9;

// Which successors a row's smoothing mass is spread over.
enum class SmoothingSupport {
  kObserved,  // p = (c_ij + a) / (c_i + a * k_i), observed successors only
  kAll,       // p = (c_ij + a) / (c_i + a * n_dst), every valid destination
};

std::string_view to_string(SmoothingSupport support);
SmoothingSupport parse_smoothing_support(std::string_view text);

struct GraphConfig {
  double alpha = 5.0;
  SmoothingSupport support = SmoothingSupport::kObserved;
  FieldWhitelist identity_fields;  // empty: every field
};

struct TransitionCounts {
  std::map<NodeId, EventNode> nodes;  // includes both sentinels
  std::map<NodeId, std::map<NodeId, std::uint64_t>> counts;

  std::uint64_t count(const NodeId& src, const NodeId& dst) const;
  std::uint64_t total(const NodeId& src) const;        // c_i
  std::size_t successor_count(const NodeId& src) const;  // k_i
};

// Adds START -> e_1, e_t -> e_{t+1}, e_last -> END for every session.
TransitionCounts count_transitions(const std::vector<SessionRecord>& sessions,
                                   const FieldWhitelist& identity_fields = {});

// Throws Error(kUnobservedEdge) for c_ij = 0 under kObserved support, and
// Error(kInvalidArgument) for pairs that can never be edges (src END or dst START).
double smoothed_probability(const TransitionCounts& counts, const NodeId& src,
                            const NodeId& dst, double alpha,
                            SmoothingSupport support = SmoothingSupport::kObserved);

class EventTransitionGraph {
 public:
  struct Edge {
    std::size_t target = 0;  // index into nodes()
    double probability = 0.0;
    std::uint64_t count = 0;

    bool operator==(const Edge&) const = default;
  };

  struct EdgeSpec {
    NodeId source;
    NodeId target;
    double probability = 0.0;
    std::uint64_t count = 0;
  };

  EventTransitionGraph() = default;

  // Nodes may arrive in any order; both sentinels must be present. Validates
  // every invariant and throws Error(kFormat) on violation.
  static EventTransitionGraph from_parts(std::vector<EventNode> nodes,
                                         const std::vector<EdgeSpec>& edges, double alpha,
                                         SmoothingSupport support, SegmentKey segment);

  // Sorted by id, so index order is id order.
  const std::vector<EventNode>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const;
  std::optional<std::size_t> index_of(const NodeId& id) const;
  const EventNode& node(std::size_t index) const { return nodes_.at(index); }

  // Sorted by target index.
  std::span<const Edge> out_edges(std::size_t index) const { return out_.at(index); }

  std::size_t start_index() const { return start_; }
  std::size_t end_index() const { return end_; }

  double probability(const NodeId& src, const NodeId& dst) const;  // 0 when no edge
  std::uint64_t visits(std::size_t index) const;

  double alpha() const { return alpha_; }
  SmoothingSupport support() const { return support_; }
  const SegmentKey& segment() const { return segment_; }

  // Ordered pairs (i, j) with i != END and j != START.
  std::size_t valid_pair_count() const;

  // Throws Error(kFormat) describing the first broken invariant.
  void check_invariants() const;

  bool operator==(const EventTransitionGraph& other) const;

 private:
  std::vector<EventNode> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::vector<Edge>> out_;
  std::size_t start_ = 0;
  std::size_t end_ = 0;
  double alpha_ = 0.0;
  SmoothingSupport support_ = SmoothingSupport::kObserved;
  SegmentKey segment_;
};

// The segment recorded on the graph is the one shared by every session, or the
// empty segment when sessions disagree.
EventTransitionGraph build_graph(const std::vector<SessionRecord>& sessions,
                                 const GraphConfig& config = {});
EventTransitionGraph build_graph(const TransitionCounts& counts, const GraphConfig& config,
                                 SegmentKey segment = {});

using RawEdge = std::pair<NodeId, double>;

// Copy-on-write insertion of a new event. Each source i with weight q keeps its
// old row scaled by 1/(1+q) and gains i -> new with q/(1+q). The new node's row
// is its out weights normalized, or a single edge to END when none are given.
EventTransitionGraph insert_event(const EventTransitionGraph& graph, const EventNode& new_node,
                                  const std::vector<RawEdge>& in_edges,
                                  const std::vector<RawEdge>& out_edges);

// docs/graph-format.md
void write_graph(std::ostream& out, const EventTransitionGraph& graph);
EventTransitionGraph read_graph(std::istream& in);
std::string to_json_text(const EventTransitionGraph& graph);

}  // namespace cxsim::graph
