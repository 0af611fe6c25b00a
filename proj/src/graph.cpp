#include "cxsim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cxsim/error.hpp"
#include "cxsim/json.hpp"

namespace cxsim::graph {
namespace {

using nlohmann::json;

constexpr std::string_view kFormatName = "cxsim.graph";
constexpr int kFormatVersion = 1;

void check_alpha(double alpha) {
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw Error(ErrorKind::kInvalidArgument, "smoothing alpha must be finite and >= 0");
  }
}

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string quoted(std::string_view text) { return json(std::string(text)).dump(); }

bool valid_weight(double q) { return std::isfinite(q) && q > 0.0 && q <= 1.0; }

}  // namespace

std::string_view to_string(SmoothingSupport support) {
  return support == SmoothingSupport::kObserved ? "observed" : "all";
}

SmoothingSupport parse_smoothing_support(std::string_view text) {
  if (text == "observed") return SmoothingSupport::kObserved;
  if (text == "all") return SmoothingSupport::kAll;
  throw Error(ErrorKind::kInvalidConfig,
              "smoothing_support must be 'observed' or 'all', got '" + std::string(text) + "'");
}

std::uint64_t TransitionCounts::count(const NodeId& src, const NodeId& dst) const {
  auto row = counts.find(src);
  if (row == counts.end()) return 0;
  auto it = row->second.find(dst);
  return it == row->second.end() ? 0 : it->second;
}

std::uint64_t TransitionCounts::total(const NodeId& src) const {
  auto row = counts.find(src);
  if (row == counts.end()) return 0;
  std::uint64_t sum = 0;
  for (const auto& [dst, c] : row->second) sum += c;
  return sum;
}

std::size_t TransitionCounts::successor_count(const NodeId& src) const {
  auto row = counts.find(src);
  return row == counts.end() ? 0 : row->second.size();
}

TransitionCounts count_transitions(const std::vector<SessionRecord>& sessions,
                                   const FieldWhitelist& identity_fields) {
  if (sessions.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "cannot count transitions over zero sessions");
  }
  TransitionCounts counts;
  const EventNode start = EventNode::session_start();
  const EventNode end = EventNode::session_end();
  counts.nodes.emplace(start.id, start);
  counts.nodes.emplace(end.id, end);

  for (const auto& session : sessions) {
    NodeId prev = start.id;
    for (const auto& event : session.events) {
      EventNode node = EventNode::from_descriptor(event.descriptor, identity_fields);
      const NodeId id = node.id;
      if (id == start.id || id == end.id) {
        throw Error(ErrorKind::kSentinelViolation,
                    "event '" + node.canonical_text + "' collides with a sentinel id");
      }
      counts.nodes.try_emplace(id, std::move(node));
      ++counts.counts[prev][id];
      prev = id;
    }
    ++counts.counts[prev][end.id];
  }
  return counts;
}

double smoothed_probability(const TransitionCounts& counts, const NodeId& src, const NodeId& dst,
                            double alpha, SmoothingSupport support) {
  check_alpha(alpha);
  if (src == session_end_id() || dst == session_start_id()) {
    throw Error(ErrorKind::kInvalidArgument, "END has no successors and START no predecessors");
  }
  const auto c_ij = static_cast<double>(counts.count(src, dst));
  const auto c_i = static_cast<double>(counts.total(src));
  if (support == SmoothingSupport::kObserved) {
    if (c_ij == 0.0) {
      throw Error(ErrorKind::kUnobservedEdge,
                  "edge " + src.hex() + " -> " + dst.hex() + " was never observed");
    }
    const auto k_i = static_cast<double>(counts.successor_count(src));
    return (c_ij + alpha) / (c_i + alpha * k_i);
  }
  // Destinations: every node except START.
  const auto n_dst = static_cast<double>(counts.nodes.size() - 1);
  const double denom = c_i + alpha * n_dst;
  if (denom == 0.0) {
    throw Error(ErrorKind::kUnobservedEdge, "source " + src.hex() + " has no transitions");
  }
  return (c_ij + alpha) / denom;
}

EventTransitionGraph EventTransitionGraph::from_parts(std::vector<EventNode> nodes,
                                                      const std::vector<EdgeSpec>& edges,
                                                      double alpha, SmoothingSupport support,
                                                      SegmentKey segment) {
  check_alpha(alpha);
  EventTransitionGraph g;
  std::sort(nodes.begin(), nodes.end(),
            [](const EventNode& a, const EventNode& b) { return a.id < b.id; });
  g.nodes_ = std::move(nodes);
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    if (!g.index_.emplace(g.nodes_[i].id, i).second) {
      throw Error(ErrorKind::kFormat, "duplicate node id " + g.nodes_[i].id.hex());
    }
  }
  auto start = g.index_of(session_start_id());
  auto end = g.index_of(session_end_id());
  if (!start || !end) throw Error(ErrorKind::kFormat, "graph is missing a sentinel node");
  g.start_ = *start;
  g.end_ = *end;
  g.alpha_ = alpha;
  g.support_ = support;
  g.segment_ = std::move(segment);

  g.out_.assign(g.nodes_.size(), {});
  for (const auto& e : edges) {
    auto s = g.index_of(e.source);
    auto t = g.index_of(e.target);
    if (!s || !t) throw Error(ErrorKind::kFormat, "edge references an unknown node");
    g.out_[*s].push_back({*t, e.probability, e.count});
  }
  for (auto& row : g.out_) {
    std::sort(row.begin(), row.end(),
              [](const Edge& a, const Edge& b) { return a.target < b.target; });
  }
  g.check_invariants();
  return g;
}

std::size_t EventTransitionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& row : out_) n += row.size();
  return n;
}

std::optional<std::size_t> EventTransitionGraph::index_of(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double EventTransitionGraph::probability(const NodeId& src, const NodeId& dst) const {
  auto s = index_of(src);
  auto t = index_of(dst);
  if (!s || !t) return 0.0;
  const auto& row = out_[*s];
  auto it = std::lower_bound(row.begin(), row.end(), *t,
                             [](const Edge& e, std::size_t target) { return e.target < target; });
  return (it != row.end() && it->target == *t) ? it->probability : 0.0;
}

std::uint64_t EventTransitionGraph::visits(std::size_t index) const {
  std::uint64_t n = 0;
  if (index == end_) {
    for (const auto& row : out_) {
      for (const auto& e : row) {
        if (e.target == end_) n += e.count;
      }
    }
    return n;
  }
  for (const auto& e : out_.at(index)) n += e.count;
  return n;
}

std::size_t EventTransitionGraph::valid_pair_count() const {
  const std::size_t n = nodes_.empty() ? 0 : nodes_.size() - 1;
  return n * n;
}

void EventTransitionGraph::check_invariants() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& row = out_[i];
    if (i == end_) {
      if (!row.empty()) throw Error(ErrorKind::kFormat, "SESSION_END must have no out-edges");
      continue;
    }
    if (row.empty()) {
      throw Error(ErrorKind::kFormat, "node " + nodes_[i].id.hex() + " has no out-edges");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const auto& e = row[k];
      if (k > 0 && row[k - 1].target == e.target) {
        throw Error(ErrorKind::kFormat, "duplicate edge from " + nodes_[i].id.hex());
      }
      if (e.target == start_) throw Error(ErrorKind::kFormat, "SESSION_START must have no in-edges");
      if (!(e.probability > 0.0 && e.probability <= 1.0)) {
        throw Error(ErrorKind::kFormat, "edge probability outside (0, 1]");
      }
      sum += e.probability;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::kFormat,
                  "out-probabilities of " + nodes_[i].id.hex() + " sum to " + format_real(sum));
    }
  }
}

bool EventTransitionGraph::operator==(const EventTransitionGraph& other) const {
  return nodes_ == other.nodes_ && out_ == other.out_ && alpha_ == other.alpha_ &&
         support_ == other.support_ && segment_ == other.segment_;
}

EventTransitionGraph build_graph(const TransitionCounts& counts, const GraphConfig& config,
                                 SegmentKey segment) {
  check_alpha(config.alpha);
  std::vector<EventNode> nodes;
  nodes.reserve(counts.nodes.size());
  for (const auto& [id, node] : counts.nodes) nodes.push_back(node);

  std::vector<EventTransitionGraph::EdgeSpec> edges;
  for (const auto& [src, row] : counts.counts) {
    if (config.support == SmoothingSupport::kObserved) {
      for (const auto& [dst, c] : row) {
        edges.push_back({src, dst, smoothed_probability(counts, src, dst, config.alpha), c});
      }
      continue;
    }
    for (const auto& [dst, node] : counts.nodes) {
      if (dst == session_start_id()) continue;
      const double p = smoothed_probability(counts, src, dst, config.alpha, config.support);
      if (p > 0.0) edges.push_back({src, dst, p, counts.count(src, dst)});
    }
  }
  return EventTransitionGraph::from_parts(std::move(nodes), edges, config.alpha, config.support,
                                          std::move(segment));
}

EventTransitionGraph build_graph(const std::vector<SessionRecord>& sessions,
                                 const GraphConfig& config) {
  const TransitionCounts counts = count_transitions(sessions, config.identity_fields);
  SegmentKey segment = sessions.front().segment;
  for (const auto& s : sessions) {
    if (s.segment != segment) {
      segment = {};
      break;
    }
  }
  return build_graph(counts, config, std::move(segment));
}

EventTransitionGraph insert_event(const EventTransitionGraph& graph, const EventNode& new_node,
                                  const std::vector<RawEdge>& in_edges,
                                  const std::vector<RawEdge>& out_edges) {
  if (new_node.is_sentinel || new_node.id == session_start_id() ||
      new_node.id == session_end_id()) {
    throw Error(ErrorKind::kSentinelViolation, "the inserted event cannot be a sentinel");
  }
  if (graph.index_of(new_node.id)) {
    throw Error(ErrorKind::kDuplicateNode,
                "event '" + new_node.canonical_text + "' already exists in the graph");
  }

  std::map<NodeId, double> in_weight;
  for (const auto& [src, q] : in_edges) {
    if (!valid_weight(q)) throw Error(ErrorKind::kInvalidWeight, "in-edge weight outside (0, 1]");
    if (src == session_end_id()) {
      throw Error(ErrorKind::kSentinelViolation, "SESSION_END cannot have out-edges");
    }
    if (!graph.index_of(src)) throw Error(ErrorKind::kInvalidArgument, "unknown source " + src.hex());
    if (!in_weight.emplace(src, q).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate in-edge from " + src.hex());
    }
  }
  std::map<NodeId, double> out_weight;
  double out_total = 0.0;
  for (const auto& [dst, q] : out_edges) {
    if (!valid_weight(q)) throw Error(ErrorKind::kInvalidWeight, "out-edge weight outside (0, 1]");
    if (dst == session_start_id()) {
      throw Error(ErrorKind::kSentinelViolation, "SESSION_START cannot have in-edges");
    }
    if (!graph.index_of(dst)) throw Error(ErrorKind::kInvalidArgument, "unknown target " + dst.hex());
    if (!out_weight.emplace(dst, q).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate out-edge to " + dst.hex());
    }
    out_total += q;
  }

  std::vector<EventNode> nodes = graph.nodes();
  nodes.push_back(new_node);

  std::vector<EventTransitionGraph::EdgeSpec> edges;
  edges.reserve(graph.edge_count() + in_weight.size() + out_weight.size() + 1);
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const NodeId& src = graph.node(i).id;
    auto q = in_weight.find(src);
    const double scale = q == in_weight.end() ? 1.0 : 1.0 / (1.0 + q->second);
    for (const auto& e : graph.out_edges(i)) {
      edges.push_back({src, graph.node(e.target).id, e.probability * scale, e.count});
    }
    if (q != in_weight.end()) {
      edges.push_back({src, new_node.id, q->second / (1.0 + q->second), 0});
    }
  }
  if (out_weight.empty()) {
    edges.push_back({new_node.id, session_end_id(), 1.0, 0});
  } else {
    for (const auto& [dst, q] : out_weight) edges.push_back({new_node.id, dst, q / out_total, 0});
  }
  return EventTransitionGraph::from_parts(std::move(nodes), edges, graph.alpha(), graph.support(),
                                          graph.segment());
}

void write_graph(std::ostream& out, const EventTransitionGraph& graph) {
  out << "{\n";
  out << "  \"format\": " << quoted(kFormatName) << ",\n";
  out << "  \"version\": " << kFormatVersion << ",\n";
  out << "  \"alpha\": " << format_real(graph.alpha()) << ",\n";
  out << "  \"smoothing_support\": " << quoted(to_string(graph.support())) << ",\n";
  out << "  \"segment\": " << json(graph.segment()).dump() << ",\n";
  out << "  \"nodes\": [";
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const auto& n = graph.node(i);
    out << (i == 0 ? "\n" : ",\n");
    out << "    {\"id\": " << quoted(n.id.hex()) << ", \"sentinel\": " << (n.is_sentinel ? "true" : "false")
        << ", \"text\": " << quoted(n.canonical_text)
        << ", \"descriptor\": " << json(n.descriptor).dump() << "}";
  }
  out << "\n  ],\n";
  out << "  \"edges\": [";
  bool first = true;
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    for (const auto& e : graph.out_edges(i)) {
      out << (first ? "\n" : ",\n");
      first = false;
      out << "    {\"source\": " << quoted(graph.node(i).id.hex())
          << ", \"target\": " << quoted(graph.node(e.target).id.hex())
          << ", \"probability\": " << format_real(e.probability) << ", \"count\": " << e.count
          << "}";
    }
  }
  out << "\n  ]\n}\n";
}

std::string to_json_text(const EventTransitionGraph& graph) {
  std::ostringstream out;
  write_graph(out, graph);
  return out.str();
}

EventTransitionGraph read_graph(std::istream& in) {
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorKind::kFormat, "graph file is not a JSON object");
  }
  try {
    if (doc.at("format").get<std::string>() != kFormatName) {
      throw Error(ErrorKind::kFormat, "not a cxsim graph file");
    }
    if (doc.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorKind::kFormat, "unsupported graph format version");
    }
    std::vector<EventNode> nodes;
    for (const auto& n : doc.at("nodes")) {
      EventNode node;
      node.id = NodeId::from_hex(n.at("id").get<std::string>());
      node.is_sentinel = n.at("sentinel").get<bool>();
      node.canonical_text = n.at("text").get<std::string>();
      node.descriptor = n.at("descriptor").get<EventDescriptor>();
      if (node.id != node_id(node.canonical_text)) {
        throw Error(ErrorKind::kFormat, "node id does not match its text: " + node.id.hex());
      }
      if (!node.is_sentinel && node.canonical_text != canonicalize(node.descriptor)) {
        throw Error(ErrorKind::kFormat, "node text is not the canonical descriptor text");
      }
      nodes.push_back(std::move(node));
    }
    std::vector<EventTransitionGraph::EdgeSpec> edges;
    for (const auto& e : doc.at("edges")) {
      edges.push_back({NodeId::from_hex(e.at("source").get<std::string>()),
                       NodeId::from_hex(e.at("target").get<std::string>()),
                       e.at("probability").get<double>(), e.at("count").get<std::uint64_t>()});
    }
    return EventTransitionGraph::from_parts(
        std::move(nodes), edges, doc.at("alpha").get<double>(),
        parse_smoothing_support(doc.at("smoothing_support").get<std::string>()),
        doc.at("segment").get<SegmentKey>());
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kFormat, std::string("malformed graph file: ") + ex.what());
  }
}

}  // namespace cxsim::graph
