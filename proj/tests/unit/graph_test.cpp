#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cxsim/error.hpp"
#include "cxsim/graph.hpp"
#include "oracles.hpp"

using namespace cxsim;
using namespace cxsim::graph;

namespace {

EventDescriptor ev(const std::string& name) { return EventDescriptor{{"actionType", name}}; }
NodeId id_of(const std::string& name) { return EventNode::from_descriptor(ev(name)).id; }

std::vector<SessionRecord> sessions_of(const oracle::LabelSessions& labels) {
  std::vector<SessionRecord> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SessionRecord s;
    s.session_id = "s" + std::to_string(i);
    s.segment = SegmentKey{{"country", "United States"}};
    std::int64_t t = 0;
    for (const auto& name : labels[i]) s.events.push_back({t++, ev(name)});
    out.push_back(std::move(s));
  }
  return out;
}

std::string label_of(const EventNode& node) {
  if (node.id == session_start_id()) return "<start>";
  if (node.id == session_end_id()) return "<end>";
  return std::string(*node.descriptor.get("actionType"));
}

void check_row_stochastic(const EventTransitionGraph& g) {
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (i == g.end_index()) {
      CHECK(g.out_edges(i).empty());
      continue;
    }
    double sum = 0;
    for (const auto& e : g.out_edges(i)) {
      CHECK(e.target != g.start_index());
      sum += e.probability;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

}  // namespace

TEST_CASE("count_transitions on a single session") {
  auto counts = count_transitions(sessions_of({{"A", "B"}}));
  CHECK(counts.count(session_start_id(), id_of("A")) == 1);
  CHECK(counts.count(id_of("A"), id_of("B")) == 1);
  CHECK(counts.count(id_of("B"), session_end_id()) == 1);
  CHECK(counts.nodes.size() == 4);
}

TEST_CASE("count_transitions accumulates across sessions") {
  // Hand count over [A,B], [A,C], [A,B].
  auto counts = count_transitions(sessions_of({{"A", "B"}, {"A", "C"}, {"A", "B"}}));
  CHECK(counts.count(id_of("A"), id_of("B")) == 2);
  CHECK(counts.count(id_of("A"), id_of("C")) == 1);
  CHECK(counts.total(id_of("A")) == 3);
  CHECK(counts.successor_count(id_of("A")) == 2);
  CHECK(counts.count(session_start_id(), id_of("A")) == 3);
  CHECK(counts.count(id_of("B"), session_end_id()) == 2);
  CHECK(counts.count(id_of("C"), session_end_id()) == 1);
}

TEST_CASE("self loops are counted") {
  auto counts = count_transitions(sessions_of({{"A", "A"}}));
  CHECK(counts.count(id_of("A"), id_of("A")) == 1);
}

TEST_CASE("empty session list is rejected") {
  CHECK_THROWS_AS(count_transitions({}), Error);
}

TEST_CASE("smoothed probability matches hand arithmetic") {
  // c_AB = 3, c_AC = 1, alpha = 5, k_A = 2: 8/14 and 6/14.
  auto counts = count_transitions(
      sessions_of({{"A", "B"}, {"A", "B"}, {"A", "B"}, {"A", "C"}}));
  CHECK(smoothed_probability(counts, id_of("A"), id_of("B"), 5.0) == 8.0 / 14.0);
  CHECK(smoothed_probability(counts, id_of("A"), id_of("C"), 5.0) == 6.0 / 14.0);
  CHECK(smoothed_probability(counts, id_of("B"), session_end_id(), 5.0) == 1.0);
  // alpha = 0 is maximum likelihood.
  CHECK(smoothed_probability(counts, id_of("A"), id_of("B"), 0.0) == 0.75);
  try {
    smoothed_probability(counts, id_of("B"), id_of("C"), 5.0);
    FAIL("expected UnobservedEdge");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnobservedEdge);
  }
}

TEST_CASE("all-node smoothing support spreads mass over every destination") {
  auto counts = count_transitions(sessions_of({{"A", "B"}}));
  // Destinations excluding START: A, B, END. Row A: c_AB = 1, c_A = 1.
  CHECK(smoothed_probability(counts, id_of("A"), id_of("B"), 1.0, SmoothingSupport::kAll) ==
        doctest::Approx(2.0 / 4.0));
  CHECK(smoothed_probability(counts, id_of("A"), id_of("A"), 1.0, SmoothingSupport::kAll) ==
        doctest::Approx(1.0 / 4.0));
  auto g = build_graph(sessions_of({{"A", "B"}}), {.alpha = 1.0, .support = SmoothingSupport::kAll});
  CHECK(g.edge_count() == 9);  // 3 sources x 3 destinations
  check_row_stochastic(g);
}

TEST_CASE("one-event session builds a three-node chain") {
  auto g = build_graph(sessions_of({{"A"}}));
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
  CHECK(g.probability(session_start_id(), id_of("A")) == 1.0);
  CHECK(g.probability(id_of("A"), session_end_id()) == 1.0);
  CHECK(g.segment() == SegmentKey{{"country", "United States"}});
}

TEST_CASE("build_graph equals the brute-force oracle on a 20-session fixture") {
  const oracle::LabelSessions fixture = {
      {"A", "B", "C"}, {"A", "C"},      {"B"},           {"A", "A", "B"}, {"C", "D", "E"},
      {"D"},           {"E", "A"},      {"A", "B", "C"}, {"B", "C", "D"}, {"C"},
      {"A", "D"},      {"D", "D", "D"}, {"E"},           {"B", "E"},      {"A", "B"},
      {"C", "A"},      {"E", "E", "A"}, {"D", "B"},      {"A"},           {"B", "A", "C"}};
  auto g = build_graph(sessions_of(fixture), {.alpha = 5.0});
  auto expected = oracle::smoothed_edges(fixture, 5.0);
  CHECK(g.edge_count() == expected.size());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (const auto& e : g.out_edges(i)) {
      auto key = std::make_pair(label_of(g.node(i)), label_of(g.node(e.target)));
      REQUIRE(expected.contains(key));
      CHECK(std::abs(e.probability - expected.at(key)) <= 1e-12);
    }
  }
  check_row_stochastic(g);
}

TEST_CASE("build_graph matches the oracle on random session sets (property)") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    oracle::LabelSessions labels(1 + rng() % 12);
    for (auto& s : labels) {
      s.resize(1 + rng() % 8);
      for (auto& e : s) e = std::string(1, static_cast<char>('A' + rng() % 8));
    }
    const double alpha = static_cast<double>(rng() % 6);
    auto g = build_graph(sessions_of(labels), {.alpha = alpha});
    auto expected = oracle::smoothed_edges(labels, alpha);
    REQUIRE(g.edge_count() == expected.size());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      for (const auto& e : g.out_edges(i)) {
        auto key = std::make_pair(label_of(g.node(i)), label_of(g.node(e.target)));
        REQUIRE(std::abs(e.probability - expected.at(key)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("insert_event identity case") {
  auto g = build_graph(sessions_of({{"A", "B"}, {"A"}}));
  auto v = EventNode::from_descriptor(ev("Campaign"));
  auto t = insert_event(g, v, {}, {});
  CHECK(t.node_count() == g.node_count() + 1);
  CHECK(t.probability(v.id, session_end_id()) == 1.0);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (const auto& e : g.out_edges(i)) {
      CHECK(t.probability(g.node(i).id, g.node(e.target).id) == e.probability);
    }
  }
  CHECK_FALSE(g.index_of(v.id).has_value());
}

TEST_CASE("insert_event halves a deterministic row at q = 1") {
  auto g = build_graph(sessions_of({{"A", "X"}}));
  auto v = EventNode::from_descriptor(ev("New"));
  auto t = insert_event(g, v, {{id_of("A"), 1.0}}, {});
  CHECK(t.probability(id_of("A"), id_of("X")) == 0.5);
  CHECK(t.probability(id_of("A"), v.id) == 0.5);
}

TEST_CASE("insert_event renormalization on a three-node fixture") {
  // alpha = 0: START->A 2/3, START->B 1/3, A->B 1/2, A->END 1/2, B->END 1.
  auto g = build_graph(sessions_of({{"A", "B"}, {"A"}, {"B"}}), {.alpha = 0.0});
  REQUIRE(g.probability(session_start_id(), id_of("A")) == doctest::Approx(2.0 / 3.0));
  auto v = EventNode::from_descriptor(ev("New"));
  auto t = insert_event(g, v, {{session_start_id(), 0.2}, {id_of("A"), 0.5}},
                        {{id_of("B"), 0.3}, {session_end_id(), 0.1}});
  // Hand values: START row scaled by 1/1.2, A row by 1/1.5.
  CHECK(t.probability(session_start_id(), id_of("A")) == doctest::Approx(0.5555555555555556).epsilon(1e-15));
  CHECK(t.probability(session_start_id(), id_of("B")) == doctest::Approx(0.2777777777777778).epsilon(1e-15));
  CHECK(t.probability(session_start_id(), v.id) == doctest::Approx(0.1666666666666667).epsilon(1e-15));
  CHECK(t.probability(id_of("A"), id_of("B")) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(t.probability(id_of("A"), session_end_id()) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(t.probability(id_of("A"), v.id) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(t.probability(v.id, id_of("B")) == doctest::Approx(0.75));
  CHECK(t.probability(v.id, session_end_id()) == doctest::Approx(0.25));
  CHECK(t.probability(id_of("B"), session_end_id()) == 1.0);
  check_row_stochastic(t);
}

TEST_CASE("insert_event errors") {
  auto g = build_graph(sessions_of({{"A"}}));
  auto v = EventNode::from_descriptor(ev("New"));
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  CHECK(kind_of([&] { insert_event(g, v, {{id_of("A"), 0.0}}, {}); }) == ErrorKind::kInvalidWeight);
  CHECK(kind_of([&] { insert_event(g, v, {}, {{id_of("A"), 1.5}}); }) == ErrorKind::kInvalidWeight);
  CHECK(kind_of([&] { insert_event(g, EventNode::from_descriptor(ev("A")), {}, {}); }) ==
        ErrorKind::kDuplicateNode);
  CHECK(kind_of([&] { insert_event(g, v, {{session_end_id(), 0.5}}, {}); }) ==
        ErrorKind::kSentinelViolation);
  CHECK(kind_of([&] { insert_event(g, v, {}, {{session_start_id(), 0.5}}); }) ==
        ErrorKind::kSentinelViolation);
  CHECK(kind_of([&] { insert_event(g, EventNode::session_end(), {}, {}); }) ==
        ErrorKind::kSentinelViolation);
}

TEST_CASE("graph files round trip bit-exactly") {
  auto g = build_graph(sessions_of({{"A", "B", "C"}, {"A", "C"}, {"B"}, {"C", "A", "A"}}), {.alpha = 5.0});
  auto t = insert_event(g, EventNode::from_descriptor(ev("New \"quoted\"")), {{id_of("A"), 0.37}}, {});
  const std::string text = to_json_text(t);
  std::istringstream in(text);
  auto back = read_graph(in);
  CHECK(back == t);
  CHECK(to_json_text(back) == text);
}

TEST_CASE("corrupted graph files are rejected") {
  auto g = build_graph(sessions_of({{"A", "B"}}));
  std::string text = to_json_text(g);
  auto pos = text.find("\"probability\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 16, "\"probability\": 0.5");
  std::istringstream in(text);
  CHECK_THROWS_AS(read_graph(in), Error);
}

TEST_CASE("visits and valid pair count") {
  auto g = build_graph(sessions_of({{"A", "B"}, {"A"}}));
  CHECK(g.visits(*g.index_of(id_of("A"))) == 2);
  CHECK(g.visits(g.start_index()) == 2);
  CHECK(g.visits(g.end_index()) == 2);
  CHECK(g.valid_pair_count() == 9);  // (4 - 1)^2
}
