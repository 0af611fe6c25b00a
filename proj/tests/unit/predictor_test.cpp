#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <set>

#include "cxsim/error.hpp"
#include "cxsim/predictor.hpp"
#include "oracles.hpp"
#include "planted.hpp"
#include "temp_dir.hpp"

using namespace cxsim;
using namespace cxsim::predictor;

namespace {

constexpr std::size_t kDim = 32;

EventDescriptor ev(const std::string& name) { return EventDescriptor{{"actionType", name}}; }

std::vector<SessionRecord> sessions_of(const oracle::LabelSessions& labels) {
  std::vector<SessionRecord> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SessionRecord s;
    s.session_id = "s" + std::to_string(i);
    for (std::size_t k = 0; k < labels[i].size(); ++k) {
      s.events.push_back({static_cast<std::int64_t>(k), ev(labels[i][k])});
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string label_of(const EventNode& node) {
  if (node.id == session_start_id()) return "<start>";
  if (node.id == session_end_id()) return "<end>";
  return std::string(*node.descriptor.get("actionType"));
}

NodeEmbeddings hash_embeddings(const graph::EventTransitionGraph& g) {
  NodeEmbeddings out;
  for (const auto& n : g.nodes()) out.emplace(n.id, embedding::hash_embed(n.canonical_text, kDim));
  return out;
}

std::vector<double> seg() { return embedding::hash_embed("{}", kDim); }

struct FixedClassifier : BinaryClassifier {
  double p;
  explicit FixedClassifier(double v) : p(v) {}
  double probability(std::span<const double>) const override { return p; }
};

struct CountingRegressor : Regressor {
  double v;
  mutable std::atomic<int> calls{0};
  explicit CountingRegressor(double x) : v(x) {}
  double value(std::span<const double>) const override {
    ++calls;
    return v;
  }
};

// Accepts only feature rows whose source and destination blocks match.
struct PairClassifier : BinaryClassifier {
  std::vector<double> src, dst;
  double probability(std::span<const double> f) const override {
    const std::size_t d = src.size();
    return std::equal(src.begin(), src.end(), f.begin()) &&
                   std::equal(dst.begin(), dst.end(), f.begin() + static_cast<std::ptrdiff_t>(d))
               ? 1.0
               : 0.0;
  }
};

const oracle::LabelSessions kLabels = {{"A", "B", "C"}, {"A", "C"}, {"B"}, {"C", "A", "B"}};

}  // namespace

TEST_CASE("build_dataset enumerates every valid ordered pair") {
  const auto sessions = sessions_of(kLabels);
  const auto g = graph::build_graph(sessions, graph::GraphConfig{});
  const auto emb = hash_embeddings(g);
  const auto table = oracle::smoothed_edges(kLabels, 5.0);
  const auto ds = build_dataset(g, emb, seg(), PredictorConfig{});

  // Brute-force pair enumeration over labels.
  std::set<std::pair<std::string, std::string>> expected;
  const std::vector<std::string> labels = {"<start>", "A", "B", "C", "<end>"};
  for (const auto& a : labels) {
    for (const auto& b : labels) {
      if (a != "<end>" && b != "<start>") expected.emplace(a, b);
    }
  }
  CHECK(ds.size() == expected.size());
  CHECK(ds.size() == g.valid_pair_count());
  CHECK(ds.positives() == table.size());
  CHECK(ds.features.rows == ds.size());
  CHECK(ds.features.cols == 3 * kDim);

  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto a = label_of(g.node(*g.index_of(ds.pairs[r].first)));
    const auto b = label_of(g.node(*g.index_of(ds.pairs[r].second)));
    seen.emplace(a, b);
    const auto it = table.find({a, b});
    CHECK(ds.labels[r] == (it != table.end() ? 1 : 0));
    CHECK(ds.targets[r] == doctest::Approx(it != table.end() ? it->second : 0.0).epsilon(1e-12));
    const auto row = ds.features.row(r);
    const auto& fa = emb.at(ds.pairs[r].first);
    const auto& fb = emb.at(ds.pairs[r].second);
    CHECK(std::equal(fa.begin(), fa.end(), row.begin()));
    CHECK(std::equal(fb.begin(), fb.end(), row.begin() + kDim));
  }
  CHECK(seen == expected);
}

TEST_CASE("paper-scale pair count") {
  // 1,350 nodes give 1350^2 ordered pairs under the sentinel rules when the
  // two sentinels are among them: (N - 1)^2 with N = 1351.
  CHECK(1350ULL * 1350ULL == 1'822'500ULL);
}

TEST_CASE("negative subsampling keeps every positive") {
  const auto g = graph::build_graph(sessions_of(kLabels), graph::GraphConfig{});
  const auto emb = hash_embeddings(g);
  PredictorConfig c;
  c.negative_subsample_rate = 0.0;
  const auto pos_only = build_dataset(g, emb, seg(), c);
  CHECK(pos_only.size() == pos_only.positives());
  CHECK(pos_only.positives() == oracle::smoothed_edges(kLabels, 5.0).size());

  c.negative_subsample_rate = 0.5;
  c.seed = 3;
  const auto half_a = build_dataset(g, emb, seg(), c);
  const auto half_b = build_dataset(g, emb, seg(), c);
  CHECK(half_a.positives() == pos_only.positives());
  CHECK(half_a.fingerprint() == half_b.fingerprint());
}

TEST_CASE("build_dataset reports missing embeddings") {
  const auto g = graph::build_graph(sessions_of(kLabels), graph::GraphConfig{});
  auto emb = hash_embeddings(g);
  emb.erase(g.node(1).id);
  try {
    build_dataset(g, emb, seg(), PredictorConfig{});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingEmbedding);
    CHECK(std::string(e.what()).find(g.node(1).id.hex()) != std::string::npos);
  }
}

TEST_CASE("train rejects degenerate datasets") {
  const auto g = graph::build_graph(sessions_of(kLabels), graph::GraphConfig{});
  const auto emb = hash_embeddings(g);
  const auto full = build_dataset(g, emb, seg(), PredictorConfig{});

  TrainingDataset negatives;
  negatives.dimension = kDim;
  negatives.features.cols = 3 * kDim;
  for (std::size_t r = 0; r < full.size(); ++r) {
    if (full.labels[r] == 1) continue;
    const auto row = full.features.row(r);
    negatives.features.values.insert(negatives.features.values.end(), row.begin(), row.end());
    ++negatives.features.rows;
    negatives.labels.push_back(0);
    negatives.targets.push_back(0.0);
    negatives.pairs.push_back(full.pairs[r]);
  }
  auto expect_degenerate = [](auto&& fn) {
    try {
      fn();
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDegenerateDataset);
    }
  };
  expect_degenerate([&] { train(negatives, full, PredictorConfig{}); });
  expect_degenerate([&] { train(full, negatives, PredictorConfig{}); });
  expect_degenerate([&] { train(full, TrainingDataset{}, PredictorConfig{}); });
}

TEST_CASE("predict_pair gates the regressor on the classifier") {
  const auto f = std::vector<double>(kDim, 0.1);
  auto run = [&](double cls, double reg_value, int expected_calls) {
    auto reg = std::make_shared<CountingRegressor>(reg_value);
    HybridModel m(std::make_shared<FixedClassifier>(cls), reg, PredictorConfig{}, kDim);
    const auto p = m.predict_pair(f, f, f);
    CHECK(reg->calls == expected_calls);
    return p;
  };
  SUBCASE("below threshold") {
    const auto p = run(0.05, 0.7, 0);
    CHECK_FALSE(p.exists);
    CHECK(p.probability == 0.0);
  }
  SUBCASE("clipped above") {
    const auto p = run(0.95, 1.2, 1);
    CHECK(p.exists);
    CHECK(p.probability == 1.0);
  }
  SUBCASE("clipped below") {
    const auto p = run(0.95, -0.3, 1);
    CHECK(p.exists);
    CHECK(p.probability == 0.0);
  }
  SUBCASE("boundary is inclusive") {
    const auto p = run(0.1, 0.4, 1);
    CHECK(p.exists);
    CHECK(p.probability == 0.4);
  }
}

TEST_CASE("predict_pair is pure and checks dimensions") {
  auto reg = std::make_shared<CountingRegressor>(0.3);
  HybridModel m(std::make_shared<FixedClassifier>(0.5), reg, PredictorConfig{}, kDim);
  const auto f = std::vector<double>(kDim, 0.2);
  const auto a = m.predict_pair(f, f, f);
  const auto b = m.predict_pair(f, f, f);
  CHECK(a.exists == b.exists);
  CHECK(a.probability == b.probability);
  const auto short_f = std::vector<double>(kDim - 1, 0.2);
  try {
    (void)m.predict_pair(short_f, short_f, short_f);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimensionMismatch);
  }
  CHECK_THROWS_AS((void)make_features(f, short_f, f), Error);
}

TEST_CASE("predict_new_event_edges with stub models") {
  const auto g = graph::build_graph(sessions_of(kLabels), graph::GraphConfig{});
  const auto emb = hash_embeddings(g);
  const auto f_new = embedding::hash_embed("campaign", kDim);

  SUBCASE("reject all") {
    auto reg = std::make_shared<CountingRegressor>(0.5);
    HybridModel m(std::make_shared<FixedClassifier>(0.0), reg, PredictorConfig{}, kDim);
    const auto e = predict_new_event_edges(m, g, emb, f_new, seg());
    CHECK(e.in_edges.empty());
    CHECK(e.out_edges.empty());
    CHECK(reg->calls == 0);
  }
  SUBCASE("accept only new -> conversion") {
    const auto conv = EventNode::from_descriptor(ev("C"));
    auto cls = std::make_shared<PairClassifier>();
    cls->src = f_new;
    cls->dst = emb.at(conv.id);
    auto reg = std::make_shared<CountingRegressor>(1.0);
    HybridModel m(cls, reg, PredictorConfig{}, kDim);
    const auto e = predict_new_event_edges(m, g, emb, f_new, seg());
    CHECK(e.in_edges.empty());
    REQUIRE(e.out_edges.size() == 1);
    CHECK(e.out_edges[0].first == conv.id);
    CHECK(e.out_edges[0].second == 1.0);
    CHECK(reg->calls == 1);
  }
  SUBCASE("sentinel rules") {
    HybridModel m(std::make_shared<FixedClassifier>(1.0), std::make_shared<CountingRegressor>(0.5),
                  PredictorConfig{}, kDim);
    const auto e = predict_new_event_edges(m, g, emb, f_new, seg());
    CHECK(e.in_edges.size() == g.node_count() - 1);
    CHECK(e.out_edges.size() == g.node_count() - 1);
    for (const auto& [id, w] : e.in_edges) CHECK(id != session_end_id());
    for (const auto& [id, w] : e.out_edges) CHECK(id != session_start_id());
  }
  SUBCASE("zero weights are dropped") {
    HybridModel m(std::make_shared<FixedClassifier>(1.0), std::make_shared<CountingRegressor>(0.0),
                  PredictorConfig{}, kDim);
    const auto e = predict_new_event_edges(m, g, emb, f_new, seg());
    CHECK(e.in_edges.empty());
    CHECK(e.out_edges.empty());
  }
}

TEST_CASE("config validation and JSON") {
  PredictorConfig c;
  c.decision_threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.positive_class_weight = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), Error);

  c = {};
  c.seed = 77;
  c.decision_threshold = 0.2;
  const auto back = config_from_json(config_to_json(c));
  CHECK(back.seed == 77);
  CHECK(back.decision_threshold == 0.2);
  try {
    config_from_json(nlohmann::json{{"threshold", 0.2}});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidConfig);
  }
}

TEST_CASE("planted structure: training, determinism, persistence") {
  const planted::PlantedConfig pc;
  const auto world = planted::make_world(pc, 1);
  const auto result = planted::run_benchmark(world, 1);
  const auto& model = *result.model;

  // Validation ROC-AUC of the classifier at its best iteration.
  CHECK(model.metadata().cls.metric == "auc");
  CHECK(model.metadata().cls.best_score >= 0.9);
  CHECK(result.hybrid.roc_auc.value() >= 0.9);

  SUBCASE("same seed, same predictions") {
    const auto again = planted::run_benchmark(world, 1);
    const auto probe = build_dataset(world.graphs[2], world.embeddings, world.f_seg, PredictorConfig{});
    for (std::size_t r = 0; r < probe.size(); r += 7) {
      const auto a = model.predict_features(probe.features.row(r));
      const auto b = again.model->predict_features(probe.features.row(r));
      REQUIRE(a.exists == b.exists);
      REQUIRE(a.probability == b.probability);
    }
  }

  SUBCASE("held-out node replayed as a new event") {
    CHECK(planted::held_out_edge_f1(world, model, 10) >= 0.8);
  }

  SUBCASE("save and load") {
    test::TempDir dir;
    auto copy = model;
    copy.set_embedding_signature({"hash", "fnv1a-signed-v1", pc.dimension});
    save_model(dir.path() / "m", copy);
    const auto loaded = load_model(dir.path() / "m");
    CHECK(loaded.dimension() == pc.dimension);
    CHECK(loaded.embedding_signature() == copy.embedding_signature());
    CHECK(loaded.metadata().train_fingerprint == model.metadata().train_fingerprint);
    CHECK(loaded.metadata().cls == model.metadata().cls);
    const auto probe = build_dataset(world.graphs[2], world.embeddings, world.f_seg, PredictorConfig{});
    for (std::size_t r = 0; r < probe.size(); r += 5) {
      CHECK(loaded.score_pair(probe.features.row(r)).score == model.score_pair(probe.features.row(r)).score);
      CHECK(loaded.score_pair(probe.features.row(r)).probability ==
            model.score_pair(probe.features.row(r)).probability);
    }

    {
      std::fstream f(dir.path() / "m" / "cls.gbdt", std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(40);
      f.put('\x7f');
    }
    try {
      load_model(dir.path() / "m");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
    }
  }
}
