#include "cxsim/predictor.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "cxsim/digest.hpp"
#include "cxsim/error.hpp"

namespace cxsim::predictor {
namespace {

constexpr std::string_view kModelFormat = "cxsim.model";
constexpr int kModelVersion = 1;

std::string_view as_bytes(const void* data, std::size_t size) {
  return {static_cast<const char*>(data), size};
}

const EmbeddingVector& lookup(const NodeEmbeddings& embeddings, const EventNode& node, std::size_t d) {
  const auto it = embeddings.find(node.id);
  if (it == embeddings.end()) {
    throw Error(ErrorKind::kMissingEmbedding, "no embedding for node " + node.id.hex());
  }
  if (it->second.size() != d) {
    throw Error(ErrorKind::kDimensionMismatch, "embedding for node " + node.id.hex() + " has length " +
                                                   std::to_string(it->second.size()) + ", expected " +
                                                   std::to_string(d));
  }
  return it->second;
}

void append_row(TrainingDataset& ds, std::span<const double> f_src, std::span<const double> f_dst,
                std::span<const double> f_seg) {
  auto& v = ds.features.values;
  v.insert(v.end(), f_src.begin(), f_src.end());
  v.insert(v.end(), f_dst.begin(), f_dst.end());
  v.insert(v.end(), f_seg.begin(), f_seg.end());
  ++ds.features.rows;
}

gbdt::Matrix select_rows(const gbdt::Matrix& m, const std::vector<std::size_t>& rows) {
  gbdt::Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> positive_rows(const TrainingDataset& ds) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 1) rows.push_back(i);
  }
  return rows;
}

void check_trainable(const TrainingDataset& train, const TrainingDataset& validation) {
  if (train.size() == 0 || validation.size() == 0) {
    throw Error(ErrorKind::kDegenerateDataset, "training and validation sets must be non-empty");
  }
  if (train.dimension != validation.dimension) {
    throw Error(ErrorKind::kDimensionMismatch, "training and validation dimensions differ");
  }
  if (train.positives() == 0) throw Error(ErrorKind::kDegenerateDataset, "training set has no positive pairs");
  if (validation.positives() == 0 || validation.positives() == validation.size()) {
    throw Error(ErrorKind::kDegenerateDataset, "validation set has a single class");
  }
}

nlohmann::json summary_to_json(const gbdt::TrainSummary& s) {
  return {{"iterations_run", s.iterations_run},
          {"best_iteration", s.best_iteration},
          {"metric", s.metric},
          {"best_score", s.best_score}};
}

gbdt::TrainSummary summary_from_json(const nlohmann::json& j) {
  gbdt::TrainSummary s;
  s.iterations_run = j.at("iterations_run").get<int>();
  s.best_iteration = j.at("best_iteration").get<int>();
  s.metric = j.at("metric").get<std::string>();
  s.best_score = j.at("best_score").get<double>();
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void PredictorConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidConfig, what); };
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) fail("decision_threshold must be in (0, 1)");
  if (!(positive_class_weight > 0.0)) fail("positive_class_weight must be > 0");
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (early_stopping_rounds < 0) fail("early_stopping_rounds must be >= 0");
  if (!(negative_subsample_rate >= 0.0 && negative_subsample_rate <= 1.0)) {
    fail("negative_subsample_rate must be in [0, 1]");
  }
  if (num_leaves < 2) fail("num_leaves must be >= 2");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (min_data_in_leaf < 0) fail("min_data_in_leaf must be >= 0");
}

gbdt::Params PredictorConfig::classifier_params() const {
  gbdt::Params p;
  p.objective = gbdt::Objective::kBinary;
  p.max_iterations = max_iterations;
  p.early_stopping_rounds = early_stopping_rounds;
  p.learning_rate = learning_rate;
  p.num_leaves = num_leaves;
  p.min_data_in_leaf = min_data_in_leaf;
  p.scale_pos_weight = positive_class_weight;
  p.seed = seed;
  return p;
}

gbdt::Params PredictorConfig::regressor_params() const {
  gbdt::Params p = classifier_params();
  p.objective = gbdt::Objective::kRegression;
  p.scale_pos_weight = 1.0;
  return p;
}

nlohmann::json config_to_json(const PredictorConfig& c) {
  return {{"decision_threshold", c.decision_threshold},
          {"positive_class_weight", c.positive_class_weight},
          {"max_iterations", c.max_iterations},
          {"early_stopping_rounds", c.early_stopping_rounds},
          {"negative_subsample_rate", c.negative_subsample_rate},
          {"seed", c.seed},
          {"num_leaves", c.num_leaves},
          {"learning_rate", c.learning_rate},
          {"min_data_in_leaf", c.min_data_in_leaf}};
}

PredictorConfig config_from_json(const nlohmann::json& j, PredictorConfig c) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidConfig, "predictor config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "decision_threshold") c.decision_threshold = value.get<double>();
      else if (key == "positive_class_weight") c.positive_class_weight = value.get<double>();
      else if (key == "max_iterations") c.max_iterations = value.get<int>();
      else if (key == "early_stopping_rounds") c.early_stopping_rounds = value.get<int>();
      else if (key == "negative_subsample_rate") c.negative_subsample_rate = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "num_leaves") c.num_leaves = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "min_data_in_leaf") c.min_data_in_leaf = value.get<int>();
      else throw Error(ErrorKind::kInvalidConfig, "unknown predictor key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("predictor config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> make_features(std::span<const double> f_src, std::span<const double> f_dst,
                                  std::span<const double> f_seg) {
  if (f_src.size() != f_dst.size() || f_src.size() != f_seg.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "feature parts differ in length");
  }
  std::vector<double> out;
  out.reserve(3 * f_src.size());
  out.insert(out.end(), f_src.begin(), f_src.end());
  out.insert(out.end(), f_dst.begin(), f_dst.end());
  out.insert(out.end(), f_seg.begin(), f_seg.end());
  return out;
}

std::size_t TrainingDataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::string TrainingDataset::fingerprint() const {
  Sha256 h;
  const std::uint64_t d = dimension;
  h.update(as_bytes(&d, sizeof d));
  h.update(as_bytes(features.values.data(), features.values.size() * sizeof(double)));
  h.update(as_bytes(labels.data(), labels.size() * sizeof(int)));
  h.update(as_bytes(targets.data(), targets.size() * sizeof(double)));
  return h.hex_digest();
}

void TrainingDataset::append(const TrainingDataset& other) {
  if (size() == 0 && dimension == 0) {
    *this = other;
    return;
  }
  if (other.dimension != dimension) throw Error(ErrorKind::kDimensionMismatch, "dataset dimensions differ");
  features.values.insert(features.values.end(), other.features.values.begin(), other.features.values.end());
  features.rows += other.features.rows;
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
  pairs.insert(pairs.end(), other.pairs.begin(), other.pairs.end());
}

TrainingDataset build_dataset(const graph::EventTransitionGraph& graph, const NodeEmbeddings& embeddings,
                              std::span<const double> f_seg, const PredictorConfig& config) {
  config.validate();
  const std::size_t d = f_seg.size();
  if (d == 0) throw Error(ErrorKind::kDimensionMismatch, "segment embedding is empty");
  const std::size_t n = graph.node_count();
  std::vector<const EmbeddingVector*> emb(n);
  for (std::size_t i = 0; i < n; ++i) emb[i] = &lookup(embeddings, graph.node(i), d);

  TrainingDataset ds;
  ds.dimension = d;
  ds.features.cols = 3 * d;
  std::mt19937_64 rng(config.seed);
  const double rate = config.negative_subsample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == graph.end_index()) continue;
    const auto edges = graph.out_edges(i);
    std::size_t e = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == graph.start_index()) continue;
      while (e < edges.size() && edges[e].target < j) ++e;
      const bool positive = e < edges.size() && edges[e].target == j;
      if (!positive && rate < 1.0) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (!(u < rate)) continue;
      }
      append_row(ds, *emb[i], *emb[j], f_seg);
      ds.labels.push_back(positive ? 1 : 0);
      ds.targets.push_back(positive ? edges[e].probability : 0.0);
      ds.pairs.emplace_back(graph.node(i).id, graph.node(j).id);
    }
  }
  return ds;
}

HybridModel::HybridModel(std::shared_ptr<const BinaryClassifier> cls, std::shared_ptr<const Regressor> reg,
                         PredictorConfig config, std::size_t dimension)
    : cls_(std::move(cls)), reg_(std::move(reg)), config_(config), dimension_(dimension) {
  if (!cls_ || !reg_) throw Error(ErrorKind::kInvalidArgument, "hybrid model needs both stages");
  config_.validate();
}

void HybridModel::check_features(std::span<const double> features) const {
  if (features.size() != 3 * dimension_) {
    throw Error(ErrorKind::kDimensionMismatch, "expected " + std::to_string(3 * dimension_) +
                                                   " features, got " + std::to_string(features.size()));
  }
}

PairPrediction HybridModel::predict_pair(std::span<const double> f_src, std::span<const double> f_dst,
                                         std::span<const double> f_seg) const {
  if (f_src.size() != dimension_) {
    throw Error(ErrorKind::kDimensionMismatch, "embedding length differs from the model's");
  }
  return predict_features(make_features(f_src, f_dst, f_seg));
}

PairPrediction HybridModel::predict_features(std::span<const double> features) const {
  check_features(features);
  if (cls_->probability(features) < config_.decision_threshold) return {false, 0.0};
  return {true, clip01(reg_->value(features))};
}

PairScore HybridModel::score_pair(std::span<const double> features) const {
  check_features(features);
  const double s = cls_->probability(features);
  if (s < config_.decision_threshold) return {s, 0.0};
  return {s, clip01(reg_->value(features))};
}

PairScore RegressionOnlyModel::score_pair(std::span<const double> features) const {
  if (features.size() != 3 * dimension_) throw Error(ErrorKind::kDimensionMismatch, "feature length mismatch");
  const double v = clip01(reg_->value(features));
  return {v, v};
}

PairScore ClassifierOnlyModel::score_pair(std::span<const double> features) const {
  if (features.size() != 3 * dimension_) throw Error(ErrorKind::kDimensionMismatch, "feature length mismatch");
  const double v = cls_->probability(features);
  return {v, v};
}

HybridModel train(const TrainingDataset& train, const TrainingDataset& validation, const PredictorConfig& config) {
  config.validate();
  check_trainable(train, validation);

  const std::vector<double> y(train.labels.begin(), train.labels.end());
  const std::vector<double> vy(validation.labels.begin(), validation.labels.end());
  auto cls = gbdt::Booster::train(train.features, y, validation.features, vy, config.classifier_params());

  const auto tp = positive_rows(train);
  const auto vp = positive_rows(validation);
  std::vector<double> ty, vty;
  for (auto r : tp) ty.push_back(train.targets[r]);
  for (auto r : vp) vty.push_back(validation.targets[r]);
  auto reg = gbdt::Booster::train(select_rows(train.features, tp), ty, select_rows(validation.features, vp), vty,
                                  config.regressor_params());

  TrainingMetadata meta;
  meta.cls = cls.summary();
  meta.reg = reg.summary();
  meta.train_rows = train.size();
  meta.train_positives = tp.size();
  meta.validation_rows = validation.size();
  meta.validation_positives = vp.size();
  meta.train_fingerprint = train.fingerprint();
  meta.validation_fingerprint = validation.fingerprint();

  HybridModel model(std::make_shared<GbdtClassifier>(std::move(cls)), std::make_shared<GbdtRegressor>(std::move(reg)),
                    config, train.dimension);
  model.set_metadata(std::move(meta));
  return model;
}

std::shared_ptr<const Regressor> train_regression_only(const TrainingDataset& train,
                                                       const TrainingDataset& validation,
                                                       const PredictorConfig& config) {
  config.validate();
  check_trainable(train, validation);
  auto reg = gbdt::Booster::train(train.features, train.targets, validation.features, validation.targets,
                                  config.regressor_params());
  return std::make_shared<GbdtRegressor>(std::move(reg));
}

NewEventEdges predict_new_event_edges(const HybridModel& model, const graph::EventTransitionGraph& graph,
                                      const NodeEmbeddings& embeddings, std::span<const double> f_new,
                                      std::span<const double> f_seg) {
  const std::size_t d = model.dimension();
  if (f_new.size() != d || f_seg.size() != d) {
    throw Error(ErrorKind::kDimensionMismatch, "campaign or segment embedding length differs from the model's");
  }
  NewEventEdges out;
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const auto& f_i = lookup(embeddings, graph.node(i), d);
    if (i != graph.end_index()) {
      const auto p = model.predict_features(make_features(f_i, f_new, f_seg));
      if (p.exists && p.probability > 0.0) out.in_edges.emplace_back(graph.node(i).id, p.probability);
    }
    if (i != graph.start_index()) {
      const auto p = model.predict_features(make_features(f_new, f_i, f_seg));
      if (p.exists && p.probability > 0.0) out.out_edges.emplace_back(graph.node(i).id, p.probability);
    }
  }
  return out;
}

void save_model(const std::filesystem::path& dir, const HybridModel& model) {
  const auto* cls = dynamic_cast<const GbdtClassifier*>(&model.classifier());
  const auto* reg = dynamic_cast<const GbdtRegressor*>(&model.regressor());
  if (cls == nullptr || reg == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "only tree-ensemble models can be saved");
  }
  std::filesystem::create_directories(dir);
  std::ostringstream cls_bytes, reg_bytes;
  cls->booster().save(cls_bytes);
  reg->booster().save(reg_bytes);
  write_file(dir / "cls.gbdt", cls_bytes.str());
  write_file(dir / "reg.gbdt", reg_bytes.str());

  const auto& m = model.metadata();
  const auto& sig = model.embedding_signature();
  nlohmann::json j = {
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"kind", "hybrid"},
      {"embedding_dimension", model.dimension()},
      {"feature_dimension", 3 * model.dimension()},
      {"embedding", {{"provider", sig.provider}, {"model", sig.model}, {"dimension", sig.dimension}}},
      {"config", config_to_json(model.config())},
      {"training",
       {{"cls", summary_to_json(m.cls)},
        {"reg", summary_to_json(m.reg)},
        {"train_rows", m.train_rows},
        {"train_positives", m.train_positives},
        {"validation_rows", m.validation_rows},
        {"validation_positives", m.validation_positives},
        {"train_sha256", m.train_fingerprint},
        {"validation_sha256", m.validation_fingerprint}}},
      {"artifacts",
       {{"cls", {{"file", "cls.gbdt"}, {"sha256", sha256_hex(cls_bytes.str())}}},
        {"reg", {{"file", "reg.gbdt"}, {"sha256", sha256_hex(reg_bytes.str())}}}}}};
  write_file(dir / "model.json", j.dump(2) + "\n");
}

HybridModel load_model(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "model.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("model.json: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error(ErrorKind::kFormat, "not a model directory");
    if (j.at("version").get<int>() != kModelVersion) throw Error(ErrorKind::kFormat, "unsupported model version");
    const auto d = j.at("embedding_dimension").get<std::size_t>();
    if (d == 0 || j.at("feature_dimension").get<std::size_t>() != 3 * d) {
      throw Error(ErrorKind::kFormat, "inconsistent feature dimension");
    }
    auto load_booster = [&](const char* name, gbdt::Objective objective) {
      const auto& a = j.at("artifacts").at(name);
      const auto file = a.at("file").get<std::string>();
      if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
        throw Error(ErrorKind::kFormat, "artifact path must be a plain file name");
      }
      const auto bytes = read_file(dir / file);
      if (sha256_hex(bytes) != a.at("sha256").get<std::string>()) {
        throw Error(ErrorKind::kFormat, std::string(name) + " artifact digest mismatch");
      }
      std::istringstream in(bytes);
      auto b = gbdt::Booster::load(in);
      if (b.objective() != objective || b.num_features() != 3 * d) {
        throw Error(ErrorKind::kFormat, std::string(name) + " artifact does not match the metadata");
      }
      return b;
    };
    auto cls = load_booster("cls", gbdt::Objective::kBinary);
    auto reg = load_booster("reg", gbdt::Objective::kRegression);
    HybridModel model(std::make_shared<GbdtClassifier>(std::move(cls)),
                      std::make_shared<GbdtRegressor>(std::move(reg)), config_from_json(j.at("config")), d);
    const auto& t = j.at("training");
    TrainingMetadata m;
    m.cls = summary_from_json(t.at("cls"));
    m.reg = summary_from_json(t.at("reg"));
    m.train_rows = t.at("train_rows").get<std::size_t>();
    m.train_positives = t.at("train_positives").get<std::size_t>();
    m.validation_rows = t.at("validation_rows").get<std::size_t>();
    m.validation_positives = t.at("validation_positives").get<std::size_t>();
    m.train_fingerprint = t.at("train_sha256").get<std::string>();
    m.validation_fingerprint = t.at("validation_sha256").get<std::string>();
    model.set_metadata(std::move(m));
    const auto& e = j.at("embedding");
    model.set_embedding_signature({e.at("provider").get<std::string>(), e.at("model").get<std::string>(),
                                   e.at("dimension").get<std::size_t>()});
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("model.json: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidConfig) throw Error(ErrorKind::kFormat, e.what());
    throw;
  }
}

NodeEmbeddings embed_graph_nodes(embedding::Embedder& embedder, const graph::EventTransitionGraph& graph) {
  std::vector<std::string> texts;
  texts.reserve(graph.node_count());
  for (const auto& n : graph.nodes()) texts.push_back(n.canonical_text);
  auto vectors = embedder.embed_texts(texts);
  NodeEmbeddings out;
  for (std::size_t i = 0; i < graph.node_count(); ++i) out.emplace(graph.node(i).id, std::move(vectors[i]));
  return out;
}

}  // namespace cxsim::predictor
