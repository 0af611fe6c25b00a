#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cxsim/embedding.hpp"
#include "cxsim/event_model.hpp"
#include "cxsim/gbdt.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/json.hpp"

namespace cxsim::predictor {

using embedding::EmbeddingVector;
using NodeEmbeddings = std::unordered_map<NodeId, EmbeddingVector>;

struct PredictorConfig {
  double decision_threshold = 0.1;
  double positive_class_weight = 5.0;
  int max_iterations = 1500;
  int early_stopping_rounds = 50;
  double negative_subsample_rate = 1.0;
  std::uint64_t seed = 0;
  // Learner knobs.
  int num_leaves = 31;
  double learning_rate = 0.1;
  int min_data_in_leaf = 20;

  // Throws Error(kInvalidConfig).
  void validate() const;
  gbdt::Params classifier_params() const;
  gbdt::Params regressor_params() const;
};

nlohmann::json config_to_json(const PredictorConfig& config);
// Missing keys keep defaults; unknown keys throw Error(kInvalidConfig).
PredictorConfig config_from_json(const nlohmann::json& j, PredictorConfig base = {});

// concat(f_src, f_dst, f_seg). Throws Error(kDimensionMismatch).
std::vector<double> make_features(std::span<const double> f_src, std::span<const double> f_dst,
                                  std::span<const double> f_seg);

struct TrainingDataset {
  std::size_t dimension = 0;  // d; rows have 3d features
  gbdt::Matrix features;
  std::vector<int> labels;
  std::vector<double> targets;  // p for positives, 0 for negatives
  std::vector<std::pair<NodeId, NodeId>> pairs;

  std::size_t size() const { return labels.size(); }
  std::size_t positives() const;
  // SHA-256 over features, labels and targets.
  std::string fingerprint() const;
  // Throws Error(kDimensionMismatch) when dimensions differ.
  void append(const TrainingDataset& other);
};

// One row per ordered pair (i, j), i != END, j != START, in node-index order.
// Negatives are kept with probability negative_subsample_rate, drawn from a
// generator seeded by config.seed. Throws Error(kMissingEmbedding).
TrainingDataset build_dataset(const graph::EventTransitionGraph& graph, const NodeEmbeddings& embeddings,
                              std::span<const double> f_seg, const PredictorConfig& config);

class BinaryClassifier {
 public:
  virtual ~BinaryClassifier() = default;
  virtual double probability(std::span<const double> features) const = 0;
};

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double value(std::span<const double> features) const = 0;
};

class GbdtClassifier final : public BinaryClassifier {
 public:
  explicit GbdtClassifier(gbdt::Booster booster) : booster_(std::move(booster)) {}
  double probability(std::span<const double> features) const override { return booster_.predict(features); }
  const gbdt::Booster& booster() const { return booster_; }

 private:
  gbdt::Booster booster_;
};

class GbdtRegressor final : public Regressor {
 public:
  explicit GbdtRegressor(gbdt::Booster booster) : booster_(std::move(booster)) {}
  double value(std::span<const double> features) const override { return booster_.predict(features); }
  const gbdt::Booster& booster() const { return booster_; }

 private:
  gbdt::Booster booster_;
};

struct PairPrediction {
  bool exists = false;
  double probability = 0.0;
};

// Classification score and output probability for one feature row.
struct PairScore {
  double score = 0.0;
  double probability = 0.0;
};

// Common face of the hybrid model and the single-stage baselines.
class PairModel {
 public:
  virtual ~PairModel() = default;
  virtual PairScore score_pair(std::span<const double> features) const = 0;
  virtual double decision_threshold() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string_view kind() const = 0;
};

struct TrainingMetadata {
  gbdt::TrainSummary cls;
  gbdt::TrainSummary reg;
  std::size_t train_rows = 0;
  std::size_t train_positives = 0;
  std::size_t validation_rows = 0;
  std::size_t validation_positives = 0;
  std::string train_fingerprint;
  std::string validation_fingerprint;
};

// Which embedder produced the features; checked before use.
struct EmbeddingSignature {
  std::string provider;
  std::string model;
  std::size_t dimension = 0;

  bool operator==(const EmbeddingSignature&) const = default;
};

class HybridModel final : public PairModel {
 public:
  HybridModel(std::shared_ptr<const BinaryClassifier> cls, std::shared_ptr<const Regressor> reg,
              PredictorConfig config, std::size_t dimension);

  // exists = cls >= threshold; probability = clip(reg, 0, 1) when it exists,
  // else 0 and the regressor is not consulted.
  PairPrediction predict_pair(std::span<const double> f_src, std::span<const double> f_dst,
                              std::span<const double> f_seg) const;
  PairPrediction predict_features(std::span<const double> features) const;

  PairScore score_pair(std::span<const double> features) const override;
  double decision_threshold() const override { return config_.decision_threshold; }
  std::size_t dimension() const override { return dimension_; }
  std::string_view kind() const override { return "hybrid"; }

  const PredictorConfig& config() const { return config_; }
  const BinaryClassifier& classifier() const { return *cls_; }
  std::shared_ptr<const BinaryClassifier> classifier_ptr() const { return cls_; }
  const Regressor& regressor() const { return *reg_; }
  const TrainingMetadata& metadata() const { return metadata_; }
  void set_metadata(TrainingMetadata m) { metadata_ = std::move(m); }
  const EmbeddingSignature& embedding_signature() const { return signature_; }
  void set_embedding_signature(EmbeddingSignature s) { signature_ = std::move(s); }

 private:
  void check_features(std::span<const double> features) const;

  std::shared_ptr<const BinaryClassifier> cls_;
  std::shared_ptr<const Regressor> reg_;
  PredictorConfig config_;
  std::size_t dimension_;
  TrainingMetadata metadata_;
  EmbeddingSignature signature_;
};

// Regressor over every pair with score = output = clip(reg, 0, 1).
class RegressionOnlyModel final : public PairModel {
 public:
  RegressionOnlyModel(std::shared_ptr<const Regressor> reg, double threshold, std::size_t dimension)
      : reg_(std::move(reg)), threshold_(threshold), dimension_(dimension) {}
  PairScore score_pair(std::span<const double> features) const override;
  double decision_threshold() const override { return threshold_; }
  std::size_t dimension() const override { return dimension_; }
  std::string_view kind() const override { return "reg"; }

 private:
  std::shared_ptr<const Regressor> reg_;
  double threshold_;
  std::size_t dimension_;
};

// Classifier probability used directly as the transition probability.
class ClassifierOnlyModel final : public PairModel {
 public:
  ClassifierOnlyModel(std::shared_ptr<const BinaryClassifier> cls, double threshold, std::size_t dimension)
      : cls_(std::move(cls)), threshold_(threshold), dimension_(dimension) {}
  PairScore score_pair(std::span<const double> features) const override;
  double decision_threshold() const override { return threshold_; }
  std::size_t dimension() const override { return dimension_; }
  std::string_view kind() const override { return "cls"; }

 private:
  std::shared_ptr<const BinaryClassifier> cls_;
  double threshold_;
  std::size_t dimension_;
};

// Cls on all rows with the positive weight; Reg on positive rows only. Both
// stop early on the matching validation rows. Throws Error(kDegenerateDataset).
HybridModel train(const TrainingDataset& train, const TrainingDataset& validation,
                  const PredictorConfig& config);

// Regression over all rows, negatives targeting 0.
std::shared_ptr<const Regressor> train_regression_only(const TrainingDataset& train,
                                                       const TrainingDataset& validation,
                                                       const PredictorConfig& config);

struct NewEventEdges {
  std::vector<graph::RawEdge> in_edges;   // (source, weight)
  std::vector<graph::RawEdge> out_edges;  // (target, weight)
};

// Scores i -> new for every i != END and new -> j for every j != START;
// accepted edges with a positive weight are kept, in node-index order.
NewEventEdges predict_new_event_edges(const HybridModel& model, const graph::EventTransitionGraph& graph,
                                      const NodeEmbeddings& embeddings, std::span<const double> f_new,
                                      std::span<const double> f_seg);

// Directory with cls.gbdt, reg.gbdt and model.json. Loading verifies the
// artifact digests; throws Error(kFormat) on mismatch.
void save_model(const std::filesystem::path& dir, const HybridModel& model);
HybridModel load_model(const std::filesystem::path& dir);

// Embeds every node of the graph.
NodeEmbeddings embed_graph_nodes(embedding::Embedder& embedder, const graph::EventTransitionGraph& graph);

}  // namespace cxsim::predictor
