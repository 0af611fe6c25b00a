#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

// Histogram-based gradient-boosted decision trees with leaf-wise growth.
namespace cxsim::gbdt {

enum class Objective { kBinary, kRegression };

std::string_view to_string(Objective objective);

struct Params {
  Objective objective = Objective::kBinary;
  int max_iterations = 1500;
  int early_stopping_rounds = 50;  // <= 0 disables early stopping
  double learning_rate = 0.1;
  int num_leaves = 31;
  int max_depth = -1;  // <= 0: unlimited
  int min_data_in_leaf = 20;
  double min_sum_hessian_in_leaf = 1e-3;
  double lambda_l2 = 0.0;
  double min_gain_to_split = 0.0;
  int max_bin = 255;
  double scale_pos_weight = 1.0;  // binary only
  double feature_fraction = 1.0;
  std::uint64_t seed = 0;

  // Throws Error(kInvalidConfig).
  void validate() const;
};

// Dense row-major feature matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by the learning rate

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> x) const;
  int leaf_count() const;

  bool operator==(const Tree&) const = default;
};

struct TrainSummary {
  int iterations_run = 0;
  int best_iteration = 0;  // number of trees kept
  std::string metric;      // "auc" or "rmse"; empty without validation
  double best_score = 0.0;

  bool operator==(const TrainSummary&) const = default;
};

class Booster {
 public:
  Booster() = default;

  // Validation rows drive early stopping (AUC for binary, RMSE for
  // regression); the ensemble is truncated to its best iteration. With an
  // empty validation set all iterations run. Throws Error(kInvalidArgument)
  // on shape problems and Error(kDegenerateDataset) when the binary
  // validation set has one class.
  static Booster train(const Matrix& x, std::span<const double> y, const Matrix& valid_x,
                       std::span<const double> valid_y, const Params& params);

  double predict_raw(std::span<const double> x) const;
  // Probability for binary, raw value for regression.
  double predict(std::span<const double> x) const;

  Objective objective() const { return objective_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t num_trees() const { return trees_.size(); }
  double init_score() const { return init_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const TrainSummary& summary() const { return summary_; }

  // Versioned little-endian binary. load throws Error(kFormat).
  void save(std::ostream& out) const;
  static Booster load(std::istream& in);

  bool operator==(const Booster&) const = default;

 private:
  Objective objective_ = Objective::kBinary;
  std::size_t num_features_ = 0;
  double init_score_ = 0.0;
  std::vector<Tree> trees_;
  TrainSummary summary_;
};

}  // namespace cxsim::gbdt
