#include "cxsim/gbdt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "cxsim/error.hpp"
#include "cxsim/metrics.hpp"

namespace cxsim::gbdt {
namespace {

constexpr std::size_t kBinSampleRows = 200'000;
constexpr char kMagic[8] = {'C', 'X', 'S', 'G', 'B', 'D', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

struct BinMapper {
  std::vector<double> thresholds;  // strictly increasing; bin(x) = #{t < x}

  std::size_t bins() const { return thresholds.size() + 1; }
  std::uint8_t bin(double x) const {
    return static_cast<std::uint8_t>(
        std::lower_bound(thresholds.begin(), thresholds.end(), x) - thresholds.begin());
  }
};

double midpoint_below(double a, double b) {
  double m = a + (b - a) / 2.0;
  if (m >= b) m = a;
  return m;
}

BinMapper make_mapper(std::vector<double> values, int max_bin) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (double v : values) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  BinMapper mapper;
  if (distinct.size() <= static_cast<std::size_t>(max_bin)) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
      mapper.thresholds.push_back(midpoint_below(distinct[i], distinct[i + 1]));
    }
    return mapper;
  }
  const double per_bin = static_cast<double>(values.size()) / max_bin;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    acc += static_cast<double>(counts[i]);
    if (acc >= per_bin * static_cast<double>(mapper.thresholds.size() + 1)) {
      mapper.thresholds.push_back(midpoint_below(distinct[i], distinct[i + 1]));
      if (mapper.thresholds.size() + 1 == static_cast<std::size_t>(max_bin)) break;
    }
  }
  return mapper;
}

struct BinnedData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<BinMapper> mappers;
  std::vector<std::size_t> offsets;
  std::size_t total_bins = 0;
  std::vector<std::uint8_t> bins;  // column-major

  std::uint8_t at(std::size_t feature, std::size_t row) const { return bins[feature * rows + row]; }
};

BinnedData bin_data(const Matrix& x, int max_bin) {
  BinnedData data;
  data.rows = x.rows;
  data.cols = x.cols;
  const std::size_t stride = std::max<std::size_t>(1, x.rows / kBinSampleRows);
  data.mappers.reserve(x.cols);
  data.offsets.reserve(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    std::vector<double> sample;
    sample.reserve(x.rows / stride + 1);
    for (std::size_t r = 0; r < x.rows; r += stride) sample.push_back(x.values[r * x.cols + f]);
    data.mappers.push_back(make_mapper(std::move(sample), max_bin));
    data.offsets.push_back(data.total_bins);
    data.total_bins += data.mappers.back().bins();
  }
  data.bins.resize(x.rows * x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    const auto& m = data.mappers[f];
    for (std::size_t r = 0; r < x.rows; ++r) data.bins[f * x.rows + r] = m.bin(x.values[r * x.cols + f]);
  }
  return data;
}

struct HistEntry {
  double g = 0.0;
  double h = 0.0;
  std::size_t count = 0;
};
using Histogram = std::vector<HistEntry>;

struct SplitInfo {
  bool valid = false;
  double gain = 0.0;
  std::size_t feature = 0;
  std::size_t bin = 0;
  double left_g = 0.0, left_h = 0.0, right_g = 0.0, right_h = 0.0;
  std::size_t left_count = 0, right_count = 0;
};

struct Leaf {
  std::size_t begin = 0;
  std::size_t end = 0;
  double sum_g = 0.0;
  double sum_h = 0.0;
  int depth = 0;
  int node = 0;
  Histogram hist;
  SplitInfo best;

  std::size_t count() const { return end - begin; }
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, const Params& params)
      : data_(data), params_(params), indices_(data.rows) {}

  // Grows one tree; row_output receives each training row's leaf value.
  Tree build(std::span<const double> grad, std::span<const double> hess,
             const std::vector<std::size_t>& features, std::vector<double>& row_output) {
    std::iota(indices_.begin(), indices_.end(), 0);
    grad_ = grad;
    hess_ = hess;
    features_ = &features;

    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves(1);
    Leaf& root = leaves[0];
    root.begin = 0;
    root.end = data_.rows;
    for (std::size_t r = 0; r < data_.rows; ++r) {
      root.sum_g += grad[r];
      root.sum_h += hess[r];
    }
    root.hist = build_hist(root);
    find_best_split(root);

    while (leaves.size() < static_cast<std::size_t>(params_.num_leaves)) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].best.valid) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;
      split_leaf(tree, leaves, pick);
    }

    for (const auto& leaf : leaves) {
      const double out = leaf_output(leaf.sum_g, leaf.sum_h);
      tree.nodes[static_cast<std::size_t>(leaf.node)].value = out;
      for (std::size_t k = leaf.begin; k < leaf.end; ++k) row_output[indices_[k]] = out;
    }
    return tree;
  }

 private:
  double leaf_output(double g, double h) const {
    const double denom = h + params_.lambda_l2;
    return denom > 0.0 ? -g / denom * params_.learning_rate : 0.0;
  }

  double score(double g, double h) const {
    const double denom = h + params_.lambda_l2;
    return denom > 0.0 ? g * g / denom : 0.0;
  }

  Histogram build_hist(const Leaf& leaf) const {
    Histogram hist(data_.total_bins);
    for (std::size_t f : *features_) {
      const std::uint8_t* col = data_.bins.data() + f * data_.rows;
      HistEntry* base = hist.data() + data_.offsets[f];
      for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
        const std::size_t r = indices_[k];
        HistEntry& e = base[col[r]];
        e.g += grad_[r];
        e.h += hess_[r];
        ++e.count;
      }
    }
    return hist;
  }

  void find_best_split(Leaf& leaf) const {
    leaf.best = SplitInfo{};
    if (params_.max_depth > 0 && leaf.depth >= params_.max_depth) return;
    const auto min_data = static_cast<std::size_t>(params_.min_data_in_leaf);
    if (leaf.count() < 2 * min_data || leaf.count() < 2) return;
    const double parent = score(leaf.sum_g, leaf.sum_h);
    for (std::size_t f : *features_) {
      const std::size_t nb = data_.mappers[f].bins();
      if (nb < 2) continue;
      const HistEntry* base = leaf.hist.data() + data_.offsets[f];
      double lg = 0.0, lh = 0.0;
      std::size_t lc = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        lg += base[b].g;
        lh += base[b].h;
        lc += base[b].count;
        const std::size_t rc = leaf.count() - lc;
        if (lc < std::max<std::size_t>(min_data, 1)) continue;
        if (rc < std::max<std::size_t>(min_data, 1)) break;
        const double rg = leaf.sum_g - lg;
        const double rh = leaf.sum_h - lh;
        if (lh < params_.min_sum_hessian_in_leaf || rh < params_.min_sum_hessian_in_leaf) continue;
        const double gain = score(lg, lh) + score(rg, rh) - parent;
        if (gain <= params_.min_gain_to_split) continue;
        if (!leaf.best.valid || gain > leaf.best.gain) {
          leaf.best = SplitInfo{true, gain, f, b, lg, lh, rg, rh, lc, rc};
        }
      }
    }
  }

  void split_leaf(Tree& tree, std::vector<Leaf>& leaves, std::size_t pick) {
    Leaf parent = std::move(leaves[pick]);
    const SplitInfo split = parent.best;
    const std::uint8_t* col = data_.bins.data() + split.feature * data_.rows;
    const auto mid_it = std::stable_partition(
        indices_.begin() + static_cast<std::ptrdiff_t>(parent.begin),
        indices_.begin() + static_cast<std::ptrdiff_t>(parent.end),
        [&](std::size_t r) { return col[r] <= split.bin; });
    const auto mid = static_cast<std::size_t>(mid_it - indices_.begin());

    const int left_node = static_cast<int>(tree.nodes.size());
    const int right_node = left_node + 1;
    TreeNode& node = tree.nodes[static_cast<std::size_t>(parent.node)];
    node.feature = static_cast<int>(split.feature);
    node.threshold = data_.mappers[split.feature].thresholds[split.bin];
    node.left = left_node;
    node.right = right_node;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    Leaf left, right;
    left.begin = parent.begin;
    left.end = mid;
    left.sum_g = split.left_g;
    left.sum_h = split.left_h;
    left.depth = parent.depth + 1;
    left.node = left_node;
    right.begin = mid;
    right.end = parent.end;
    right.sum_g = split.right_g;
    right.sum_h = split.right_h;
    right.depth = parent.depth + 1;
    right.node = right_node;

    Leaf& small = left.count() <= right.count() ? left : right;
    Leaf& large = left.count() <= right.count() ? right : left;
    small.hist = build_hist(small);
    large.hist = std::move(parent.hist);
    for (std::size_t i = 0; i < large.hist.size(); ++i) {
      large.hist[i].g -= small.hist[i].g;
      large.hist[i].h -= small.hist[i].h;
      large.hist[i].count -= small.hist[i].count;
    }
    find_best_split(left);
    find_best_split(right);
    leaves[pick] = std::move(left);
    leaves.push_back(std::move(right));
  }

  const BinnedData& data_;
  const Params& params_;
  std::vector<std::size_t> indices_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  const std::vector<std::size_t>* features_ = nullptr;
};

double validation_metric(Objective objective, std::span<const double> scores,
                         std::span<const double> labels, const std::vector<int>& int_labels) {
  if (objective == Objective::kBinary) return *evaluation::roc_auc(scores, int_labels);
  return evaluation::rmse(scores, labels);
}

// Little-endian primitives.
void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}
void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}
void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void read_exact(std::istream& in, char* buf, std::size_t n) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw Error(ErrorKind::kFormat, "truncated model file");
}
std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_u32(in)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

std::string_view to_string(Objective objective) {
  return objective == Objective::kBinary ? "binary" : "regression";
}

void Params::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidConfig, what); };
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (num_leaves < 2) fail("num_leaves must be >= 2");
  if (min_data_in_leaf < 0) fail("min_data_in_leaf must be >= 0");
  if (min_sum_hessian_in_leaf < 0.0) fail("min_sum_hessian_in_leaf must be >= 0");
  if (lambda_l2 < 0.0) fail("lambda_l2 must be >= 0");
  if (max_bin < 2 || max_bin > 256) fail("max_bin must be in [2, 256]");
  if (!(scale_pos_weight > 0.0)) fail("scale_pos_weight must be > 0");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) fail("feature_fraction must be in (0, 1]");
}

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

int Tree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [](const TreeNode& n) { return n.feature < 0; }));
}

Booster Booster::train(const Matrix& x, std::span<const double> y, const Matrix& valid_x,
                       std::span<const double> valid_y, const Params& params) {
  params.validate();
  if (x.rows == 0 || x.cols == 0) throw Error(ErrorKind::kInvalidArgument, "empty training matrix");
  if (x.values.size() != x.rows * x.cols || y.size() != x.rows) {
    throw Error(ErrorKind::kInvalidArgument, "training labels do not match matrix rows");
  }
  const bool has_valid = valid_x.rows > 0;
  if (has_valid && (valid_x.cols != x.cols || valid_y.size() != valid_x.rows ||
                    valid_x.values.size() != valid_x.rows * valid_x.cols)) {
    throw Error(ErrorKind::kInvalidArgument, "validation shape does not match training shape");
  }

  const bool binary = params.objective == Objective::kBinary;
  std::vector<double> weight(x.rows, 1.0);
  std::vector<int> valid_int;
  if (binary) {
    auto check = [](double v) {
      if (v != 0.0 && v != 1.0) throw Error(ErrorKind::kInvalidArgument, "binary labels must be 0 or 1");
    };
    for (std::size_t r = 0; r < x.rows; ++r) {
      check(y[r]);
      if (y[r] == 1.0) weight[r] = params.scale_pos_weight;
    }
    for (double v : valid_y) {
      check(v);
      valid_int.push_back(static_cast<int>(v));
    }
    if (has_valid) {
      const auto pos = std::count(valid_int.begin(), valid_int.end(), 1);
      if (pos == 0 || static_cast<std::size_t>(pos) == valid_int.size()) {
        throw Error(ErrorKind::kDegenerateDataset, "validation set has a single class");
      }
    }
  }

  Booster booster;
  booster.objective_ = params.objective;
  booster.num_features_ = x.cols;
  if (binary) {
    // The positive-class weight scales gradients only; the starting score is
    // the log-odds of the unweighted label mean.
    const double p = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    if (p <= 0.0 || p >= 1.0) throw Error(ErrorKind::kDegenerateDataset, "training set has a single class");
    booster.init_score_ = std::log(p / (1.0 - p));
  } else {
    booster.init_score_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  }

  const BinnedData data = bin_data(x, params.max_bin);
  TreeBuilder builder(data, params);
  std::vector<double> score(x.rows, booster.init_score_);
  std::vector<double> valid_score(valid_x.rows, booster.init_score_);
  std::vector<double> grad(x.rows), hess(x.rows), row_output(x.rows);
  std::vector<std::size_t> all_features(x.cols);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::mt19937_64 rng(params.seed);

  const bool higher_better = binary;
  double best = 0.0;
  std::size_t best_trees = 0;
  if (has_valid) {
    booster.summary_.metric = binary ? "auc" : "rmse";
    best = validation_metric(params.objective, valid_score, valid_y, valid_int);
  }

  for (int it = 0; it < params.max_iterations; ++it) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      if (binary) {
        const double p = sigmoid(score[r]);
        grad[r] = weight[r] * (p - y[r]);
        hess[r] = weight[r] * p * (1.0 - p);
      } else {
        grad[r] = score[r] - y[r];
        hess[r] = 1.0;
      }
    }
    std::vector<std::size_t> features = all_features;
    if (params.feature_fraction < 1.0) {
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(params.feature_fraction * static_cast<double>(x.cols))));
      std::shuffle(features.begin(), features.end(), rng);
      features.resize(k);
      std::sort(features.begin(), features.end());
    }

    Tree tree = builder.build(grad, hess, features, row_output);
    if (tree.nodes.size() == 1) break;  // nothing left to split
    for (std::size_t r = 0; r < x.rows; ++r) score[r] += row_output[r];
    for (std::size_t r = 0; r < valid_x.rows; ++r) valid_score[r] += tree.predict(valid_x.row(r));
    booster.trees_.push_back(std::move(tree));

    if (!has_valid) continue;
    const double m = validation_metric(params.objective, valid_score, valid_y, valid_int);
    if (higher_better ? m > best : m < best) {
      best = m;
      best_trees = booster.trees_.size();
    } else if (params.early_stopping_rounds > 0 &&
               booster.trees_.size() - best_trees >= static_cast<std::size_t>(params.early_stopping_rounds)) {
      break;
    }
  }

  booster.summary_.iterations_run = static_cast<int>(booster.trees_.size());
  if (has_valid) {
    booster.trees_.resize(best_trees);
    booster.summary_.best_score = best;
  }
  booster.summary_.best_iteration = static_cast<int>(booster.trees_.size());
  return booster;
}

double Booster::predict_raw(std::span<const double> x) const {
  if (x.size() != num_features_) throw Error(ErrorKind::kDimensionMismatch, "feature count mismatch");
  double s = init_score_;
  for (const auto& t : trees_) s += t.predict(x);
  return s;
}

double Booster::predict(std::span<const double> x) const {
  const double raw = predict_raw(x);
  return objective_ == Objective::kBinary ? sigmoid(raw) : raw;
}

void Booster::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kFormatVersion);
  put_u32(out, objective_ == Objective::kBinary ? 0 : 1);
  put_u64(out, num_features_);
  put_f64(out, init_score_);
  put_i32(out, summary_.iterations_run);
  put_i32(out, summary_.best_iteration);
  put_u32(out, static_cast<std::uint32_t>(summary_.metric.size()));
  out.write(summary_.metric.data(), static_cast<std::streamsize>(summary_.metric.size()));
  put_f64(out, summary_.best_score);
  put_u64(out, trees_.size());
  for (const auto& t : trees_) {
    put_u32(out, static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      put_i32(out, n.feature);
      put_f64(out, n.threshold);
      put_i32(out, n.left);
      put_i32(out, n.right);
      put_f64(out, n.value);
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "failed to write model");
}

Booster Booster::load(std::istream& in) {
  char magic[sizeof kMagic];
  read_exact(in, magic, sizeof magic);
  if (!std::equal(magic, magic + sizeof magic, kMagic)) throw Error(ErrorKind::kFormat, "not a gbdt model file");
  if (const auto v = get_u32(in); v != kFormatVersion) {
    throw Error(ErrorKind::kFormat, "unsupported gbdt model version " + std::to_string(v));
  }
  Booster b;
  const auto obj = get_u32(in);
  if (obj > 1) throw Error(ErrorKind::kFormat, "unknown objective");
  b.objective_ = obj == 0 ? Objective::kBinary : Objective::kRegression;
  b.num_features_ = get_u64(in);
  b.init_score_ = get_f64(in);
  b.summary_.iterations_run = get_i32(in);
  b.summary_.best_iteration = get_i32(in);
  const auto metric_len = get_u32(in);
  if (metric_len > 64) throw Error(ErrorKind::kFormat, "corrupt metric name");
  b.summary_.metric.resize(metric_len);
  read_exact(in, b.summary_.metric.data(), metric_len);
  b.summary_.best_score = get_f64(in);
  const auto tree_count = get_u64(in);
  if (tree_count > 1'000'000) throw Error(ErrorKind::kFormat, "corrupt tree count");
  b.trees_.resize(tree_count);
  for (auto& t : b.trees_) {
    const auto node_count = get_u32(in);
    if (node_count == 0 || node_count > 1'000'000) throw Error(ErrorKind::kFormat, "corrupt node count");
    t.nodes.resize(node_count);
    for (std::size_t i = 0; i < node_count; ++i) {
      auto& n = t.nodes[i];
      n.feature = get_i32(in);
      n.threshold = get_f64(in);
      n.left = get_i32(in);
      n.right = get_i32(in);
      n.value = get_f64(in);
      if (n.feature >= 0) {
        const auto child_ok = [&](int c) {
          return c > static_cast<int>(i) && c < static_cast<int>(node_count);
        };
        if (static_cast<std::uint64_t>(n.feature) >= b.num_features_ || !child_ok(n.left) || !child_ok(n.right)) {
          throw Error(ErrorKind::kFormat, "corrupt tree node");
        }
      }
    }
  }
  return b;
}

}  // namespace cxsim::gbdt
