#include "oracles.hpp"

#include <cctype>
#include <cmath>
#include <set>

namespace cxsim::oracle {

EdgeTable smoothed_edges(const LabelSessions& sessions, double alpha) {
  std::map<std::string, std::map<std::string, long>> counter;
  for (const auto& session : sessions) {
    std::vector<std::string> walk{"<start>"};
    walk.insert(walk.end(), session.begin(), session.end());
    walk.push_back("<end>");
    for (std::size_t t = 0; t + 1 < walk.size(); ++t) counter[walk[t]][walk[t + 1]] += 1;
  }
  EdgeTable out;
  for (const auto& [src, row] : counter) {
    double c_i = 0;
    for (const auto& [dst, c] : row) c_i += c;
    const double k_i = static_cast<double>(row.size());
    for (const auto& [dst, c] : row) out[{src, dst}] = (c + alpha) / (c_i + alpha * k_i);
  }
  return out;
}

std::vector<double> hash_embedding(const std::string& text, int dim) {
  auto fnv = [](const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    return h;
  };
  auto add = [&](std::vector<double>& v, const std::string& token) {
    const std::uint64_t h = fnv(token);
    v[h % static_cast<std::uint64_t>(dim)] += (h >> 63) ? -1.0 : 1.0;
  };
  std::vector<double> v(dim, 0.0);
  std::string token;
  for (char ch : text + " ") {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      token += static_cast<char>(std::tolower(c));
    } else if (!token.empty()) {
      add(v, token);
      token.clear();
    }
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  if (norm == 0) {
    v.assign(dim, 0.0);
    add(v, text);
    norm = 1;
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / pred.size());
}

double smape(const std::vector<double>& pred, const std::vector<double>& truth) {
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 0 && truth[i] == 0) continue;
    s += std::abs(pred[i] - truth[i]) / ((std::abs(truth[i]) + std::abs(pred[i])) / 2);
  }
  return 100.0 * s / pred.size();
}

double f1(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) tp += 1;
    if (predicted && labels[i] == 0) fp += 1;
    if (!predicted && labels[i] == 1) fn += 1;
  }
  return (2 * tp + fp + fn) == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

std::optional<double> pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double positives = 0, negatives = 0;
  for (int l : labels) (l == 1 ? positives : negatives) += 1;
  if (positives == 0 || negatives == 0) return std::nullopt;
  std::set<double, std::greater<>> cuts(scores.begin(), scores.end());
  double ap = 0, prev_recall = 0;
  for (double cut : cuts) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= cut) (labels[i] == 1 ? tp : fp) += 1;
    }
    const double recall = tp / positives;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

}  // namespace cxsim::oracle
