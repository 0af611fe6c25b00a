#include "cxsim/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "cxsim/error.hpp"

namespace cxsim::evaluation {

std::string_view to_string(SmapeSupport support) { return support == SmapeSupport::kActive ? "active" : "all"; }

SmapeSupport parse_smape_support(std::string_view text) {
  if (text == "active") return SmapeSupport::kActive;
  if (text == "all") return SmapeSupport::kAll;
  throw Error(ErrorKind::kInvalidConfig, "smape_support must be 'active' or 'all'");
}

MetricsReport evaluate(const predictor::PairModel& model, const std::vector<EvaluationSet>& sets,
                       const predictor::NodeEmbeddings& embeddings, const EvaluationConfig& config) {
  const std::size_t d = model.dimension();
  std::vector<double> truth, predicted, scores;
  std::vector<int> labels;
  std::vector<double> features(3 * d);

  for (const auto& set : sets) {
    const auto& g = *set.graph;
    if (set.f_seg.size() != d) throw Error(ErrorKind::kDimensionMismatch, "segment embedding length mismatch");
    std::vector<const predictor::EmbeddingVector*> emb(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const auto it = embeddings.find(g.node(i).id);
      if (it == embeddings.end()) {
        throw Error(ErrorKind::kMissingEmbedding, "no embedding for node " + g.node(i).id.hex());
      }
      if (it->second.size() != d) throw Error(ErrorKind::kDimensionMismatch, "node embedding length mismatch");
      emb[i] = &it->second;
    }
    std::copy(set.f_seg.begin(), set.f_seg.end(), features.begin() + static_cast<std::ptrdiff_t>(2 * d));
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (i == g.end_index()) continue;
      std::copy(emb[i]->begin(), emb[i]->end(), features.begin());
      const auto edges = g.out_edges(i);
      std::size_t e = 0;
      for (std::size_t j = 0; j < g.node_count(); ++j) {
        if (j == g.start_index()) continue;
        while (e < edges.size() && edges[e].target < j) ++e;
        const bool observed = e < edges.size() && edges[e].target == j && edges[e].count > 0;
        std::copy(emb[j]->begin(), emb[j]->end(), features.begin() + static_cast<std::ptrdiff_t>(d));
        const auto s = model.score_pair(features);
        truth.push_back(observed ? edges[e].probability : 0.0);
        labels.push_back(observed ? 1 : 0);
        predicted.push_back(s.probability);
        scores.push_back(s.score);
      }
    }
  }
  if (truth.empty()) throw Error(ErrorKind::kEmpty, "no pairs to evaluate");

  MetricsReport r;
  r.model_kind = std::string(model.kind());
  r.threshold = model.decision_threshold();
  r.total_pairs = truth.size();
  r.positive_pairs = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.rmse = rmse(predicted, truth);

  if (config.smape_support == SmapeSupport::kAll) {
    r.smape = smape(predicted, truth);
    r.smape_pairs = truth.size();
  } else {
    std::vector<double> p_active, t_active;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (truth[k] > 0.0 || predicted[k] > 0.0) {
        p_active.push_back(predicted[k]);
        t_active.push_back(truth[k]);
      }
    }
    r.smape_pairs = p_active.size();
    r.smape = p_active.empty() ? 0.0 : smape(p_active, t_active);
  }

  const auto cm = classification_metrics(scores, labels, r.threshold);
  r.f1 = cm.f1;
  r.roc_auc = cm.roc_auc;
  r.pr_auc = cm.pr_auc;
  r.output_pr_auc = pr_auc(predicted, labels);
  return r;
}

MetricsReport evaluate(const predictor::PairModel& model, const graph::EventTransitionGraph& test_graph,
                       const predictor::NodeEmbeddings& embeddings, std::span<const double> f_seg,
                       const EvaluationConfig& config) {
  return evaluate(model, {EvaluationSet{&test_graph, {f_seg.begin(), f_seg.end()}}}, embeddings, config);
}

nlohmann::json report_to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"model", r.model_kind},
          {"threshold", r.threshold},
          {"rmse", r.rmse},
          {"smape", r.smape},
          {"f1", r.f1},
          {"roc_auc", opt(r.roc_auc)},
          {"pr_auc", opt(r.pr_auc)},
          {"output_pr_auc", opt(r.output_pr_auc)},
          {"pairs", {{"total", r.total_pairs}, {"positive", r.positive_pairs}, {"smape", r.smape_pairs}}}};
}

std::string format_table(const std::vector<MetricsReport>& reports) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s\n", "model", "RMSE", "SMAPE", "F1", "ROC-AUC",
                "PR-AUC");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s\n", r.model_kind.c_str(), cell(r.rmse).c_str(),
                  cell(r.smape).c_str(), cell(r.f1).c_str(), cell(r.roc_auc).c_str(), cell(r.pr_auc).c_str());
    out += line;
  }
  return out;
}

}  // namespace cxsim::evaluation
