#include "cxsim/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>

#include "cxsim/error.hpp"
#include "cxsim/json.hpp"

namespace cxsim::assessment {
namespace {

std::uint64_t treatment_seed(std::uint64_t seed) { return simulator::session_seed(seed, 0x74726561746d656eULL); }

nlohmann::json quantiles_json(const std::optional<WeightQuantiles>& q) {
  if (!q) return nullptr;
  return {{"min", q->min}, {"p25", q->p25}, {"median", q->median}, {"p75", q->p75}, {"max", q->max}};
}

nlohmann::json group_json(const GroupResult& g) {
  return {{"cvr", g.cvr}, {"conversions", g.conversions}, {"seed", g.seed}, {"sample_sessions", g.samples}};
}

}  // namespace

void CampaignSpec::validate() const {
  if (descriptor.empty()) throw Error(ErrorKind::kInvalidArgument, "campaign descriptor is empty");
}

CampaignSpec campaign_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, "campaign must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "descriptor" && key != "segment" && key != "label") {
      throw Error(ErrorKind::kFormat, "unknown campaign field '" + key + "'");
    }
  }
  if (!j.contains("descriptor")) throw Error(ErrorKind::kFormat, "campaign needs a descriptor");
  CampaignSpec c;
  c.descriptor = j.at("descriptor").get<EventDescriptor>();
  if (j.contains("segment")) c.segment = j.at("segment").get<SegmentKey>();
  if (j.contains("label")) {
    if (!j.at("label").is_string()) throw Error(ErrorKind::kFormat, "campaign label must be a string");
    c.label = j.at("label").get<std::string>();
  }
  c.validate();
  return c;
}

nlohmann::json campaign_to_json(const CampaignSpec& c) {
  return {{"descriptor", c.descriptor}, {"segment", c.segment}, {"label", c.label}};
}

void AssessmentConfig::validate() const { simulation.validate(); }

Treatment build_treatment(const graph::EventTransitionGraph& control, const CampaignSpec& campaign,
                          const predictor::HybridModel& model, embedding::Embedder& embedder) {
  campaign.validate();
  if (embedder.dimension() != model.dimension()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedder dimension " + std::to_string(embedder.dimension()) +
                                                   " does not match model dimension " +
                                                   std::to_string(model.dimension()));
  }
  const auto& sig = model.embedding_signature();
  if (!sig.provider.empty() && (sig.provider != embedder.provider().name() || sig.model != embedder.provider().model())) {
    throw Error(ErrorKind::kInvalidConfig, "model was trained on " + sig.provider + "/" + sig.model +
                                               " embeddings, not " + std::string(embedder.provider().name()) + "/" +
                                               std::string(embedder.provider().model()));
  }
  Treatment t;
  t.node = EventNode::from_descriptor(campaign.descriptor);
  if (control.index_of(t.node.id)) {
    throw Error(ErrorKind::kDuplicateNode, "campaign " + t.node.canonical_text + " is already an event");
  }
  std::vector<std::string> texts;
  for (const auto& n : control.nodes()) texts.push_back(n.canonical_text);
  const auto vectors = embedder.embed_texts(texts);
  predictor::NodeEmbeddings embeddings;
  for (std::size_t i = 0; i < control.node_count(); ++i) embeddings.emplace(control.node(i).id, vectors[i]);
  const auto f_new = embedder.embed_node(t.node);
  const auto f_seg = embedder.embed_segment(campaign.segment.empty() ? control.segment() : campaign.segment);
  t.edges = predictor::predict_new_event_edges(model, control, embeddings, f_new, f_seg);
  t.graph = graph::insert_event(control, t.node, t.edges.in_edges, t.edges.out_edges);
  return t;
}

std::optional<WeightQuantiles> weight_quantiles(std::vector<double> w) {
  if (w.empty()) return std::nullopt;
  std::sort(w.begin(), w.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(w.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, w.size() - 1);
    return w[lo] + (pos - static_cast<double>(lo)) * (w[hi] - w[lo]);
  };
  return WeightQuantiles{w.front(), at(0.25), at(0.5), at(0.75), w.back()};
}

std::pair<double, double> uplift_interval(std::size_t conv_c, std::size_t conv_t, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double pc = static_cast<double>(conv_c) / nn;
  const double pt = static_cast<double>(conv_t) / nn;
  const double se = std::sqrt(pc * (1.0 - pc) / nn + pt * (1.0 - pt) / nn);
  const double d = pt - pc;
  return {d - kZ95 * se, d + kZ95 * se};
}

AssessmentReport assess_treatment(const graph::EventTransitionGraph& control, const Treatment& treatment,
                                  const CampaignSpec& campaign, const AssessmentConfig& config) {
  config.validate();
  auto sc = config.simulation;
  auto st = config.simulation;
  st.seed = config.paired_seeds ? sc.seed : treatment_seed(sc.seed);
  const auto conv_c = simulator::conversion_nodes(control, sc.conversion);
  const auto conv_t = simulator::conversion_nodes(treatment.graph, st.conversion);

  std::vector<simulator::SimulatedSession> sessions_c, sessions_t;
  if (config.simulation.threads > 1) {
    auto half = sc;
    half.threads = std::max<std::size_t>(1, sc.threads / 2);
    st.threads = std::max<std::size_t>(1, sc.threads - half.threads);
    auto fut = std::async(std::launch::async, [&] { return simulator::simulate(control, half); });
    sessions_t = simulator::simulate(treatment.graph, st);
    sessions_c = fut.get();
  } else {
    sessions_c = simulator::simulate(control, sc);
    sessions_t = simulator::simulate(treatment.graph, st);
  }

  auto group = [&](const graph::EventTransitionGraph& g, const std::vector<simulator::SimulatedSession>& sessions,
                   const std::vector<bool>& conv, std::uint64_t seed) {
    GroupResult r;
    r.seed = seed;
    for (const auto& s : sessions) r.conversions += simulator::converted(s, conv);
    r.cvr = static_cast<double>(r.conversions) / static_cast<double>(sessions.size());
    for (std::size_t k = 0; k < sessions.size() && k < config.sample_sessions; ++k) {
      r.samples.push_back(simulator::session_to_json(g, sessions[k], k, true));
    }
    return r;
  };

  AssessmentReport rep;
  rep.label = campaign.label;
  rep.campaign_id = treatment.node.id.hex();
  rep.campaign_text = treatment.node.canonical_text;
  rep.conversion = sc.conversion;
  rep.n_sessions = sc.n_sessions;
  rep.max_length = sc.max_length;
  rep.paired_seeds = config.paired_seeds;
  rep.control = group(control, sessions_c, conv_c, sc.seed);
  rep.treatment = group(treatment.graph, sessions_t, conv_t, st.seed);
  rep.uplift = rep.treatment.cvr - rep.control.cvr;
  std::tie(rep.ci_low, rep.ci_high) = uplift_interval(rep.control.conversions, rep.treatment.conversions, sc.n_sessions);

  std::vector<double> in_w, out_w;
  for (const auto& [id, q] : treatment.edges.in_edges) in_w.push_back(q);
  for (const auto& [id, q] : treatment.edges.out_edges) out_w.push_back(q);
  rep.edges = {in_w.size(), out_w.size(), weight_quantiles(in_w), weight_quantiles(out_w)};
  return rep;
}

AssessmentReport assess(const graph::EventTransitionGraph& control, const CampaignSpec& campaign,
                        const predictor::HybridModel& model, embedding::Embedder& embedder,
                        const AssessmentConfig& config) {
  config.validate();
  const auto treatment = build_treatment(control, campaign, model, embedder);
  return assess_treatment(control, treatment, campaign, config);
}

nlohmann::json report_to_json(const AssessmentReport& r) {
  return {
      {"format", "cxsim.assessment"},
      {"version", 1},
      {"campaign", {{"label", r.label}, {"node_id", r.campaign_id}, {"canonical_text", r.campaign_text}}},
      {"conversion", {{"field", r.conversion.field}, {"value", r.conversion.value}}},
      {"n_sessions", r.n_sessions},
      {"max_length", r.max_length},
      {"paired_seeds", r.paired_seeds},
      {"cvr_control", r.control.cvr},
      {"cvr_treatment", r.treatment.cvr},
      {"uplift", r.uplift},
      {"ci95", {{"low", r.ci_low}, {"high", r.ci_high}}},
      {"new_edges",
       {{"in_count", r.edges.in_edges},
        {"out_count", r.edges.out_edges},
        {"in_weights", quantiles_json(r.edges.in_weights)},
        {"out_weights", quantiles_json(r.edges.out_weights)}}},
      {"control", group_json(r.control)},
      {"treatment", group_json(r.treatment)},
  };
}

std::string format_summary(const AssessmentReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "campaign   %s\n"
                "sessions   %zu per group\n"
                "control    CVR %.4f (%zu)\n"
                "treatment  CVR %.4f (%zu)\n"
                "uplift     %+.4f  95%% CI [%+.4f, %+.4f]\n"
                "new edges  %zu in, %zu out\n",
                r.label.empty() ? r.campaign_text.c_str() : r.label.c_str(), r.n_sessions, r.control.cvr,
                r.control.conversions, r.treatment.cvr, r.treatment.conversions, r.uplift, r.ci_low, r.ci_high,
                r.edges.in_edges, r.edges.out_edges);
  return buf;
}

}  // namespace cxsim::assessment
