#include "cxsim/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cxsim/digest.hpp"
#include "cxsim/error.hpp"

namespace cxsim::service {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Response error_response(int status, std::string_view kind, const std::string& message) {
  return {status, "application/json", json{{"error", {{"kind", kind}, {"message", message}}}}.dump()};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kInvalidConfig:
    case ErrorKind::kMalformedRecord:
      return 400;
    case ErrorKind::kDuplicateNode:
      return 409;
    case ErrorKind::kRemoteUnavailable:
      return 503;
    default:
      return 500;
  }
}

Response from_error(const Error& e) { return error_response(status_for(e.kind()), error_kind_name(e.kind()), e.what()); }

template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kFormat, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

Artifacts load_artifacts(const std::filesystem::path& graph_path, const std::filesystem::path& model_dir,
                         const embedding::ProviderConfig& provider) {
  Artifacts a;
  const auto graph_text = read_file(graph_path);
  std::istringstream in(graph_text);
  a.graph = graph::read_graph(in);
  a.graph_sha256 = sha256_hex(graph_text);
  a.model = std::make_shared<const predictor::HybridModel>(predictor::load_model(model_dir));
  a.model_sha256 = sha256_hex(read_file(model_dir / "model.json"));
  provider.validate();
  auto cache = provider.cache_path.empty() ? std::make_shared<embedding::EmbeddingCache>()
                                           : std::make_shared<embedding::EmbeddingCache>(provider.cache_path);
  a.embedder = std::make_shared<embedding::Embedder>(embedding::make_provider(provider), std::move(cache));
  return a;
}

AssessRequest parse_assess_request(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, "request body must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "campaign" && key != "n_sessions" && key != "seed" && key != "sample_limit" && key != "paired_seeds") {
      throw Error(ErrorKind::kFormat, "unknown request field '" + key + "'");
    }
  }
  if (!j.contains("campaign")) throw Error(ErrorKind::kFormat, "request needs a campaign");
  AssessRequest r;
  r.campaign = assessment::campaign_from_json(j.at("campaign"));
  auto count = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw Error(ErrorKind::kFormat, std::string("field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  };
  if (j.contains("n_sessions")) r.n_sessions = count("n_sessions");
  if (r.n_sessions < 1) throw Error(ErrorKind::kInvalidArgument, "n_sessions must be at least 1");
  if (j.contains("seed")) r.seed = count("seed");
  if (j.contains("sample_limit")) r.sample_limit = count("sample_limit");
  if (j.contains("paired_seeds")) r.paired_seeds = field<bool>(j, "paired_seeds");
  return r;
}

json assess_request_to_json(const AssessRequest& r) {
  json j{{"campaign", assessment::campaign_to_json(r.campaign)}, {"n_sessions", r.n_sessions}};
  if (r.seed) j["seed"] = *r.seed;
  if (r.sample_limit) j["sample_limit"] = *r.sample_limit;
  if (r.paired_seeds) j["paired_seeds"] = *r.paired_seeds;
  return j;
}

void ReportStore::put(const std::string& id, std::shared_ptr<const json> report) {
  std::lock_guard lock(mutex_);
  if (capacity_ == 0) return;
  if (auto it = index_.find(id); it != index_.end()) {
    order_.erase(it->second);
    index_.erase(it);
  }
  order_.emplace_front(id, std::move(report));
  index_[id] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::shared_ptr<const json> ReportStore::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

std::size_t ReportStore::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

json http_report(const json& report, const std::string& request_id) {
  json j = report;
  j["request_id"] = request_id;
  return j;
}

Service::Service(ServiceConfig config, assessment::AssessmentConfig defaults)
    : config_(std::move(config)), defaults_(std::move(defaults)), store_(config_.store_capacity) {}

void Service::load(std::shared_ptr<const Artifacts> artifacts) {
  std::lock_guard lock(mutex_);
  artifacts_ = std::move(artifacts);
}

bool Service::loaded() const { return artifacts() != nullptr; }

std::shared_ptr<const Artifacts> Service::artifacts() const {
  std::lock_guard lock(mutex_);
  return artifacts_;
}

Response Service::assess(const std::string& body) {
  const auto a = artifacts();
  if (!a) return error_response(503, "NotLoaded", "no graph or model loaded");
  try {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kFormat, std::string("request body is not JSON: ") + e.what());
    }
    const auto req = parse_assess_request(j);
    if (req.n_sessions > config_.max_sessions) {
      throw Error(ErrorKind::kInvalidArgument, "n_sessions exceeds " + std::to_string(config_.max_sessions));
    }
    auto cfg = defaults_;
    cfg.simulation.n_sessions = req.n_sessions;
    if (req.seed) cfg.simulation.seed = *req.seed;
    if (req.sample_limit) cfg.sample_sessions = *req.sample_limit;
    if (req.paired_seeds) cfg.paired_seeds = *req.paired_seeds;

    // The id names the effective inputs, so a repeated request maps to the same report.
    const json key{{"campaign", assessment::campaign_to_json(req.campaign)},
                   {"n_sessions", cfg.simulation.n_sessions},
                   {"seed", cfg.simulation.seed},
                   {"max_length", cfg.simulation.max_length},
                   {"conversion", {cfg.simulation.conversion.field, cfg.simulation.conversion.value}},
                   {"paired_seeds", cfg.paired_seeds},
                   {"sample_sessions", cfg.sample_sessions},
                   {"graph", a->graph_sha256},
                   {"model", a->model_sha256}};
    const std::string id = sha256_hex(key.dump()).substr(0, 16);
    if (auto cached = store_.get(id)) return {200, "application/json", cached->dump()};

    const auto report = assessment::assess(a->graph, req.campaign, *a->model, *a->embedder, cfg);
    auto out = std::make_shared<const json>(http_report(assessment::report_to_json(report), id));
    store_.put(id, out);
    return {200, "application/json", out->dump()};
  } catch (const Error& e) {
    return from_error(e);
  }
}

Response Service::graph_summary() const {
  const auto a = artifacts();
  if (!a) return error_response(503, "NotLoaded", "no graph loaded");
  const auto& g = a->graph;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (!g.node(i).is_sentinel) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return g.visits(x) > g.visits(y); });
  json top = json::array();
  for (std::size_t k = 0; k < order.size() && k < 10; ++k) {
    const auto& n = g.node(order[k]);
    top.push_back({{"node_id", n.id.hex()}, {"canonical_text", n.canonical_text}, {"visits", g.visits(order[k])}});
  }
  const auto pairs = g.valid_pair_count();
  json body{{"node_count", g.node_count()},
            {"edge_count", g.edge_count()},
            {"valid_pairs", pairs},
            {"density", pairs == 0 ? 0.0 : static_cast<double>(g.edge_count()) / static_cast<double>(pairs)},
            {"alpha", g.alpha()},
            {"segment", g.segment().entries()},
            {"top_events", top},
            {"graph_sha256", a->graph_sha256}};
  return {200, "application/json", body.dump()};
}

Response Service::sample_sessions(const std::string& group, const std::string& request_id,
                                  const std::optional<std::string>& limit) {
  if (group != "control" && group != "treatment") {
    return error_response(400, "InvalidArgument", "group must be control or treatment");
  }
  std::size_t n = SIZE_MAX;
  if (limit) {
    if (limit->empty() || !std::all_of(limit->begin(), limit->end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        limit->size() > 9) {
      return error_response(400, "InvalidArgument", "limit must be a non-negative integer");
    }
    n = std::stoul(*limit);
  }
  const auto report = store_.get(request_id);
  if (!report) return error_response(404, "NotFound", "unknown request id " + request_id);
  std::string body;
  const auto& samples = report->at(group).at("sample_sessions");
  for (std::size_t k = 0; k < samples.size() && k < n; ++k) body += samples[k].dump() + "\n";
  return {200, "application/x-ndjson", body};
}

Response Service::health() const {
  const auto a = artifacts();
  json body{{"status", "ok"}, {"version", kVersion}, {"loaded", a != nullptr}};
  if (a) {
    const auto& sig = a->model->embedding_signature();
    body["artifacts"] = {{"graph_sha256", a->graph_sha256},
                         {"model_sha256", a->model_sha256},
                         {"embedding", {{"provider", sig.provider}, {"model", sig.model}, {"dimension", sig.dimension}}}};
  } else {
    body["artifacts"] = nullptr;
  }
  return {200, "application/json", body.dump()};
}

void Service::mount(httplib::Server& server) {
  const std::size_t threads = std::max<std::size_t>(1, config_.threads);
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Post("/api/assess", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, assess(req.body));
  });
  server.Get("/api/graph/summary",
             [this, send](const httplib::Request&, httplib::Response& res) { send(res, graph_summary()); });
  server.Get("/api/sessions/sample", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> limit;
    if (req.has_param("limit")) limit = req.get_param_value("limit");
    send(res, sample_sessions(req.get_param_value("group"), req.get_param_value("request_id"), limit));
  });
  server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  const std::string origin = config_.cors_origin;
  server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    if (origin.empty()) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  server.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send(res, error_response(404, "NotFound", "no such endpoint"));
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send(res, from_error(e));
    } catch (const std::exception& e) {
      send(res, error_response(500, "Internal", e.what()));
    }
  });
}

}  // namespace cxsim::service
