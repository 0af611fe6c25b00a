#pragma once

#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "cxsim/assessment.hpp"
#include "cxsim/embedding.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/predictor.hpp"

namespace httplib {
class Server;
}

namespace cxsim::service {

inline constexpr std::string_view kVersion = "0.1.0";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4;
  std::size_t store_capacity = 64;
  std::size_t max_sessions = 100000;
  std::string cors_origin = "*";
};

struct Artifacts {
  graph::EventTransitionGraph graph;
  std::shared_ptr<const predictor::HybridModel> model;
  std::shared_ptr<embedding::Embedder> embedder;
  std::string graph_sha256;
  std::string model_sha256;  // of model.json, which pins both boosters
};

Artifacts load_artifacts(const std::filesystem::path& graph_path, const std::filesystem::path& model_dir,
                         const embedding::ProviderConfig& provider);

// Body of POST /api/assess. Throws Error(kFormat) or Error(kInvalidArgument).
struct AssessRequest {
  assessment::CampaignSpec campaign;
  std::size_t n_sessions = 10000;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sample_limit;
  std::optional<bool> paired_seeds;
};
AssessRequest parse_assess_request(const nlohmann::json& j);
nlohmann::json assess_request_to_json(const AssessRequest& r);

// Bounded map from request id to report; least recently used entries go first.
class ReportStore {
 public:
  explicit ReportStore(std::size_t capacity) : capacity_(capacity) {}
  void put(const std::string& id, std::shared_ptr<const nlohmann::json> report);
  std::shared_ptr<const nlohmann::json> get(const std::string& id);
  std::size_t size() const;

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const nlohmann::json>>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> order_;  // most recent first
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class Service {
 public:
  // `defaults` supplies the simulation settings a request does not override.
  Service(ServiceConfig config, assessment::AssessmentConfig defaults);

  void load(std::shared_ptr<const Artifacts> artifacts);
  bool loaded() const;

  Response assess(const std::string& body);
  Response graph_summary() const;
  Response sample_sessions(const std::string& group, const std::string& request_id,
                           const std::optional<std::string>& limit);
  Response health() const;

  // Routes, CORS headers and the worker pool.
  void mount(httplib::Server& server);

  const ServiceConfig& config() const { return config_; }

 private:
  std::shared_ptr<const Artifacts> artifacts() const;

  ServiceConfig config_;
  assessment::AssessmentConfig defaults_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Artifacts> artifacts_;
  ReportStore store_;
};

// Report as served over HTTP: the CLI report plus "request_id".
nlohmann::json http_report(const nlohmann::json& report, const std::string& request_id);

}  // namespace cxsim::service
