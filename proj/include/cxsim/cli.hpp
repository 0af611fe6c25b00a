#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxsim/assessment.hpp"
#include "cxsim/embedding.hpp"
#include "cxsim/evaluation.hpp"
#include "cxsim/graph.hpp"
#include "cxsim/ingestion.hpp"
#include "cxsim/predictor.hpp"
#include "cxsim/service.hpp"

namespace cxsim::cli {

struct IngestConfig {
  ingestion::LogFormat format = ingestion::LogFormat::kNative;
  bool strict = false;
  bool dedupe_consecutive = false;
};

struct PipelineConfig {
  IngestConfig ingest;
  graph::GraphConfig graph;
  embedding::ProviderConfig embedding;
  predictor::PredictorConfig predictor;
  evaluation::EvaluationConfig evaluation;
  assessment::AssessmentConfig assessment;  // holds the simulation settings
  service::ServiceConfig service;

  PipelineConfig();
  // Throws Error(kInvalidConfig).
  void validate() const;
};

// Every key is optional; unknown keys throw Error(kInvalidConfig).
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& c);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

// CXSIM_PROVIDER, CXSIM_DIMENSION, CXSIM_CACHE_DIR, CXSIM_THREADS, CXSIM_SEED,
// CXSIM_REMOTE_ENDPOINT, CXSIM_REMOTE_MODEL. Malformed values throw Error(kInvalidConfig).
void apply_env(PipelineConfig& c, const EnvLookup& env);

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                const EnvLookup& env = process_env);
int run_command(int argc, const char* const* argv);

}  // namespace cxsim::cli
