#include "cxsim/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cxsim/error.hpp"
#include "cxsim/simulator.hpp"

namespace cxsim::cli {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::kInvalidConfig, "unknown configuration key " + where + "." + key);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kInvalidConfig, "configuration key " + where + "." + key + " has the wrong type");
  }
}

ingestion::LogFormat parse_log_format(std::string_view s) {
  if (s == "native") return ingestion::LogFormat::kNative;
  if (s == "ga360") return ingestion::LogFormat::kGa360;
  throw Error(ErrorKind::kInvalidConfig, "log format must be native or ga360");
}

std::string_view to_string(ingestion::LogFormat f) { return f == ingestion::LogFormat::kNative ? "native" : "ga360"; }

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorKind::kInvalidConfig, e.what());
  }
}

std::uint64_t parse_u64(const std::string& name, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || text[0] == '-') {
    throw Error(ErrorKind::kInvalidConfig, name + " must be a non-negative integer");
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

graph::EventTransitionGraph load_graph(const std::string& path) {
  std::istringstream in(read_file(path));
  return graph::read_graph(in);
}

std::vector<SessionRecord> load_sessions(const std::string& path) {
  std::istringstream in(read_file(path));
  return ingestion::read_sessions(in);
}

void write_sessions_file(const std::filesystem::path& path, const std::vector<SessionRecord>& sessions) {
  auto out = open_out(path);
  ingestion::write_sessions(out, sessions);
}

// Flag values; unset ones leave the merged configuration alone.
struct Flags {
  std::string config;
  // embedding
  std::optional<std::string> provider;
  std::optional<std::size_t> dimension;
  std::optional<std::string> cache;
  // ingest
  std::optional<std::string> format;
  bool strict = false;
  bool dedupe = false;
  std::optional<std::string> train_start, validation_start, test_start, test_end;
  // graph
  std::optional<double> alpha;
  std::optional<std::string> support;
  std::optional<std::string> identity_fields;
  // predictor
  std::optional<double> threshold, positive_weight, negative_rate, learning_rate;
  std::optional<int> max_iterations, early_stopping, num_leaves, min_data_in_leaf;
  // evaluation
  std::optional<std::string> smape_support;
  // simulation
  std::optional<std::size_t> n_sessions, max_length, threads, samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> conversion_field, conversion_value;
  bool unpaired = false;
  // service
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::size_t> store_capacity, max_sessions;
  std::optional<std::string> cors_origin;
};

void apply_flags(PipelineConfig& c, const Flags& f) {
  if (f.provider) c.embedding.provider = as_config_error([&] { return embedding::parse_provider_kind(*f.provider); });
  if (f.dimension) c.embedding.dimension = *f.dimension;
  if (f.cache) c.embedding.cache_path = *f.cache;
  if (f.format) c.ingest.format = parse_log_format(*f.format);
  if (f.strict) c.ingest.strict = true;
  if (f.dedupe) c.ingest.dedupe_consecutive = true;
  if (f.alpha) c.graph.alpha = *f.alpha;
  if (f.support) c.graph.support = as_config_error([&] { return graph::parse_smoothing_support(*f.support); });
  if (f.identity_fields) {
    c.graph.identity_fields.clear();
    std::stringstream ss(*f.identity_fields);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) c.graph.identity_fields.insert(item);
    }
  }
  if (f.threshold) c.predictor.decision_threshold = *f.threshold;
  if (f.positive_weight) c.predictor.positive_class_weight = *f.positive_weight;
  if (f.negative_rate) c.predictor.negative_subsample_rate = *f.negative_rate;
  if (f.learning_rate) c.predictor.learning_rate = *f.learning_rate;
  if (f.max_iterations) c.predictor.max_iterations = *f.max_iterations;
  if (f.early_stopping) c.predictor.early_stopping_rounds = *f.early_stopping;
  if (f.num_leaves) c.predictor.num_leaves = *f.num_leaves;
  if (f.min_data_in_leaf) c.predictor.min_data_in_leaf = *f.min_data_in_leaf;
  if (f.smape_support) {
    c.evaluation.smape_support = as_config_error([&] { return evaluation::parse_smape_support(*f.smape_support); });
  }
  auto& sim = c.assessment.simulation;
  if (f.n_sessions) sim.n_sessions = *f.n_sessions;
  if (f.max_length) sim.max_length = *f.max_length;
  if (f.threads) {
    sim.threads = *f.threads;
    c.service.threads = *f.threads;
  }
  if (f.seed) {
    sim.seed = *f.seed;
    c.predictor.seed = *f.seed;
  }
  if (f.conversion_field) sim.conversion.field = *f.conversion_field;
  if (f.conversion_value) sim.conversion.value = *f.conversion_value;
  if (f.samples) c.assessment.sample_sessions = *f.samples;
  if (f.unpaired) c.assessment.paired_seeds = false;
  if (f.host) c.service.host = *f.host;
  if (f.port) c.service.port = *f.port;
  if (f.store_capacity) c.service.store_capacity = *f.store_capacity;
  if (f.max_sessions) c.service.max_sessions = *f.max_sessions;
  if (f.cors_origin) c.service.cors_origin = *f.cors_origin;
}

PipelineConfig resolve(const Flags& f, const EnvLookup& env) {
  PipelineConfig c;
  std::string path = f.config;
  if (path.empty()) path = env("CXSIM_CONFIG").value_or("");
  if (!path.empty()) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kInvalidConfig, "config file " + path + " is not JSON: " + e.what());
    }
    c = config_from_json(j, c);
  }
  apply_env(c, env);
  apply_flags(c, f);
  c.validate();
  return c;
}

embedding::Embedder make_embedder(const PipelineConfig& c) { return embedding::make_embedder(c.embedding); }

void set_signature(predictor::HybridModel& model, const embedding::Embedder& e) {
  model.set_embedding_signature({std::string(e.provider().name()), std::string(e.provider().model()), e.dimension()});
}

void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

// ---- subcommands ----

int cmd_ingest(const PipelineConfig& c, const std::string& input, const std::string& output_dir, const Flags& f,
               std::ostream& out, std::ostream& err) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + input);
  const auto parsed = ingestion::parse_log(in, c.ingest.format, c.ingest.strict);
  for (std::size_t k = 0; k < parsed.errors.size() && k < 20; ++k) {
    err << "warning: line " << parsed.errors[k].line_no << ": " << parsed.errors[k].reason << '\n';
  }
  const auto sessions = ingestion::sessionize(parsed.records, {c.ingest.dedupe_consecutive});
  for (const auto& conflict : sessions.conflicts) {
    err << "warning: session " << conflict.session_id << " has more than one segment; kept the earliest\n";
  }
  const std::filesystem::path dir(output_dir);
  std::filesystem::create_directories(dir);
  write_sessions_file(dir / "sessions.jsonl", sessions.sessions);

  json summary{{"records", parsed.records.size()},
               {"malformed", parsed.errors.size()},
               {"sessions", sessions.sessions.size()},
               {"segment_conflicts", sessions.conflicts.size()}};
  const int given = f.train_start.has_value() + f.validation_start.has_value() + f.test_start.has_value() +
                    f.test_end.has_value();
  if (given != 0) {
    if (given != 4) {
      throw Error(ErrorKind::kInvalidConfig,
                  "--train-start, --validation-start, --test-start and --test-end go together");
    }
    const auto t0 = as_config_error([&] { return ingestion::parse_time_ms(*f.train_start); });
    const auto t1 = as_config_error([&] { return ingestion::parse_time_ms(*f.validation_start); });
    const auto t2 = as_config_error([&] { return ingestion::parse_time_ms(*f.test_start); });
    const auto t3 = as_config_error([&] { return ingestion::parse_time_ms(*f.test_end); });
    const ingestion::TemporalSplit split{{t0, t1}, {t1, t2}, {t2, t3}};
    as_config_error([&] {
      split.validate();
      return 0;
    });
    const auto part = ingestion::partition(sessions.sessions, split);
    write_sessions_file(dir / "train.jsonl", part.train);
    write_sessions_file(dir / "validation.jsonl", part.validation);
    write_sessions_file(dir / "test.jsonl", part.test);
    summary["split"] = {{"train", part.train.size()},
                        {"validation", part.validation.size()},
                        {"test", part.test.size()},
                        {"dropped", part.dropped}};
  }
  print_json(out, summary);
  return 0;
}

int cmd_build_graph(const PipelineConfig& c, const std::string& sessions_path, const std::string& output,
                    std::ostream& out) {
  const auto sessions = load_sessions(sessions_path);
  if (sessions.empty()) throw Error(ErrorKind::kEmpty, sessions_path + " holds no sessions");
  const auto g = graph::build_graph(sessions, c.graph);
  {
    auto f = open_out(output);
    graph::write_graph(f, g);
  }
  print_json(out, {{"nodes", g.node_count()},
                   {"edges", g.edge_count()},
                   {"density", static_cast<double>(g.edge_count()) / static_cast<double>(g.valid_pair_count())}});
  return 0;
}

int cmd_embed(const PipelineConfig& c, const std::vector<std::string>& graphs, const std::vector<std::string>& campaigns,
              std::ostream& out) {
  if (c.embedding.cache_path.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "embed needs a cache file (--cache or CXSIM_CACHE_DIR)");
  }
  auto embedder = make_embedder(c);
  std::vector<std::string> texts;
  for (const auto& path : graphs) {
    const auto g = load_graph(path);
    for (const auto& n : g.nodes()) texts.push_back(n.canonical_text);
    texts.push_back(canonicalize(g.segment()));
  }
  for (const auto& path : campaigns) {
    const auto spec = assessment::campaign_from_json(json::parse(read_file(path)));
    texts.push_back(EventNode::from_descriptor(spec.descriptor).canonical_text);
    if (!spec.segment.empty()) texts.push_back(canonicalize(spec.segment));
  }
  std::sort(texts.begin(), texts.end());
  texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
  embedder.embed_texts(texts);
  print_json(out, {{"texts", texts.size()},
                   {"provider", embedder.provider().name()},
                   {"model", embedder.provider().model()},
                   {"dimension", embedder.dimension()},
                   {"provider_requests", embedder.provider_texts()},
                   {"cache_entries", embedder.cache().size()}});
  return 0;
}

int cmd_train(const PipelineConfig& c, const std::string& train_graph, const std::string& valid_graph,
              const std::string& output, std::ostream& out) {
  auto embedder = make_embedder(c);
  const auto gt = load_graph(train_graph);
  const auto gv = load_graph(valid_graph);
  const auto et = predictor::embed_graph_nodes(embedder, gt);
  const auto ev = predictor::embed_graph_nodes(embedder, gv);
  const auto train = predictor::build_dataset(gt, et, embedder.embed_segment(gt.segment()), c.predictor);
  const auto valid = predictor::build_dataset(gv, ev, embedder.embed_segment(gv.segment()), c.predictor);
  auto model = predictor::train(train, valid, c.predictor);
  set_signature(model, embedder);
  predictor::save_model(output, model);
  const auto meta = json::parse(read_file((std::filesystem::path(output) / "model.json").string()));
  print_json(out, meta.at("training"));
  return 0;
}

int cmd_evaluate(const PipelineConfig& c, const std::string& model_dir, const std::vector<std::string>& graphs,
                 const std::string& format, std::ostream& out) {
  const auto model = predictor::load_model(model_dir);
  auto embedder = make_embedder(c);
  if (embedder.dimension() != model.dimension()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedder and model dimensions differ");
  }
  std::vector<graph::EventTransitionGraph> loaded;
  for (const auto& p : graphs) loaded.push_back(load_graph(p));
  predictor::NodeEmbeddings emb;
  std::vector<evaluation::EvaluationSet> sets;
  for (const auto& g : loaded) {
    for (auto& [id, v] : predictor::embed_graph_nodes(embedder, g)) emb.emplace(id, std::move(v));
    sets.push_back({&g, embedder.embed_segment(g.segment())});
  }
  const auto report = evaluation::evaluate(model, sets, emb, c.evaluation);
  if (format == "table") {
    out << evaluation::format_table({report});
  } else {
    print_json(out, evaluation::report_to_json(report));
  }
  return 0;
}

int cmd_simulate(const PipelineConfig& c, const std::string& graph_path, const std::string& output, bool with_text,
                 std::ostream& out, std::ostream& err) {
  const auto g = load_graph(graph_path);
  const auto& sim = c.assessment.simulation;
  const auto sessions = simulator::simulate(g, sim);
  const auto conv = simulator::conversion_nodes(g, sim.conversion);
  std::size_t conversions = 0, capped = 0;
  for (const auto& s : sessions) {
    conversions += simulator::converted(s, conv);
    capped += s.terminated_by == simulator::Termination::kMaxLength;
  }
  const json summary{{"n_sessions", sessions.size()},
                     {"seed", sim.seed},
                     {"conversions", conversions},
                     {"cvr", static_cast<double>(conversions) / static_cast<double>(sessions.size())},
                     {"max_length_hits", capped}};
  if (output.empty()) {
    simulator::write_jsonl(out, g, sessions, with_text);
    err << summary.dump() << '\n';
  } else {
    auto f = open_out(output);
    simulator::write_jsonl(f, g, sessions, with_text);
    print_json(out, summary);
  }
  return 0;
}

assessment::CampaignSpec load_campaign(const std::string& path, const std::string& inline_json) {
  if (path.empty() == inline_json.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "give exactly one of --campaign and --campaign-json");
  }
  const std::string text = path.empty() ? inline_json : read_file(path);
  try {
    return assessment::campaign_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kFormat, std::string("campaign is not JSON: ") + e.what());
  }
}

int cmd_assess(const PipelineConfig& c, const std::string& graph_path, const std::string& model_dir,
               const assessment::CampaignSpec& campaign, const std::string& format, std::ostream& out) {
  const auto g = load_graph(graph_path);
  const auto model = predictor::load_model(model_dir);
  auto embedder = make_embedder(c);
  const auto report = assessment::assess(g, campaign, model, embedder, c.assessment);
  if (format == "table") {
    out << assessment::format_summary(report);
  } else {
    print_json(out, assessment::report_to_json(report));
  }
  return 0;
}

int cmd_serve(const PipelineConfig& c, const std::string& graph_path, const std::string& model_dir,
              std::ostream& err) {
  service::Service svc(c.service, c.assessment);
  svc.load(std::make_shared<const service::Artifacts>(service::load_artifacts(graph_path, model_dir, c.embedding)));
  httplib::Server server;
  svc.mount(server);
  if (!server.bind_to_port(c.service.host, c.service.port)) {
    throw Error(ErrorKind::kIo, "cannot bind " + c.service.host + ":" + std::to_string(c.service.port));
  }
  err << "listening on http://" << c.service.host << ':' << c.service.port << std::endl;
  server.listen_after_bind();
  return 0;
}

void add_config(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
}

void add_provider(CLI::App* sub, Flags& f) {
  sub->add_option("--provider", f.provider, "Embedding provider: hash or remote");
  sub->add_option("--dimension", f.dimension, "Embedding dimension");
  sub->add_option("--cache", f.cache, "Embedding cache file");
}

void add_simulation(CLI::App* sub, Flags& f) {
  sub->add_option("--n", f.n_sessions, "Sessions to simulate");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--max-length", f.max_length, "Maximum events per simulated session");
  sub->add_option("--threads", f.threads, "Worker threads");
  sub->add_option("--conversion-field", f.conversion_field, "Descriptor field of the conversion rule");
  sub->add_option("--conversion-value", f.conversion_value, "Value the conversion field must equal");
}

}  // namespace

PipelineConfig::PipelineConfig() { embedding.remote.token_env = "CXSIM_API_TOKEN"; }

void PipelineConfig::validate() const {
  as_config_error([&] {
    embedding.validate();
    predictor.validate();
    assessment.validate();
    return 0;
  });
  if (!(graph.alpha >= 0.0) || !std::isfinite(graph.alpha)) {
    throw Error(ErrorKind::kInvalidConfig, "graph.alpha must be a finite non-negative number");
  }
  if (service.port < 0 || service.port > 65535) throw Error(ErrorKind::kInvalidConfig, "service.port out of range");
  if (service.threads < 1) throw Error(ErrorKind::kInvalidConfig, "service.threads must be at least 1");
  if (service.max_sessions < 1) throw Error(ErrorKind::kInvalidConfig, "service.max_sessions must be at least 1");
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  check_keys(j, {"ingest", "graph", "embedding", "predictor", "evaluation", "simulation", "assessment", "service"},
             "config");
  if (j.contains("ingest")) {
    const auto& s = j.at("ingest");
    check_keys(s, {"format", "strict", "dedupe_consecutive"}, "ingest");
    std::string fmt(to_string(c.ingest.format));
    read(s, "format", fmt, "ingest");
    c.ingest.format = parse_log_format(fmt);
    read(s, "strict", c.ingest.strict, "ingest");
    read(s, "dedupe_consecutive", c.ingest.dedupe_consecutive, "ingest");
  }
  if (j.contains("graph")) {
    const auto& s = j.at("graph");
    check_keys(s, {"alpha", "support", "identity_fields"}, "graph");
    read(s, "alpha", c.graph.alpha, "graph");
    std::string support(graph::to_string(c.graph.support));
    read(s, "support", support, "graph");
    c.graph.support = as_config_error([&] { return graph::parse_smoothing_support(support); });
    std::vector<std::string> fields(c.graph.identity_fields.begin(), c.graph.identity_fields.end());
    read(s, "identity_fields", fields, "graph");
    c.graph.identity_fields = FieldWhitelist(fields.begin(), fields.end());
  }
  if (j.contains("embedding")) {
    const auto& s = j.at("embedding");
    check_keys(s, {"provider", "dimension", "cache", "remote"}, "embedding");
    std::string provider(embedding::to_string(c.embedding.provider));
    read(s, "provider", provider, "embedding");
    c.embedding.provider = as_config_error([&] { return embedding::parse_provider_kind(provider); });
    read(s, "dimension", c.embedding.dimension, "embedding");
    std::string cache = c.embedding.cache_path.string();
    read(s, "cache", cache, "embedding");
    c.embedding.cache_path = cache;
    if (s.contains("remote")) {
      const auto& r = s.at("remote");
      check_keys(r, {"endpoint", "model", "token_env", "batch_size", "max_retries", "initial_backoff_ms", "timeout_ms"},
                 "embedding.remote");
      auto& rc = c.embedding.remote;
      read(r, "endpoint", rc.endpoint, "embedding.remote");
      read(r, "model", rc.model, "embedding.remote");
      read(r, "token_env", rc.token_env, "embedding.remote");
      read(r, "batch_size", rc.batch_size, "embedding.remote");
      read(r, "max_retries", rc.max_retries, "embedding.remote");
      read(r, "initial_backoff_ms", rc.initial_backoff_ms, "embedding.remote");
      read(r, "timeout_ms", rc.timeout_ms, "embedding.remote");
    }
  }
  if (j.contains("predictor")) c.predictor = predictor::config_from_json(j.at("predictor"), c.predictor);
  if (j.contains("evaluation")) {
    const auto& s = j.at("evaluation");
    check_keys(s, {"smape_support"}, "evaluation");
    std::string support(evaluation::to_string(c.evaluation.smape_support));
    read(s, "smape_support", support, "evaluation");
    c.evaluation.smape_support = as_config_error([&] { return evaluation::parse_smape_support(support); });
  }
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    check_keys(s, {"n_sessions", "max_length", "seed", "threads", "conversion"}, "simulation");
    auto& sim = c.assessment.simulation;
    read(s, "n_sessions", sim.n_sessions, "simulation");
    read(s, "max_length", sim.max_length, "simulation");
    read(s, "seed", sim.seed, "simulation");
    read(s, "threads", sim.threads, "simulation");
    if (s.contains("conversion")) {
      const auto& r = s.at("conversion");
      check_keys(r, {"field", "value"}, "simulation.conversion");
      read(r, "field", sim.conversion.field, "simulation.conversion");
      read(r, "value", sim.conversion.value, "simulation.conversion");
    }
  }
  if (j.contains("assessment")) {
    const auto& s = j.at("assessment");
    check_keys(s, {"paired_seeds", "sample_sessions"}, "assessment");
    read(s, "paired_seeds", c.assessment.paired_seeds, "assessment");
    read(s, "sample_sessions", c.assessment.sample_sessions, "assessment");
  }
  if (j.contains("service")) {
    const auto& s = j.at("service");
    check_keys(s, {"host", "port", "threads", "store_capacity", "max_sessions", "cors_origin"}, "service");
    read(s, "host", c.service.host, "service");
    read(s, "port", c.service.port, "service");
    read(s, "threads", c.service.threads, "service");
    read(s, "store_capacity", c.service.store_capacity, "service");
    read(s, "max_sessions", c.service.max_sessions, "service");
    read(s, "cors_origin", c.service.cors_origin, "service");
  }
  return c;
}

json config_to_json(const PipelineConfig& c) {
  const auto& sim = c.assessment.simulation;
  const auto& rc = c.embedding.remote;
  return {
      {"ingest",
       {{"format", to_string(c.ingest.format)},
        {"strict", c.ingest.strict},
        {"dedupe_consecutive", c.ingest.dedupe_consecutive}}},
      {"graph",
       {{"alpha", c.graph.alpha},
        {"support", graph::to_string(c.graph.support)},
        {"identity_fields", std::vector<std::string>(c.graph.identity_fields.begin(), c.graph.identity_fields.end())}}},
      {"embedding",
       {{"provider", embedding::to_string(c.embedding.provider)},
        {"dimension", c.embedding.dimension},
        {"cache", c.embedding.cache_path.string()},
        {"remote",
         {{"endpoint", rc.endpoint},
          {"model", rc.model},
          {"token_env", rc.token_env},
          {"batch_size", rc.batch_size},
          {"max_retries", rc.max_retries},
          {"initial_backoff_ms", rc.initial_backoff_ms},
          {"timeout_ms", rc.timeout_ms}}}}},
      {"predictor", predictor::config_to_json(c.predictor)},
      {"evaluation", {{"smape_support", evaluation::to_string(c.evaluation.smape_support)}}},
      {"simulation",
       {{"n_sessions", sim.n_sessions},
        {"max_length", sim.max_length},
        {"seed", sim.seed},
        {"threads", sim.threads},
        {"conversion", {{"field", sim.conversion.field}, {"value", sim.conversion.value}}}}},
      {"assessment", {{"paired_seeds", c.assessment.paired_seeds}, {"sample_sessions", c.assessment.sample_sessions}}},
      {"service",
       {{"host", c.service.host},
        {"port", c.service.port},
        {"threads", c.service.threads},
        {"store_capacity", c.service.store_capacity},
        {"max_sessions", c.service.max_sessions},
        {"cors_origin", c.service.cors_origin}}},
  };
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

void apply_env(PipelineConfig& c, const EnvLookup& env) {
  if (auto v = env("CXSIM_PROVIDER")) c.embedding.provider = as_config_error([&] { return embedding::parse_provider_kind(*v); });
  if (auto v = env("CXSIM_DIMENSION")) c.embedding.dimension = parse_u64("CXSIM_DIMENSION", *v);
  if (auto v = env("CXSIM_CACHE_DIR")) c.embedding.cache_path = std::filesystem::path(*v) / "embeddings.jsonl";
  if (auto v = env("CXSIM_THREADS")) {
    c.assessment.simulation.threads = parse_u64("CXSIM_THREADS", *v);
    c.service.threads = c.assessment.simulation.threads;
  }
  if (auto v = env("CXSIM_SEED")) {
    c.assessment.simulation.seed = parse_u64("CXSIM_SEED", *v);
    c.predictor.seed = c.assessment.simulation.seed;
  }
  if (auto v = env("CXSIM_REMOTE_ENDPOINT")) c.embedding.remote.endpoint = *v;
  if (auto v = env("CXSIM_REMOTE_MODEL")) c.embedding.remote.model = *v;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Clickstream simulator: graph building, edge prediction and campaign assessment", "cxsim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(service::kVersion));
  Flags f;

  std::string input, output, output_dir, sessions, graph_path, model_dir, campaign, campaign_json, valid_graph;
  std::string format = "json";
  std::vector<std::string> graphs, campaigns;
  bool with_text = false;

  auto* ingest = app.add_subcommand("ingest", "Parse a raw event log into session files");
  add_config(ingest, f);
  ingest->add_option("--input", input, "Event log (JSON lines)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--output-dir", output_dir, "Directory for sessions.jsonl and split files")->required();
  ingest->add_option("--format", f.format, "Log format: native or ga360");
  ingest->add_flag("--strict", f.strict, "Fail on the first malformed line");
  ingest->add_flag("--dedupe,--dedupe-consecutive", f.dedupe, "Collapse consecutive identical events");
  ingest->add_option("--train-start", f.train_start, "Start of the training window (ms or YYYY-MM-DD)");
  ingest->add_option("--validation-start", f.validation_start, "Start of the validation window");
  ingest->add_option("--test-start", f.test_start, "Start of the test window");
  ingest->add_option("--test-end", f.test_end, "End of the test window (exclusive)");

  auto* build = app.add_subcommand("build-graph", "Build an event transition graph from sessions");
  add_config(build, f);
  build->add_option("--sessions", sessions, "Sessions file")->required()->check(CLI::ExistingFile);
  build->add_option("--output", output, "Graph file to write")->required();
  build->add_option("--alpha", f.alpha, "Laplace smoothing constant");
  build->add_option("--support", f.support, "Smoothing support: observed or all");
  build->add_option("--identity-fields", f.identity_fields, "Comma-separated fields defining event identity");

  auto* embed = app.add_subcommand("embed", "Fill the embedding cache for graph nodes and campaigns");
  add_config(embed, f);
  add_provider(embed, f);
  embed->add_option("--graph", graphs, "Graph file (repeatable)")->required()->check(CLI::ExistingFile);
  embed->add_option("--campaign", campaigns, "Campaign file (repeatable)")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train the classifier and regressor");
  add_config(train, f);
  add_provider(train, f);
  train->add_option("--train-graph", graph_path, "Training graph")->required()->check(CLI::ExistingFile);
  train->add_option("--validation-graph", valid_graph, "Validation graph")->required()->check(CLI::ExistingFile);
  train->add_option("--output", output, "Model directory")->required();
  train->add_option("--threshold", f.threshold, "Decision threshold on the classifier probability");
  train->add_option("--positive-weight", f.positive_weight, "Weight of positive pairs in the classifier");
  train->add_option("--max-iterations", f.max_iterations, "Boosting rounds");
  train->add_option("--early-stopping", f.early_stopping, "Rounds without improvement before stopping");
  train->add_option("--negative-rate", f.negative_rate, "Fraction of negative pairs kept");
  train->add_option("--learning-rate", f.learning_rate, "Shrinkage");
  train->add_option("--num-leaves", f.num_leaves, "Leaves per tree");
  train->add_option("--min-data-in-leaf", f.min_data_in_leaf, "Minimum rows per leaf");
  train->add_option("--seed", f.seed, "Seed for subsampling and feature sampling");

  auto* evaluate = app.add_subcommand("evaluate", "Score a model against held-out graphs");
  add_config(evaluate, f);
  add_provider(evaluate, f);
  evaluate->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--graph", graphs, "Test graph (repeatable)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--smape-support", f.smape_support, "SMAPE pairs: active or all");
  evaluate->add_option("--format", format, "Output: json or table")->check(CLI::IsMember({"json", "table"}));

  auto* simulate = app.add_subcommand("simulate", "Sample sessions by random walk");
  add_config(simulate, f);
  add_simulation(simulate, f);
  simulate->add_option("--graph", graph_path, "Graph file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--output", output, "Sessions JSONL file; standard output when absent");
  simulate->add_flag("--with-text", with_text, "Include canonical event texts");

  auto* assess = app.add_subcommand("assess", "Compare conversion rates with and without a campaign");
  add_config(assess, f);
  add_provider(assess, f);
  add_simulation(assess, f);
  assess->add_option("--graph", graph_path, "Control graph")->required()->check(CLI::ExistingFile);
  assess->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  assess->add_option("--campaign", campaign, "Campaign file")->check(CLI::ExistingFile);
  assess->add_option("--campaign-json", campaign_json, "Campaign as inline JSON");
  assess->add_option("--samples", f.samples, "Sample sessions kept per group");
  assess->add_flag("--unpaired", f.unpaired, "Use an independent seed for the treatment group");
  assess->add_option("--format", format, "Output: json or table")->check(CLI::IsMember({"json", "table"}));

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  add_config(serve, f);
  add_provider(serve, f);
  serve->add_option("--graph", graph_path, "Control graph")->required()->check(CLI::ExistingFile);
  serve->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", f.host, "Bind address");
  serve->add_option("--port", f.port, "Port");
  serve->add_option("--threads", f.threads, "Worker threads");
  serve->add_option("--store-capacity", f.store_capacity, "Reports kept for session re-fetch");
  serve->add_option("--max-sessions", f.max_sessions, "Largest accepted n_sessions");
  serve->add_option("--cors-origin", f.cors_origin, "Access-Control-Allow-Origin value; empty disables CORS");
  serve->add_option("--seed", f.seed, "Default seed for requests without one");
  serve->add_option("--max-length", f.max_length, "Maximum events per simulated session");
  serve->add_option("--conversion-field", f.conversion_field, "Descriptor field of the conversion rule");
  serve->add_option("--conversion-value", f.conversion_value, "Value the conversion field must equal");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto config = resolve(f, env);
    if (ingest->parsed()) return cmd_ingest(config, input, output_dir, f, out, err);
    if (build->parsed()) return cmd_build_graph(config, sessions, output, out);
    if (embed->parsed()) return cmd_embed(config, graphs, campaigns, out);
    if (train->parsed()) return cmd_train(config, graph_path, valid_graph, output, out);
    if (evaluate->parsed()) return cmd_evaluate(config, model_dir, graphs, format, out);
    if (simulate->parsed()) return cmd_simulate(config, graph_path, output, with_text, out, err);
    if (assess->parsed()) {
      return cmd_assess(config, graph_path, model_dir, load_campaign(campaign, campaign_json), format, out);
    }
    if (serve->parsed()) return cmd_serve(config, graph_path, model_dir, err);
  } catch (const Error& e) {
    err << json{{"error", {{"kind", error_kind_name(e.kind())}, {"message", e.what()}}}}.dump() << '\n';
    return e.kind() == ErrorKind::kInvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"kind", "Internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 2;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace cxsim::cli
