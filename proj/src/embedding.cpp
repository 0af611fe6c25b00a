#include "cxsim/embedding.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "cxsim/digest.hpp"
#include "cxsim/error.hpp"
#include "cxsim/json.hpp"

namespace cxsim::embedding {
namespace {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

void add_token(EmbeddingVector& v, std::string_view token) {
  const std::uint64_t h = fnv1a64(token);
  v[h % v.size()] += (h >> 63) ? -1.0 : 1.0;
}

double squared_norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

void check_vector(const EmbeddingVector& v, std::size_t dimension) {
  if (v.size() != dimension) {
    throw Error(ErrorKind::kDimensionMismatch, "provider returned a vector of length " +
                                                   std::to_string(v.size()) + ", expected " +
                                                   std::to_string(dimension));
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::kFormat, "provider returned a non-finite value");
  }
}

}  // namespace

std::string_view to_string(ProviderKind kind) {
  return kind == ProviderKind::kHash ? "hash" : "remote";
}

ProviderKind parse_provider_kind(std::string_view text) {
  if (text == "hash") return ProviderKind::kHash;
  if (text == "remote") return ProviderKind::kRemote;
  throw Error(ErrorKind::kInvalidConfig,
              "embedding provider must be 'hash' or 'remote', got '" + std::string(text) + "'");
}

void ProviderConfig::validate() const {
  if (dimension < 1) throw Error(ErrorKind::kInvalidConfig, "embedding dimension must be >= 1");
  if (provider != ProviderKind::kRemote) return;
  if (remote.endpoint.empty() || remote.model.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "remote provider needs an endpoint and a model name");
  }
  if (!remote.endpoint.starts_with("http://") && !remote.endpoint.starts_with("https://")) {
    throw Error(ErrorKind::kInvalidConfig, "remote endpoint must be an http(s) URL");
  }
  if (remote.batch_size < 1 || remote.max_retries < 0 || remote.initial_backoff_ms < 0 ||
      remote.timeout_ms < 1) {
    throw Error(ErrorKind::kInvalidConfig, "invalid remote batching or retry settings");
  }
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dimension) {
  if (dimension < 1) throw Error(ErrorKind::kInvalidArgument, "dimension must be >= 1");
  EmbeddingVector v(dimension, 0.0);
  std::string token;
  auto flush = [&] {
    if (!token.empty()) add_token(v, token);
    token.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (!is_token_byte(c)) {
      flush();
    } else {
      token.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    }
  }
  flush();
  double norm2 = squared_norm(v);
  if (norm2 == 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    add_token(v, text);
    norm2 = 1.0;
  }
  const double norm = std::sqrt(norm2);
  for (double& x : v) x /= norm;
  return v;
}

HashProvider::HashProvider(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ < 1) throw Error(ErrorKind::kInvalidConfig, "embedding dimension must be >= 1");
}

std::vector<EmbeddingVector> HashProvider::embed_batch(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, dimension_));
  return out;
}

RemoteProvider::RemoteProvider(RemoteConfig config, std::size_t dimension)
    : config_(std::move(config)), dimension_(dimension) {
  ProviderConfig check{ProviderKind::kRemote, dimension_, config_, {}};
  check.validate();
  const auto scheme_end = config_.endpoint.find("://") + 3;
  const auto path_start = config_.endpoint.find('/', scheme_end);
  base_url_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(const std::vector<std::string>& texts) {
  httplib::Headers headers;
  if (!config_.token_env.empty()) {
    const char* token = std::getenv(config_.token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw Error(ErrorKind::kInvalidConfig,
                  "environment variable " + config_.token_env + " holding the API token is unset");
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const std::string body =
      json{{"model", config_.model}, {"input", texts}, {"dimensions", dimension_}}.dump();

  httplib::Client client(base_url_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long>(config_.initial_backoff_ms) << (attempt - 1)));
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorKind::kRemoteUnavailable,
                  "embedding endpoint rejected the request with HTTP " + std::to_string(res->status));
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data") || !doc["data"].is_array()) {
      throw Error(ErrorKind::kFormat, "embedding response lacks a data array");
    }
    if (doc["data"].size() != texts.size()) {
      throw Error(ErrorKind::kFormat, "embedding response has " +
                                          std::to_string(doc["data"].size()) + " items for " +
                                          std::to_string(texts.size()) + " inputs");
    }
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    try {
      for (std::size_t k = 0; k < doc["data"].size(); ++k) {
        const auto& item = doc["data"][k];
        const std::size_t index = item.value("index", k);
        if (index >= texts.size() || seen[index]) {
          throw Error(ErrorKind::kFormat, "embedding response has a bad index");
        }
        seen[index] = true;
        out[index] = item.at("embedding").get<EmbeddingVector>();
        check_vector(out[index], dimension_);
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, std::string("bad embedding response: ") + ex.what());
    }
    return out;
  }
  throw Error(ErrorKind::kRemoteUnavailable,
              "embedding endpoint unavailable after " + std::to_string(config_.max_retries + 1) +
                  " attempts: " + last_error);
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  config.validate();
  if (config.provider == ProviderKind::kHash) {
    return std::make_shared<HashProvider>(config.dimension);
  }
  return std::make_shared<RemoteProvider>(config.remote, config.dimension);
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) continue;
      try {
        entries_.try_emplace(doc.at("key").get<std::string>(),
                             doc.at("vector").get<EmbeddingVector>());
      } catch (const json::exception&) {
        continue;
      }
    }
  }
  bool needs_newline = false;
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    std::ifstream tail(path_, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    needs_newline = tail.get() != '\n';
  }
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorKind::kIo, "cannot open embedding cache " + path_.string());
  if (needs_newline) out_ << '\n';
}

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const std::string& key, const EmbeddingVector& value) {
  std::lock_guard lock(mutex_);
  if (!entries_.try_emplace(key, value).second) return;
  if (out_.is_open()) {
    out_ << json{{"key", key}, {"vector", value}}.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::kIo, "failed writing embedding cache " + path_.string());
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

Embedder::Embedder(std::shared_ptr<Provider> provider, std::shared_ptr<EmbeddingCache> cache)
    : provider_(std::move(provider)), cache_(std::move(cache)) {
  if (!provider_) throw Error(ErrorKind::kInvalidArgument, "embedder needs a provider");
  if (!cache_) cache_ = std::make_shared<EmbeddingCache>();
}

std::string Embedder::cache_key(std::string_view text) const {
  std::string material;
  material.append(provider_->name());
  material.push_back('\x1f');
  material.append(provider_->model());
  material.push_back('\x1f');
  material.append(std::to_string(provider_->dimension()));
  material.push_back('\x1f');
  material.append(text);
  return sha256_hex(material);
}

EmbeddingVector Embedder::embed_text(std::string_view text) {
  return embed_texts({std::string(text)}).front();
}

std::vector<EmbeddingVector> Embedder::embed_texts(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::pair<std::size_t, std::shared_future<EmbeddingVector>>> waits;

  struct Owned {
    std::string key;
    std::string text;
    std::promise<EmbeddingVector> promise;
    std::vector<std::size_t> positions;
  };
  std::vector<Owned> owned;
  std::unordered_map<std::string, std::size_t> owned_index;

  {
    std::lock_guard lock(inflight_mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].empty()) {
        throw Error(ErrorKind::kInvalidArgument, "cannot embed empty text");
      }
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::string key = cache_key(texts[i]);
      if (auto hit = cache_->find(key)) {
        out[i] = std::move(*hit);
      } else if (auto it = owned_index.find(key); it != owned_index.end()) {
        owned[it->second].positions.push_back(i);
      } else if (auto fl = inflight_.find(key); fl != inflight_.end()) {
        waits.emplace_back(i, fl->second);
      } else {
        owned_index.emplace(key, owned.size());
        Owned o{key, texts[i], {}, {i}};
        inflight_.emplace(key, o.promise.get_future().share());
        owned.push_back(std::move(o));
      }
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, provider_->batch_size());
  std::size_t done = 0;
  try {
    for (; done < owned.size();) {
      const std::size_t n = std::min(batch, owned.size() - done);
      std::vector<std::string> chunk;
      chunk.reserve(n);
      for (std::size_t k = 0; k < n; ++k) chunk.push_back(owned[done + k].text);
      provider_texts_ += n;
      auto vectors = provider_->embed_batch(chunk);
      if (vectors.size() != n) {
        throw Error(ErrorKind::kFormat, "provider returned the wrong number of vectors");
      }
      for (auto& v : vectors) check_vector(v, provider_->dimension());
      for (std::size_t k = 0; k < n; ++k) {
        auto& o = owned[done];
        cache_->insert(o.key, vectors[k]);
        for (std::size_t pos : o.positions) out[pos] = vectors[k];
        o.promise.set_value(std::move(vectors[k]));
        ++done;
        std::lock_guard lock(inflight_mutex_);
        inflight_.erase(o.key);
      }
    }
  } catch (...) {
    std::lock_guard lock(inflight_mutex_);
    for (std::size_t k = done; k < owned.size(); ++k) {
      owned[k].promise.set_exception(std::current_exception());
      inflight_.erase(owned[k].key);
    }
    throw;
  }

  for (auto& [pos, fut] : waits) out[pos] = fut.get();
  return out;
}

EmbeddingVector Embedder::embed_node(const EventNode& node) { return embed_text(node.canonical_text); }

EmbeddingVector Embedder::embed_segment(const SegmentKey& segment) {
  return embed_text(canonicalize(segment));
}

Embedder make_embedder(const ProviderConfig& config) {
  auto provider = make_provider(config);
  auto cache = config.cache_path.empty() ? std::make_shared<EmbeddingCache>()
                                         : std::make_shared<EmbeddingCache>(config.cache_path);
  return Embedder(std::move(provider), std::move(cache));
}

}  // namespace cxsim::embedding
