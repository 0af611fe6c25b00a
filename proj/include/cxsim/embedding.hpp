#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cxsim/event_model.hpp"

namespace cxsim::embedding {

using EmbeddingVector = std::vector<double>;

enum class ProviderKind { kHash, kRemote };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view text);

struct RemoteConfig {
  std::string endpoint;    // e.g. https://host/v1/embeddings
  std::string model;
  std::string token_env;   // name of the env var holding the bearer token; empty: no auth
  std::size_t batch_size = 64;
  int max_retries = 4;
  int initial_backoff_ms = 250;
  int timeout_ms = 30'000;
};

struct ProviderConfig {
  ProviderKind provider = ProviderKind::kHash;
  std::size_t dimension = 128;
  RemoteConfig remote;
  std::filesystem::path cache_path;  // empty: in-memory cache only

  // Throws Error(kInvalidConfig).
  void validate() const;
};

class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string_view name() const = 0;
  virtual std::string_view model() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t batch_size() const { return 64; }

  // One vector per input, each of length dimension().
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
};

// Signed feature hashing: lowercase tokens split on ASCII non-alphanumerics
// (bytes >= 0x80 stay inside tokens), FNV-1a 64 per token, bucket = h mod d,
// sign from the top bit, then L2 normalization. A text with no tokens, or
// whose token sum cancels to zero, is hashed as one whole-text token.
EmbeddingVector hash_embed(std::string_view text, std::size_t dimension);

class HashProvider final : public Provider {
 public:
  explicit HashProvider(std::size_t dimension);

  std::string_view name() const override { return "hash"; }
  std::string_view model() const override { return "fnv1a-signed-v1"; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

 private:
  std::size_t dimension_;
};

// OpenAI-style embeddings endpoint: POST {"model", "input": [...], "dimensions"},
// response {"data": [{"index", "embedding": [...]}]}. Retries connection
// failures, 429 and 5xx with exponential backoff.
class RemoteProvider final : public Provider {
 public:
  RemoteProvider(RemoteConfig config, std::size_t dimension);

  std::string_view name() const override { return "remote"; }
  std::string_view model() const override { return config_.model; }
  std::size_t dimension() const override { return dimension_; }
  std::size_t batch_size() const override { return config_.batch_size; }
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

 private:
  RemoteConfig config_;
  std::size_t dimension_;
  std::string base_url_;
  std::string path_;
};

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

// Append-only JSON-lines store keyed by hex digest, fully indexed in memory.
// A torn final line from an interrupted write is skipped on load.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;  // memory only
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<EmbeddingVector> find(const std::string& key) const;
  // No-op when the key is already present.
  void insert(const std::string& key, const EmbeddingVector& value);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
  std::ofstream out_;
};

class Embedder {
 public:
  Embedder(std::shared_ptr<Provider> provider, std::shared_ptr<EmbeddingCache> cache);

  // Throws Error(kInvalidArgument) for empty text.
  EmbeddingVector embed_text(std::string_view text);
  // Misses are sent to the provider in batches; concurrent callers asking for
  // the same key wait on a single request.
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);
  EmbeddingVector embed_node(const EventNode& node);
  EmbeddingVector embed_segment(const SegmentKey& segment);

  std::string cache_key(std::string_view text) const;
  std::size_t dimension() const { return provider_->dimension(); }
  const Provider& provider() const { return *provider_; }
  const EmbeddingCache& cache() const { return *cache_; }

  // Texts sent to the provider so far.
  std::size_t provider_texts() const { return provider_texts_.load(); }

 private:
  std::shared_ptr<Provider> provider_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::mutex inflight_mutex_;
  std::unordered_map<std::string, std::shared_future<EmbeddingVector>> inflight_;
  std::atomic<std::size_t> provider_texts_{0};
};

// Provider plus cache from configuration.
Embedder make_embedder(const ProviderConfig& config);

}  // namespace cxsim::embedding
