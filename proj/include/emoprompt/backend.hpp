#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoprompt/chat.hpp"

namespace emoprompt {

struct CompletionRecord {
  std::string prompt_hash;
  std::string model_id;
  std::string text;
  std::string fetched_at;
  bool from_cache = false;
};

struct Embedding {
  std::vector<double> values;
  std::string encoder_id;

  std::size_t dim() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

/// Raw access to a frozen chat model and a frozen sentence encoder, without caching.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string model_id() const = 0;
  virtual std::string encoder_id() const = 0;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

struct BackendOptions {
  /// Content-addressed response cache; disabled when empty.
  std::optional<std::filesystem::path> cache_dir;
  int max_concurrency = 4;
};

struct BackendStats {
  std::uint64_t completion_requests = 0;
  std::uint64_t completion_cache_hits = 0;
  std::uint64_t embedding_requests = 0;
  std::uint64_t embedding_cache_hits = 0;
};

/// Shared handle used by every pipeline stage: bounds in-flight client calls and
/// serves repeated (model, messages, decoding) triples from the on-disk cache.
class Backend {
 public:
  Backend(std::shared_ptr<ModelClient> client, BackendOptions options);

  CompletionRecord complete(const ChatRequest& request);
  CompletionRecord complete(const std::string& prompt_text, const DecodingConfig& decoding = {});
  Embedding embed(const std::string& text);

  std::string completion_key(const ChatRequest& request) const;
  std::string embedding_key(const std::string& text) const;

  std::string model_id() const { return client_->model_id(); }
  std::string encoder_id() const { return client_->encoder_id(); }
  int max_concurrency() const { return options_.max_concurrency; }
  const BackendOptions& options() const { return options_; }
  BackendStats stats() const;
  void reset_stats();

  ModelClient& client() { return *client_; }

 private:
  std::filesystem::path entry_path(const std::string& kind, const std::string& key) const;

  std::shared_ptr<ModelClient> client_;
  BackendOptions options_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::atomic<std::uint64_t> completion_requests_{0};
  std::atomic<std::uint64_t> completion_cache_hits_{0};
  std::atomic<std::uint64_t> embedding_requests_{0};
  std::atomic<std::uint64_t> embedding_cache_hits_{0};
};

/// JSON body of a chat-completion request: {model, messages, temperature, ...extra}.
nlohmann::json chat_request_body(const std::string& model_id, const ChatRequest& request);

std::string utc_timestamp();

// ---- HTTP ----

struct HttpClientOptions {
  std::string chat_url;
  std::string embedding_url;
  std::string model_id;
  std::string encoder_id;
  std::string api_key;
  int max_retries = 5;
  int backoff_initial_ms = 500;
  int timeout_seconds = 120;
};

/// Hosted chat/embedding endpoints speaking the common JSON protocol. Retries
/// transport errors, 429 and 5xx with exponential backoff.
class HttpClient : public ModelClient {
 public:
  explicit HttpClient(HttpClientOptions options);

  std::string model_id() const override { return options_.model_id; }
  std::string encoder_id() const override { return options_.encoder_id; }
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  std::string post_with_retry(const std::string& url, const std::string& body);
  HttpClientOptions options_;
};

}  // namespace emoprompt
