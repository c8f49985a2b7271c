#include "emoprompt/backend.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "emoprompt/digest.hpp"
#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

json decoding_json(const DecodingConfig& d) { return json{{"temperature", d.temperature}, {"extra", d.extra}}; }

json messages_json(const std::vector<ChatMessage>& messages) {
  json out = json::array();
  for (const auto& m : messages) out.push_back(json{{"role", m.role}, {"content", m.content}});
  return out;
}

std::optional<json> read_cache_entry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;  // torn or foreign file: refetch and overwrite
  }
}

struct SlotGuard {
  explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
  std::counting_semaphore<>& sem;
};

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json chat_request_body(const std::string& model_id, const ChatRequest& request) {
  json body{{"model", model_id}, {"messages", messages_json(request.messages)},
            {"temperature", request.decoding.temperature}};
  for (const auto& [k, v] : request.decoding.extra.items()) body[k] = v;
  return body;
}

Backend::Backend(std::shared_ptr<ModelClient> client, BackendOptions options)
    : client_(std::move(client)), options_(std::move(options)) {
  if (!client_) throw ConfigError("backend needs a model client");
  if (options_.max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
  slots_ = std::make_unique<std::counting_semaphore<>>(options_.max_concurrency);
}

std::string Backend::completion_key(const ChatRequest& request) const {
  return hash_json(json{{"model_id", client_->model_id()},
                        {"messages", messages_json(request.messages)},
                        {"decoding", decoding_json(request.decoding)}});
}

std::string Backend::embedding_key(const std::string& text) const {
  return hash_json(json{{"encoder_id", client_->encoder_id()}, {"input", text}});
}

std::filesystem::path Backend::entry_path(const std::string& kind, const std::string& key) const {
  return *options_.cache_dir / kind / key.substr(0, 2) / (key + ".json");
}

CompletionRecord Backend::complete(const ChatRequest& request) {
  ++completion_requests_;
  CompletionRecord rec;
  rec.prompt_hash = completion_key(request);
  rec.model_id = client_->model_id();

  if (options_.cache_dir) {
    if (auto cached = read_cache_entry(entry_path("completions", rec.prompt_hash))) {
      if (cached->contains("text") && (*cached)["text"].is_string()) {
        ++completion_cache_hits_;
        rec.text = (*cached)["text"].get<std::string>();
        rec.fetched_at = cached->value("fetched_at", "");
        rec.from_cache = true;
        return rec;
      }
    }
  }
  {
    SlotGuard guard(*slots_);
    rec.text = client_->complete(request);
  }
  rec.fetched_at = utc_timestamp();
  if (options_.cache_dir) {
    json entry{{"prompt_hash", rec.prompt_hash},
               {"model_id", rec.model_id},
               {"text", rec.text},
               {"fetched_at", rec.fetched_at},
               {"request", json{{"messages", messages_json(request.messages)},
                                {"decoding", decoding_json(request.decoding)}}}};
    write_file_atomic(entry_path("completions", rec.prompt_hash), entry.dump());
  }
  return rec;
}

CompletionRecord Backend::complete(const std::string& prompt_text, const DecodingConfig& decoding) {
  return complete(ChatRequest::single_user(prompt_text, decoding));
}

Embedding Backend::embed(const std::string& text) {
  ++embedding_requests_;
  Embedding emb;
  emb.encoder_id = client_->encoder_id();
  const std::string key = embedding_key(text);
  if (options_.cache_dir) {
    if (auto cached = read_cache_entry(entry_path("embeddings", key))) {
      if (cached->contains("values") && (*cached)["values"].is_array()) {
        ++embedding_cache_hits_;
        emb.values = (*cached)["values"].get<std::vector<double>>();
        return emb;
      }
    }
  }
  {
    SlotGuard guard(*slots_);
    emb.values = client_->embed(text);
  }
  for (double v : emb.values) {
    if (!std::isfinite(v)) throw ProtocolError("encoder returned a non-finite value", json(emb.values).dump());
  }
  if (options_.cache_dir) {
    json entry{{"encoder_id", emb.encoder_id}, {"values", emb.values}, {"fetched_at", utc_timestamp()}};
    write_file_atomic(entry_path("embeddings", key), entry.dump());
  }
  return emb;
}

BackendStats Backend::stats() const {
  return BackendStats{completion_requests_.load(), completion_cache_hits_.load(), embedding_requests_.load(),
                      embedding_cache_hits_.load()};
}

void Backend::reset_stats() {
  completion_requests_ = 0;
  completion_cache_hits_ = 0;
  embedding_requests_ = 0;
  embedding_cache_hits_ = 0;
}

}  // namespace emoprompt
