#include <httplib.h>

#include <chrono>
#include <thread>

#include "emoprompt/backend.hpp"
#include "emoprompt/errors.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpClient::HttpClient(HttpClientOptions options) : options_(std::move(options)) {
  if (options_.max_retries < 1) throw ConfigError("max_retries must be >= 1");
}

std::string HttpClient::post_with_retry(const std::string& url, const std::string& body) {
  const SplitUrl target = split_url(url);
  httplib::Client client(target.base);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_retries; ++attempt) {
    auto res = client.Post(target.path, headers, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res && !retryable_status(res->status)) {
      throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + url, res->body);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < options_.max_retries && options_.backoff_initial_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_initial_ms) * (1LL << (attempt - 1)));
    }
  }
  throw RetryableError("request to " + url + " failed after " + std::to_string(options_.max_retries) +
                           " attempts: " + last_error,
                       options_.max_retries);
}

std::string HttpClient::complete(const ChatRequest& request) {
  const std::string raw = post_with_retry(options_.chat_url, chat_request_body(options_.model_id, request).dump());
  try {
    const json doc = json::parse(raw);
    const json& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw ProtocolError("completion content is not a string", raw);
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed completion response: ") + e.what(), raw);
  }
}

std::vector<double> HttpClient::embed(const std::string& text) {
  const json body{{"model", options_.encoder_id}, {"input", text}};
  const std::string raw = post_with_retry(options_.embedding_url, body.dump());
  try {
    const json doc = json::parse(raw);
    return doc.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed embedding response: ") + e.what(), raw);
  }
}

}  // namespace emoprompt
