#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace emoprompt {

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

/// Sampling settings forwarded to the model. Temperature defaults to greedy decoding.
struct DecodingConfig {
  double temperature = 0.0;
  /// Other sampling parameters (top_p, max_tokens, ...) passed through verbatim.
  nlohmann::json extra = nlohmann::json::object();
  bool operator==(const DecodingConfig&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  DecodingConfig decoding;
  bool operator==(const ChatRequest&) const = default;

  static ChatRequest single_user(std::string content, DecodingConfig decoding = {}) {
    return ChatRequest{{ChatMessage{"user", std::move(content)}}, std::move(decoding)};
  }
};

}  // namespace emoprompt
