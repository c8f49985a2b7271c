#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "emoprompt/affect.hpp"
#include "emoprompt/backend.hpp"
#include "emoprompt/corpus.hpp"

namespace emoprompt {

inline constexpr std::size_t kMockEmbeddingDim = 32;

/// Seeded pseudo-random unit vector for text. The generator is SHA-256 of
/// "embed|<seed>|<text>" feeding splitmix64, Box-Muller normals, then L2
/// normalisation. The empty string maps to the first basis vector.
std::vector<double> mock_embedding(std::uint64_t seed, std::string_view text, std::size_t dim = kMockEmbeddingDim);

/// SHA-256 of "skill|<seed>|<instance_id>|<condition>" (first 8 bytes), where
/// condition is the canonical emotion label or "BASELINE".
std::uint64_t mock_skill_hash(std::uint64_t seed, std::string_view instance_id, std::optional<Emotion> emotion);

/// mock_skill_hash mapped to [0, 1) with 53 bits of resolution.
double mock_skill_uniform(std::uint64_t seed, std::string_view instance_id, std::optional<Emotion> emotion);

/// Decides whether the mock model answers an (instance, emotion) pair correctly.
struct SkillRule {
  enum class Kind { UniformP, EmotionLinked, EmbeddingLinked };
  Kind kind = Kind::UniformP;

  // uniform_p: correct with probability p for every condition, or, when modulus
  // is set, exactly when mock_skill_hash % modulus == 0.
  double p = 0.5;
  std::optional<std::uint64_t> modulus;

  // emotion_linked: per-emotion accuracy in canonical order.
  std::array<double, kNumEmotions> emotion_accuracy{};

  // embedding_linked: the best emotion is the equal-width bin of one embedding
  // coordinate over [bin_low, bin_high] (values outside are clamped).
  std::size_t coordinate = 0;
  double bin_low = -0.3;
  double bin_high = 0.3;
  double p_best = 1.0;
  double p_other = 0.0;

  // Accuracy of the neutral (no-emotion) prompt for emotion_linked / embedding_linked.
  double baseline_accuracy = 0.5;

  /// {"rule": "uniform_p"|"emotion_linked"|"embedding_linked", ...params}. Unknown rule -> ConfigError.
  static SkillRule from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Bin index in [0, 6) of coordinate `coordinate` of the embedding.
std::size_t embedding_bin(const SkillRule& rule, const std::vector<double>& embedding);

/// How the mock answers prefix-generation requests.
enum class MockGeneration { Valid, Short, MissingKey, NotJson };
std::optional<MockGeneration> parse_mock_generation(std::string_view text);

struct MockOptions {
  std::uint64_t seed = 0;
  SkillRule skill;
  MockGeneration generation = MockGeneration::Valid;
  std::size_t dim = kMockEmbeddingDim;
  std::string model_id = "mock-llm";
  std::string encoder_id = "mock-encoder-d32";
};

/// Deterministic stand-in for the frozen LLM and encoder. Completions are a pure
/// function of (seed, rule, prompt) given the registered answer key: the mock
/// recognises the neutral question block of a registered instance and any
/// registered prefix sentence injected at one of the three positions.
/// Registration must finish before concurrent use.
class MockClient : public ModelClient {
 public:
  explicit MockClient(MockOptions options);

  void add_instances(std::span<const QuestionInstance> instances);
  void add_prefix(const std::string& text, Emotion emotion);
  void add_prefixes(const PrefixStore& store);

  std::string model_id() const override { return options_.model_id; }
  std::string encoder_id() const override { return options_.encoder_id; }
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

  /// Ground truth of the skill rule, independent of prompt parsing.
  bool answers_correctly(const QuestionInstance& instance, std::optional<Emotion> emotion) const;
  /// Emotion the embedding_linked rule rewards for this instance.
  Emotion best_emotion(const QuestionInstance& instance) const;

  /// Sentences the mock returns for generation requests (5-8 words each).
  static const std::vector<std::string>& sentence_bank(Emotion emotion);

  std::uint64_t completion_calls() const { return completion_calls_.load(); }
  std::uint64_t embedding_calls() const { return embedding_calls_.load(); }
  std::uint64_t generation_calls() const { return generation_calls_.load(); }
  const MockOptions& options() const { return options_; }

 private:
  struct Identified {
    const QuestionInstance* instance = nullptr;
    std::optional<Emotion> emotion;
    bool unknown_prefix = false;
  };

  Identified identify(const std::string& prompt) const;
  std::string answer(const QuestionInstance& instance, bool correct) const;
  std::string generate_prefix(const ChatRequest& request) const;

  MockOptions options_;
  std::vector<QuestionInstance> instances_;
  std::unordered_map<std::string, std::size_t> blocks_;
  std::unordered_map<std::string, Emotion> prefixes_;
  std::atomic<std::uint64_t> completion_calls_{0};
  std::atomic<std::uint64_t> embedding_calls_{0};
  std::atomic<std::uint64_t> generation_calls_{0};
};

/// Builds a mock client with the given seed and skill rule; the rule id must be
/// one of uniform_p, emotion_linked, embedding_linked.
std::shared_ptr<MockClient> configure_mock(std::uint64_t seed, const nlohmann::json& skill_rule,
                                           MockGeneration generation = MockGeneration::Valid);

}  // namespace emoprompt
