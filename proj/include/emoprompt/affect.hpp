#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "emoprompt/chat.hpp"
#include "emoprompt/corpus.hpp"

namespace emoprompt {

// Declaration order is the canonical index order (alphabetical). Every reward,
// weight and logit vector in the project is indexed by it.
enum class Emotion { Anger = 0, Disgust, Fear, Happiness, Sadness, Surprise };

inline constexpr std::size_t kNumEmotions = 6;
inline constexpr std::array<Emotion, kNumEmotions> kEmotions{Emotion::Anger,     Emotion::Disgust, Emotion::Fear,
                                                             Emotion::Happiness, Emotion::Sadness, Emotion::Surprise};

constexpr std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }
Emotion emotion_at(std::size_t index);

/// Canonical upper-case label, e.g. "ANGER".
std::string_view to_string(Emotion e);
/// Accepts canonical labels and common spellings ("happy", "Sad"), case-insensitively.
std::optional<Emotion> parse_emotion(std::string_view text);
/// Adjective used by the intensity templates ("afraid" for Fear).
std::string_view adjective(Emotion e);

enum class Intensity { Slight, Moderate, Extreme };
inline constexpr std::array<Intensity, 3> kIntensities{Intensity::Slight, Intensity::Moderate, Intensity::Extreme};
std::string_view to_string(Intensity i);
std::optional<Intensity> parse_intensity(std::string_view text);

enum class InsertPosition { Prepended, Mid, Appended };
inline constexpr std::array<InsertPosition, 3> kPositions{InsertPosition::Prepended, InsertPosition::Mid,
                                                          InsertPosition::Appended};
std::string_view to_string(InsertPosition p);
std::optional<InsertPosition> parse_position(std::string_view text);

enum class PrefixSource { Template, Generated, Human };
std::string_view to_string(PrefixSource s);
std::optional<PrefixSource> parse_source(std::string_view text);

struct EmotionPrefix {
  std::string text;
  Emotion emotion = Emotion::Anger;
  PrefixSource source = PrefixSource::Template;
  std::optional<Intensity> intensity;
  bool operator==(const EmotionPrefix&) const = default;
};

/// "I am X." / "I am very X." / "I am extremely X."
EmotionPrefix template_prefix(Emotion emotion, Intensity intensity);

// ---- validation ----

enum class ValidationMode {
  /// Generated prefixes: full form rules including the 5-8 word bound.
  Strict,
  /// Template and human prefixes: form rules, at least one word.
  Lenient,
};

struct ValidationReport {
  bool pass = false;
  std::size_t word_count = 0;
  /// Rule ids in check order: empty, line_break, missing_terminal_punctuation,
  /// multiple_terminal_punctuation, internal_sentence_break, word_count.
  std::vector<std::string> violations;

  bool violated(std::string_view rule) const;
  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMinStrictWords = 5;
inline constexpr std::size_t kMaxStrictWords = 8;

ValidationReport validate_prefix(std::string_view text, ValidationMode mode);

ValidationMode validation_mode_for(PrefixSource source);

// ---- prompt construction ----

/// Neutral question block: optional "Passage: ..." line, "Question: ..." line,
/// then one "L: text" line per option.
std::string render_question_block(const QuestionInstance& instance);

struct ConditionedPrompt {
  std::string instance_id;
  std::optional<Emotion> emotion;
  InsertPosition position = InsertPosition::Prepended;
  std::string full_text;
  /// Byte range of the injected text (prefix plus its separator) inside full_text.
  std::size_t insert_offset = 0;
  std::size_t insert_length = 0;

  /// full_text with the injected range removed; equals the neutral rendering.
  std::string baseline_text() const;
};

ConditionedPrompt neutral_prompt(const QuestionInstance& instance);

/// Throws PrefixRejected naming the violated rule when the prefix fails lenient validation.
ConditionedPrompt inject(const QuestionInstance& instance, const EmotionPrefix& prefix, InsertPosition position);

/// System message of the prefix generation request.
const std::string& generation_system_message();

ChatRequest build_generation_request(Emotion emotion, const QuestionInstance& instance,
                                     const DecodingConfig& decoding = {});

// ---- prefix stores ----

struct PrefixEntry {
  std::string instance_id;
  Emotion emotion = Emotion::Anger;
  std::string text;
  PrefixSource source = PrefixSource::Generated;
  bool validated = false;
  std::vector<std::string> violations;

  nlohmann::json to_json() const;
  static PrefixEntry from_json(const nlohmann::json& j);
  EmotionPrefix prefix() const { return EmotionPrefix{text, emotion, source, std::nullopt}; }
};

/// Prefixes keyed by (instance id, emotion). Only validated entries are served by find().
class PrefixStore {
 public:
  using Key = std::pair<std::string, Emotion>;

  void put(PrefixEntry entry);
  std::optional<EmotionPrefix> find(const std::string& instance_id, Emotion emotion) const;
  const std::map<Key, PrefixEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::string to_jsonl() const;
  void save(const std::filesystem::path& path) const;
  static PrefixStore load(const std::filesystem::path& path);

 private:
  std::map<Key, PrefixEntry> entries_;
};

struct HumanPrefixLoad {
  PrefixStore store;
  std::size_t records = 0;
  std::size_t unknown_emotion = 0;
  std::size_t duplicates = 0;
  std::size_t malformed = 0;
  /// (instance, emotion) pairs absent for instance ids that appear in the file.
  std::vector<PrefixStore::Key> missing;
  std::vector<std::string> warnings;
};

HumanPrefixLoad load_human_prefixes(const std::filesystem::path& path);

}  // namespace emoprompt
