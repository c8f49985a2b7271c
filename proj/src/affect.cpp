#include "emoprompt/affect.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/text_util.hpp"

namespace emoprompt {

using nlohmann::json;

Emotion emotion_at(std::size_t index) {
  if (index >= kNumEmotions) throw DomainError("emotion index out of range: " + std::to_string(index));
  return kEmotions[index];
}

std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::Anger: return "ANGER";
    case Emotion::Disgust: return "DISGUST";
    case Emotion::Fear: return "FEAR";
    case Emotion::Happiness: return "HAPPINESS";
    case Emotion::Sadness: return "SADNESS";
    case Emotion::Surprise: return "SURPRISE";
  }
  return "?";
}

std::optional<Emotion> parse_emotion(std::string_view text) {
  const std::string t = to_upper(trim(text));
  if (t == "ANGER" || t == "ANGRY") return Emotion::Anger;
  if (t == "DISGUST" || t == "DISGUSTED") return Emotion::Disgust;
  if (t == "FEAR" || t == "AFRAID") return Emotion::Fear;
  if (t == "HAPPINESS" || t == "HAPPY") return Emotion::Happiness;
  if (t == "SADNESS" || t == "SAD") return Emotion::Sadness;
  if (t == "SURPRISE" || t == "SURPRISED") return Emotion::Surprise;
  return std::nullopt;
}

std::string_view adjective(Emotion e) {
  switch (e) {
    case Emotion::Anger: return "angry";
    case Emotion::Disgust: return "disgusted";
    case Emotion::Fear: return "afraid";
    case Emotion::Happiness: return "happy";
    case Emotion::Sadness: return "sad";
    case Emotion::Surprise: return "surprised";
  }
  return "?";
}

std::string_view to_string(Intensity i) {
  switch (i) {
    case Intensity::Slight: return "slight";
    case Intensity::Moderate: return "moderate";
    case Intensity::Extreme: return "extreme";
  }
  return "?";
}

std::optional<Intensity> parse_intensity(std::string_view text) {
  const std::string t = to_lower(trim(text));
  for (Intensity i : kIntensities) {
    if (t == to_string(i)) return i;
  }
  return std::nullopt;
}

std::string_view to_string(InsertPosition p) {
  switch (p) {
    case InsertPosition::Prepended: return "prepended";
    case InsertPosition::Mid: return "mid";
    case InsertPosition::Appended: return "appended";
  }
  return "?";
}

std::optional<InsertPosition> parse_position(std::string_view text) {
  const std::string t = to_lower(trim(text));
  for (InsertPosition p : kPositions) {
    if (t == to_string(p)) return p;
  }
  return std::nullopt;
}

std::string_view to_string(PrefixSource s) {
  switch (s) {
    case PrefixSource::Template: return "template";
    case PrefixSource::Generated: return "generated";
    case PrefixSource::Human: return "human";
  }
  return "?";
}

std::optional<PrefixSource> parse_source(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "template") return PrefixSource::Template;
  if (t == "generated") return PrefixSource::Generated;
  if (t == "human") return PrefixSource::Human;
  return std::nullopt;
}

EmotionPrefix template_prefix(Emotion emotion, Intensity intensity) {
  std::string text = "I am ";
  if (intensity == Intensity::Moderate) text += "very ";
  if (intensity == Intensity::Extreme) text += "extremely ";
  text += adjective(emotion);
  text += ".";
  return EmotionPrefix{std::move(text), emotion, PrefixSource::Template, intensity};
}

// ---- validation ------------------------------------------------------------

bool ValidationReport::violated(std::string_view rule) const {
  return std::find(violations.begin(), violations.end(), rule) != violations.end();
}

json ValidationReport::to_json() const {
  return json{{"pass", pass}, {"word_count", word_count}, {"violations", violations}};
}

ValidationReport validate_prefix(std::string_view raw, ValidationMode mode) {
  ValidationReport report;
  const std::string text = trim(raw);
  if (text.empty()) {
    report.violations.push_back("empty");
    return report;
  }
  if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos) {
    report.violations.push_back("line_break");
  }
  const std::size_t n = text.size();
  if (!is_terminal_punct(text[n - 1])) {
    report.violations.push_back("missing_terminal_punctuation");
  } else if (n >= 2 && is_terminal_punct(text[n - 2])) {
    report.violations.push_back("multiple_terminal_punctuation");
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (is_terminal_punct(text[i]) && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      report.violations.push_back("internal_sentence_break");
      break;
    }
  }
  report.word_count = split_words(text).size();
  const bool words_ok = mode == ValidationMode::Strict
                            ? report.word_count >= kMinStrictWords && report.word_count <= kMaxStrictWords
                            : report.word_count >= 1;
  if (!words_ok) report.violations.push_back("word_count");
  report.pass = report.violations.empty();
  return report;
}

ValidationMode validation_mode_for(PrefixSource source) {
  return source == PrefixSource::Generated ? ValidationMode::Strict : ValidationMode::Lenient;
}

// ---- prompt construction -----------------------------------------------------

namespace {

constexpr std::string_view kPassageLabel = "Passage: ";
constexpr std::string_view kQuestionLabel = "Question: ";

/// Offset of question_text inside the rendered block.
std::size_t question_offset(const QuestionInstance& instance) {
  std::size_t off = 0;
  if (instance.passage) off += kPassageLabel.size() + instance.passage->size() + 1;
  return off + kQuestionLabel.size();
}

/// Position just after the first sentence boundary (terminal punctuation plus
/// following whitespace) in text, or npos when there is none or nothing follows it.
std::size_t mid_insert_point(const std::string& text) {
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (is_terminal_punct(text[i]) && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      return j < text.size() ? j : std::string::npos;
    }
  }
  return std::string::npos;
}

}  // namespace

std::string render_question_block(const QuestionInstance& instance) {
  std::string out;
  if (instance.passage) {
    out += kPassageLabel;
    out += *instance.passage;
    out += '\n';
  }
  out += kQuestionLabel;
  out += instance.question_text;
  for (const auto& o : instance.options) {
    out += '\n';
    out += o.label;
    out += ": ";
    out += o.text;
  }
  return out;
}

std::string ConditionedPrompt::baseline_text() const {
  std::string out = full_text;
  out.erase(insert_offset, insert_length);
  return out;
}

ConditionedPrompt neutral_prompt(const QuestionInstance& instance) {
  ConditionedPrompt p;
  p.instance_id = instance.id;
  p.full_text = render_question_block(instance);
  return p;
}

ConditionedPrompt inject(const QuestionInstance& instance, const EmotionPrefix& prefix, InsertPosition position) {
  const ValidationReport check = validate_prefix(prefix.text, ValidationMode::Lenient);
  if (!check.pass) {
    throw PrefixRejected("prefix rejected (" + check.violations.front() + "): \"" + prefix.text + "\"");
  }
  const std::string sentence = trim(prefix.text);

  ConditionedPrompt p;
  p.instance_id = instance.id;
  p.emotion = prefix.emotion;
  p.position = position;
  p.full_text = render_question_block(instance);

  std::string inserted;
  std::size_t at = 0;
  const std::size_t q_off = question_offset(instance);
  const std::size_t mid = position == InsertPosition::Mid ? mid_insert_point(instance.question_text) : std::string::npos;

  if (position == InsertPosition::Appended) {
    at = q_off + instance.question_text.size();
    inserted = "\n" + sentence;
  } else if (position == InsertPosition::Mid && mid != std::string::npos) {
    at = q_off + mid;
    inserted = sentence + " ";
  } else {
    at = 0;
    inserted = sentence + "\n";
  }
  p.full_text.insert(at, inserted);
  p.insert_offset = at;
  p.insert_length = inserted.size();
  return p;
}

const std::string& generation_system_message() {
  static const std::string kSystem =
      "Generate one distinct emotional sentence tailored to appear before a given question.\n"
      "\n"
      "Core rules\n"
      "1. Fluency & Logic: Sentences must sound natural and human, without changing or answering the question "
      "itself.\n"
      "2. Integrity: Do not modify the question's numbers, scope, difficulty, or factual details.\n"
      "3. Perspective: The emotion reflects the person's feeling toward you (the assistant) solving the problem; "
      "they will not help.\n"
      "4. Emotion Accuracy: Each sentence must vividly and truthfully express the assigned emotion, even if rude or "
      "unfiltered.\n"
      "5. Grammar: Sentences must be syntactically correct. Typos and broken grammar are not allowed. Exclamation "
      "points and similar punctuation may be used to intensify emotion.\n"
      "\n"
      "Language intensity (raw emotion is allowed)\n"
      "- Emotionally raw, frustrated, or sarcastic language is allowed if it fits the emotion.\n"
      "- Rude words, slang, or mild expletives (e.g., \"damn,\" \"hell,\" \"you dumb ass\") are allowed if they "
      "enhance emotional realism.\n"
      "- Not allowed: targeted hate speech, slurs, or explicit sexual language.\n"
      "- Anger should feel heated, not hateful; disgust may sound grossed-out or exasperated; fear may sound "
      "panicked; happiness may sound ecstatic.\n"
      "\n"
      "Position rules\n"
      "- prepended_sentence appears before the question.\n"
      "\n"
      "Form\n"
      "- Exactly one complete sentence.\n"
      "- Length: 5--8 words.\n"
      "- Ends with a single punctuation mark (., ?, or !).\n"
      "- Use first-person or neutral phrasing.\n"
      "- Avoid moralizing or instructive words such as \"obviously,\" \"just,\" or \"clearly.\"";
  return kSystem;
}

ChatRequest build_generation_request(Emotion emotion, const QuestionInstance& instance,
                                     const DecodingConfig& decoding) {
  std::string user;
  user += "EMOTION_LABEL: ";
  user += to_string(emotion);
  user += "\n\nORIGINAL_QUESTION:\n";
  user += render_question_block(instance);
  user +=
      "\n\nCONTEXT SNAPSHOT:\n"
      "- Scenario type (business, personal, abstract, etc.)\n"
      "- Key elements (people, objects, activities, numbers)\n"
      "- Complexity level (simple logic, multi-step, conceptual)\n"
      "- Tone (formal, casual, domain-specific)\n"
      "\n"
      "INTENSITY & VARIETY:\n"
      "- Use emotionally charged, sometimes rude, expressive language that feels authentic to the emotion.\n"
      "- Use strong modifiers such as \"absolutely,\" \"completely,\" \"utterly,\" \"freaking,\" \"seriously,\" and "
      "\"literally.\"\n"
      "- Keep the sentence realistic for how a human might rant, panic, or gush in context.\n"
      "\n"
      "Return only valid JSON with key \"prepended_sentence\".";
  return ChatRequest{{ChatMessage{"system", generation_system_message()}, ChatMessage{"user", std::move(user)}},
                     decoding};
}

// ---- prefix stores ----------------------------------------------------------

json PrefixEntry::to_json() const {
  json j{{"instance_id", instance_id},
         {"emotion", std::string(emoprompt::to_string(emotion))},
         {"text", text},
         {"source", std::string(emoprompt::to_string(source))},
         {"validated", validated}};
  if (!violations.empty()) j["violations"] = violations;
  return j;
}

PrefixEntry PrefixEntry::from_json(const json& j) {
  PrefixEntry e;
  e.instance_id = j.at("instance_id").get<std::string>();
  const auto emotion = parse_emotion(j.at("emotion").get<std::string>());
  if (!emotion) throw ConfigError("unknown emotion in prefix store: " + j.at("emotion").dump());
  e.emotion = *emotion;
  e.text = j.at("text").get<std::string>();
  const auto source = parse_source(j.value("source", "generated"));
  if (!source) throw ConfigError("unknown prefix source: " + j.value("source", ""));
  e.source = *source;
  e.validated = j.value("validated", false);
  if (j.contains("violations")) e.violations = j.at("violations").get<std::vector<std::string>>();
  return e;
}

void PrefixStore::put(PrefixEntry entry) {
  Key key{entry.instance_id, entry.emotion};
  entries_.insert_or_assign(std::move(key), std::move(entry));
}

std::optional<EmotionPrefix> PrefixStore::find(const std::string& instance_id, Emotion emotion) const {
  auto it = entries_.find(Key{instance_id, emotion});
  if (it == entries_.end() || !it->second.validated) return std::nullopt;
  return it->second.prefix();
}

std::string PrefixStore::to_jsonl() const {
  std::string out;
  for (const auto& [_, entry] : entries_) {
    out += entry.to_json().dump();
    out += '\n';
  }
  return out;
}

void PrefixStore::save(const std::filesystem::path& path) const { write_file_atomic(path, to_jsonl()); }

PrefixStore PrefixStore::load(const std::filesystem::path& path) {
  PrefixStore store;
  for (const std::string& line : split_lines(read_text_file(path))) {
    if (trim(line).empty()) continue;
    try {
      store.put(PrefixEntry::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError("malformed prefix store line in " + path.string() + ": " + e.what());
    }
  }
  return store;
}

HumanPrefixLoad load_human_prefixes(const std::filesystem::path& path) {
  HumanPrefixLoad out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(read_text_file(path))) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++out.records;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception&) {
      ++out.malformed;
      out.warnings.push_back("line " + std::to_string(line_no) + ": not valid JSON");
      continue;
    }
    if (!rec.is_object() || !rec.contains("instance_id") || !rec.contains("emotion") || !rec.contains("text") ||
        !rec["emotion"].is_string() || !rec["text"].is_string()) {
      ++out.malformed;
      out.warnings.push_back("line " + std::to_string(line_no) + ": missing instance_id/emotion/text");
      continue;
    }
    const auto emotion = parse_emotion(rec["emotion"].get<std::string>());
    if (!emotion) {
      ++out.unknown_emotion;
      out.warnings.push_back("line " + std::to_string(line_no) + ": unknown emotion '" +
                             rec["emotion"].get<std::string>() + "'");
      continue;
    }
    PrefixEntry entry;
    entry.instance_id = rec["instance_id"].is_string() ? rec["instance_id"].get<std::string>()
                                                       : rec["instance_id"].dump();
    entry.emotion = *emotion;
    entry.text = rec["text"].get<std::string>();
    entry.source = PrefixSource::Human;
    const ValidationReport check = validate_prefix(entry.text, ValidationMode::Lenient);
    entry.validated = check.pass;
    entry.violations = check.violations;
    if (out.store.entries().count({entry.instance_id, entry.emotion})) ++out.duplicates;
    ids.insert(entry.instance_id);
    out.store.put(std::move(entry));
  }
  for (const std::string& id : ids) {
    for (Emotion e : kEmotions) {
      if (!out.store.entries().count({id, e})) out.missing.emplace_back(id, e);
    }
  }
  return out;
}

}  // namespace emoprompt
