#include "emoprompt/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/text_util.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::optional<std::string> last_number(const std::string& text) {
  static const std::regex kNumber(R"([-+]?\$?\d(?:[\d,]*\d)?(?:\.\d+)?)");
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber); it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  if (!last) return std::nullopt;
  return canonical_number(*last);
}

/// True when the text before `pos` reads like "answer is", "answer:", "option", ...
bool follows_answer_cue(const std::string& lower, std::size_t pos) {
  std::size_t end = pos;
  while (end > 0 && (lower[end - 1] == ' ' || lower[end - 1] == ':' || lower[end - 1] == '(')) --end;
  auto ends_with = [&](std::string_view cue) {
    return end >= cue.size() && lower.compare(end - cue.size(), cue.size(), cue) == 0 &&
           (end == cue.size() || !is_alpha(lower[end - cue.size() - 1]));
  };
  return ends_with("answer") || ends_with("answer is") || ends_with("option") || ends_with("choice");
}

std::optional<std::string> last_option_letter(const TaskKind& kind, const std::string& text) {
  const auto& labels = kind.labels();
  const std::string lower = to_lower(text);
  std::optional<std::string> marked;
  std::optional<std::string> bare;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_alpha(text[i])) continue;
    if (i > 0 && is_alnum(text[i - 1])) continue;
    if (i + 1 < n && is_alnum(text[i + 1])) continue;
    const std::string letter(1, static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    if (std::find(labels.begin(), labels.end(), letter) == labels.end()) continue;

    const char before = i > 0 ? text[i - 1] : '\0';
    const char after = i + 1 < n ? text[i + 1] : '\0';
    const bool parenthesised = before == '(' && after == ')';
    const bool labelled = after == ':' || after == ')';
    if (parenthesised || labelled || follows_answer_cue(lower, i)) {
      marked = letter;
    } else if (std::isupper(static_cast<unsigned char>(text[i]))) {
      bare = letter;
    }
  }
  return marked ? marked : bare;
}

std::optional<std::string> last_boolean(const std::string& text) {
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_alpha(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && is_alpha(text[i])) ++i;
    if (i == start) break;
    const std::string word = to_lower(text.substr(start, i - start));
    if (word == "yes" || word == "true") last = "yes";
    if (word == "no" || word == "false") last = "no";
  }
  return last;
}

}  // namespace

Prediction extract_answer(const TaskKind& kind, const std::string& completion) {
  Prediction p;
  p.raw_text = completion;
  p.kind = kind;
  switch (kind.variant()) {
    case TaskKind::Variant::NumericExact:
      p.extracted = last_number(completion);
      break;
    case TaskKind::Variant::MultipleChoice:
      p.extracted = last_option_letter(kind, completion);
      break;
    case TaskKind::Variant::Boolean:
      p.extracted = last_boolean(completion);
      break;
  }
  return p;
}

std::optional<std::string> canonical_gold(const TaskKind& kind, const std::string& gold) {
  std::optional<std::string> g;
  switch (kind.variant()) {
    case TaskKind::Variant::NumericExact:
      return canonical_number(gold);
    case TaskKind::Variant::MultipleChoice:
      g = to_upper(trim(gold));
      break;
    case TaskKind::Variant::Boolean: {
      const std::string t = to_lower(trim(gold));
      if (t == "yes" || t == "true") g = "yes";
      if (t == "no" || t == "false") g = "no";
      break;
    }
  }
  if (g && !kind.admits(*g)) return std::nullopt;
  return g;
}

int is_correct(const Prediction& prediction, const std::optional<std::string>& gold) {
  if (!gold) throw ContractViolation("is_correct called on an instance without a gold label");
  if (!prediction.extracted) return 0;
  const auto g = canonical_gold(prediction.kind, *gold);
  return g && *g == *prediction.extracted ? 1 : 0;
}

double accuracy(std::span<const int> outcomes) {
  if (outcomes.empty()) throw UndefinedMetric("accuracy of an empty outcome list is undefined");
  long long sum = 0;
  for (int o : outcomes) sum += o;
  return static_cast<double>(sum) / static_cast<double>(outcomes.size());
}

json OutcomeRecord::to_json() const {
  json j{{"instance_id", instance_id}, {"condition", condition}, {"emotion", emotion},
         {"position", position},       {"intensity", intensity}, {"source", source},
         {"group", group},             {"correct", correct}};
  j["extracted"] = extracted ? json(*extracted) : json(nullptr);
  return j;
}

OutcomeRecord OutcomeRecord::from_json(const json& j) {
  OutcomeRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.condition = j.at("condition").get<std::string>();
  r.emotion = j.value("emotion", "");
  r.position = j.value("position", "");
  r.intensity = j.value("intensity", "");
  r.source = j.value("source", "");
  r.group = j.value("group", "");
  if (j.contains("extracted") && j.at("extracted").is_string()) r.extracted = j.at("extracted").get<std::string>();
  const json& c = j.at("correct");
  r.correct = c.is_boolean() ? (c.get<bool>() ? 1 : 0) : c.get<int>();
  if (r.correct != 0 && r.correct != 1) throw IoError("outcome 'correct' must be 0 or 1");
  return r;
}

std::vector<OutcomeRecord> read_outcomes(const std::string& jsonl_text) {
  std::vector<OutcomeRecord> out;
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(jsonl_text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(OutcomeRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError("malformed outcome record on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string write_outcomes(std::span<const OutcomeRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

double extraction_failure_rate(std::span<const OutcomeRecord> records) {
  if (records.empty()) throw UndefinedMetric("extraction failure rate of an empty outcome list is undefined");
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.extracted ? 0 : 1;
  return static_cast<double>(failed) / static_cast<double>(records.size());
}

}  // namespace emoprompt
