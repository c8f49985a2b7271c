#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoprompt/corpus.hpp"

namespace emoprompt {

struct Prediction {
  std::string raw_text;
  /// Canonical answer: bare option letter, "yes"/"no", or a canonical decimal.
  std::optional<std::string> extracted;
  TaskKind kind = TaskKind::numeric_exact();
};

/// Pulls the final answer out of a completion. The last candidate wins throughout.
Prediction extract_answer(const TaskKind& kind, const std::string& completion);

/// Canonical form of a gold label for the task kind, or nullopt if it is not admissible.
std::optional<std::string> canonical_gold(const TaskKind& kind, const std::string& gold);

/// 1 when the canonical prediction equals the canonical gold, else 0.
/// Throws ContractViolation when gold is absent.
int is_correct(const Prediction& prediction, const std::optional<std::string>& gold);

/// Mean of binary outcomes. Throws UndefinedMetric for an empty list.
double accuracy(std::span<const int> outcomes);

/// One scored completion, the unit every report is aggregated from.
struct OutcomeRecord {
  std::string instance_id;
  /// Emotion label, "baseline", or "emotionrl".
  std::string condition;
  /// Emotion actually applied (the selected one for emotionrl), empty for baseline.
  std::string emotion;
  std::string position;
  std::string intensity;
  std::string source;
  /// Benchmark / backbone grouping used by plot data.
  std::string group;
  std::optional<std::string> extracted;
  int correct = 0;

  nlohmann::json to_json() const;
  static OutcomeRecord from_json(const nlohmann::json& j);
  bool operator==(const OutcomeRecord&) const = default;
};

std::vector<OutcomeRecord> read_outcomes(const std::string& jsonl_text);
std::string write_outcomes(std::span<const OutcomeRecord> records);

/// Fraction of records whose completion yielded no extractable answer.
double extraction_failure_rate(std::span<const OutcomeRecord> records);

}  // namespace emoprompt
