#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoprompt/policy.hpp"
#include "emoprompt/reward_cache.hpp"
#include "emoprompt/scoring.hpp"

namespace emoprompt {

struct ConditionRow {
  std::string condition;  // emotion label, "baseline", "static-average", "emotionrl" or "oracle"
  std::string position;
  std::string intensity;
  std::string source;
  std::size_t n = 0;
  double accuracy = 0.0;
  double delta_pp = 0.0;

  bool is_baseline() const { return condition == "baseline"; }
  bool operator==(const ConditionRow&) const = default;
};

struct ConditionTable {
  std::string group;
  std::vector<ConditionRow> rows;

  const ConditionRow& baseline() const;
  /// First row matching the condition (and position, when given). Throws ReportError if absent.
  const ConditionRow& row(const std::string& condition, const std::string& position = "") const;
  bool operator==(const ConditionTable&) const = default;
};

/// One row per distinct (condition, position, intensity, source); rows keep
/// first-appearance order with baseline first. Throws ReportError without a baseline.
ConditionTable tabulate(std::span<const OutcomeRecord> outcomes, const std::string& group = "");

/// Splits outcomes by their group field and tabulates each group.
std::vector<ConditionTable> tabulate_groups(std::span<const OutcomeRecord> outcomes);

/// Baseline, six static emotions, static average, EmotionRL and oracle rows from
/// a reward cache. Throws ReportError when the cache has no baseline rewards.
ConditionTable compare_adaptive(const RewardDataset& cache, const PolicyParams& params);

enum class EmitFormat { Csv, Json, PlotData };
EmitFormat parse_emit_format(const std::string& text);

std::string to_csv(const ConditionTable& table);
nlohmann::json to_json(const ConditionTable& table);
ConditionTable table_from_json(const nlohmann::json& j);
/// Grouped-bar layout: [{group, condition, delta_pp}] for non-baseline rows.
nlohmann::json to_plotdata(std::span<const ConditionTable> tables);

std::string render(const ConditionTable& table, EmitFormat format);
/// Throws IoError when the path cannot be written.
void emit(const ConditionTable& table, EmitFormat format, const std::filesystem::path& path);

/// Fixed two-decimal rendering used in every display format.
std::string format_fixed2(double value);

}  // namespace emoprompt
