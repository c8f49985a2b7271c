#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace emoprompt {

enum class Split { Train, Test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// How a benchmark item is graded.
class TaskKind {
 public:
  enum class Variant { NumericExact, MultipleChoice, Boolean };

  static TaskKind numeric_exact() { return TaskKind(Variant::NumericExact, {}); }
  static TaskKind boolean() { return TaskKind(Variant::Boolean, {"yes", "no"}); }
  /// Throws ConfigError unless there are at least two distinct labels.
  static TaskKind multiple_choice(std::vector<std::string> labels);

  Variant variant() const { return variant_; }
  /// Option labels for MultipleChoice, {"yes","no"} for Boolean, empty otherwise.
  const std::vector<std::string>& labels() const { return labels_; }
  bool admits(const std::string& canonical_label) const;

  bool operator==(const TaskKind&) const = default;

 private:
  TaskKind(Variant v, std::vector<std::string> labels) : variant_(v), labels_(std::move(labels)) {}
  Variant variant_;
  std::vector<std::string> labels_;
};

struct Option {
  std::string label;
  std::string text;
  bool operator==(const Option&) const = default;
};

enum class StateTextMode { PassageAndQuestion, QuestionOnly };

struct QuestionInstance {
  std::string id;
  std::string dataset;
  std::string question_text;
  std::optional<std::string> passage;
  std::vector<Option> options;
  std::optional<std::string> gold;
  Split split = Split::Test;
  TaskKind kind = TaskKind::numeric_exact();
  StateTextMode state_mode = StateTextMode::PassageAndQuestion;

  bool has_gold() const { return gold.has_value(); }
  bool operator==(const QuestionInstance&) const = default;
};

/// Text fed to the sentence encoder: "passage\nquestion" when a passage exists
/// (and the dataset embeds passages), otherwise the question alone.
std::string state_text(const QuestionInstance& instance);

/// Field names for one dataset's JSONL records.
struct DatasetAdapter {
  std::string name;
  TaskKind::Variant kind = TaskKind::Variant::NumericExact;
  std::optional<std::string> id_field;
  std::string question_field;
  std::optional<std::string> passage_field;
  /// One field holding the options (object, array, or {label:[], text:[]}) ...
  std::optional<std::string> options_field;
  /// ... or one field per option, labelled A, B, C, ...
  std::vector<std::string> option_fields;
  std::string answer_field;
  /// gsm8k | plain | boolean | index0 | index1
  std::string answer_format = "plain";
  std::optional<std::string> split_field;
  Split default_split = Split::Test;
  StateTextMode state_mode = StateTextMode::PassageAndQuestion;
};

class AdapterMap {
 public:
  static AdapterMap builtin();
  static AdapterMap from_json(const nlohmann::json& doc);
  static AdapterMap load(const std::filesystem::path& path);

  /// Throws ConfigError for an unknown dataset name.
  const DatasetAdapter& at(const std::string& dataset) const;
  int version() const { return version_; }
  std::vector<std::string> names() const;

 private:
  int version_ = 0;
  std::map<std::string, DatasetAdapter> adapters_;
};

struct LoadReport {
  std::size_t read = 0;
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::size_t missing_gold = 0;
  nlohmann::json to_json() const;
};

struct LoadResult {
  std::vector<QuestionInstance> instances;
  LoadReport report;
};

LoadResult load_dataset(const std::filesystem::path& path, const std::string& dataset,
                        const AdapterMap& adapters = AdapterMap::builtin());

/// Inverse of the adapter: renders an instance as one record in its dataset's JSONL schema.
nlohmann::json to_adapter_record(const QuestionInstance& instance, const DatasetAdapter& adapter);

}  // namespace emoprompt
