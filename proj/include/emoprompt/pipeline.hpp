#pragma once

#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoprompt/affect.hpp"
#include "emoprompt/backend.hpp"
#include "emoprompt/corpus.hpp"
#include "emoprompt/mock_backend.hpp"
#include "emoprompt/policy.hpp"

namespace emoprompt {

/// Parsed run configuration. `raw` keeps the merged document (config file plus
/// overrides); the typed fields are read from it.
struct RunConfig {
  nlohmann::json raw = nlohmann::json::object();
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  std::string dataset;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> adapters_path;

  std::string backend_mode;  // "mock" or "http"
  nlohmann::json backend = nlohmann::json::object();

  PrefixSource prefix_source = PrefixSource::Generated;
  std::optional<std::filesystem::path> human_prefixes;
  Intensity intensity = Intensity::Moderate;
  bool template_fallback = false;

  InsertPosition cache_position = InsertPosition::Prepended;
  bool with_baseline = true;
  std::optional<std::size_t> cache_cap;
  std::optional<std::size_t> stop_after;

  TrainConfig train;

  std::vector<std::string> eval_conditions{"baseline", "static", "emotionrl"};
  std::optional<std::size_t> eval_cap;

  std::optional<std::filesystem::path> report_outcomes;
  std::vector<std::string> report_formats{"csv", "json", "plotdata"};

  /// Throws ConfigError on missing or invalid fields.
  static RunConfig from_json(nlohmann::json doc, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Applies "dotted.key=value" overrides; value uses config-file value syntax,
/// falling back to a bare string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct StageDirs {
  std::filesystem::path root;
  std::filesystem::path prefixes() const { return root / "prefixes"; }
  std::filesystem::path cache() const { return root / "cache"; }
  std::filesystem::path policy() const { return root / "policy"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path report() const { return root / "report"; }
};

struct StageResult {
  std::string stage;
  nlohmann::json summary = nlohmann::json::object();
  BackendStats stats;
};

/// Runs pipeline stages over one config. A client may be injected (tests);
/// otherwise one is built from the backend section.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::shared_ptr<ModelClient> client = nullptr);

  StageResult gen_prefixes();
  StageResult build_cache();
  StageResult train();
  StageResult eval();
  StageResult report();

  const RunConfig& config() const { return config_; }
  const StageDirs& dirs() const { return dirs_; }
  Backend& backend();
  /// Non-null when the backend is the mock.
  MockClient* mock() const { return mock_.get(); }

 private:
  std::vector<QuestionInstance> load_split(const std::optional<std::filesystem::path>& path, const char* key);
  const PrefixStore* prefix_store();
  std::optional<EmotionPrefix> prefix_for(const std::string& instance_id, Emotion emotion);
  nlohmann::json stage_manifest(const std::string& stage, const nlohmann::json& stage_config,
                                const std::vector<std::string>& upstream) const;

  RunConfig config_;
  StageDirs dirs_;
  AdapterMap adapters_;
  std::shared_ptr<ModelClient> client_;
  std::shared_ptr<MockClient> mock_;
  std::unique_ptr<Backend> backend_;
  std::optional<PrefixStore> store_;
  bool registered_ = false;
};

StageResult cmd_gen_prefixes(const RunConfig& config);
StageResult cmd_build_cache(const RunConfig& config);
StageResult cmd_train(const RunConfig& config);
StageResult cmd_eval(const RunConfig& config);
StageResult cmd_report(const RunConfig& config);

/// 0 success, 1 usage/config, 2 upstream artifact missing, 3 backend failure.
int exit_code_for(const std::exception& e);

/// Outcome of one generation request after parsing and validation.
struct GeneratedPrefix {
  std::string text;
  std::vector<std::string> violations;  // empty when valid
};
/// Extracts "prepended_sentence" from a model reply and validates it strictly.
/// Reasons: "invalid JSON", "missing key", or validator rule ids.
GeneratedPrefix parse_generated_prefix(const std::string& reply);

}  // namespace emoprompt
