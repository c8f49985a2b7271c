#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoprompt/affect.hpp"
#include "emoprompt/backend.hpp"
#include "emoprompt/corpus.hpp"

namespace emoprompt {

using RewardVector = std::array<int, kNumEmotions>;

/// One training instance's state embedding and its grouped binary rewards.
struct RewardRecord {
  std::string instance_id;
  Embedding embedding;
  RewardVector rewards{};
  std::array<std::optional<std::string>, kNumEmotions> predictions{};
  std::optional<int> baseline_reward;
  std::optional<std::string> baseline_prediction;

  nlohmann::json to_json() const;
  static RewardRecord from_json(const nlohmann::json& j, const std::string& encoder_id);
  bool operator==(const RewardRecord&) const = default;
};

struct RewardDataset {
  std::vector<RewardRecord> records;
  std::string encoder_id;
  std::string backbone_id;
  std::string dataset;
  InsertPosition position = InsertPosition::Prepended;
  PrefixSource prefix_source = PrefixSource::Generated;

  std::size_t dim() const { return records.empty() ? 0 : records.front().embedding.dim(); }
  bool has_baseline() const;
  /// Throws ShapeError / ConfigError when the dataset invariants do not hold.
  void check_invariants() const;
  bool operator==(const RewardDataset&) const = default;
};

/// Where per-instance prefixes come from during the cache build.
struct PrefixPlan {
  PrefixSource source = PrefixSource::Generated;
  const PrefixStore* store = nullptr;
  /// Intensity used for template prefixes, and for the fallback when the store lacks an entry.
  Intensity template_intensity = Intensity::Moderate;
  bool template_fallback = false;

  /// nullopt when no prefix is available and fallback is disabled.
  std::optional<EmotionPrefix> lookup(const std::string& instance_id, Emotion emotion) const;
};

struct BuildOptions {
  InsertPosition position = InsertPosition::Prepended;
  bool with_baseline = true;
  /// Cap on the number of training instances considered (in input order).
  std::optional<std::size_t> instance_cap;
  /// Stop after this many new records in this run; used to checkpoint/interrupt.
  std::optional<std::size_t> stop_after;
  /// Extra provenance merged into the manifest's config hash.
  nlohmann::json config = nlohmann::json::object();
};

struct BuildReport {
  std::size_t considered = 0;
  std::size_t resumed = 0;
  std::size_t built = 0;
  std::size_t skipped_no_gold = 0;
  std::vector<std::string> errors;
  bool complete = false;
};

/// On-disk layout: <dir>/rewards.jsonl (append-only) and <dir>/manifest.json,
/// written once every eligible instance has a record.
struct CachePaths {
  std::filesystem::path dir;
  std::filesystem::path records() const { return dir / "rewards.jsonl"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path progress() const { return dir / "progress.json"; }
};

/// Queries the backend under all six emotions (plus the neutral prompt when
/// requested) for each gold-bearing instance and appends one record per instance.
/// Records already present in the directory are kept and not refetched.
BuildReport build_cache(std::span<const QuestionInstance> train, const PrefixPlan& prefixes, Backend& backend,
                        const CachePaths& paths, const BuildOptions& options = {});

RewardDataset load_cache(const CachePaths& paths);

/// Mean reward of one static emotion. Throws UndefinedMetric on an empty cache.
double static_accuracy(const RewardDataset& cache, Emotion emotion);
/// Mean over the six static emotions.
double static_average(const RewardDataset& cache);
/// Throws UndefinedMetric when the cache is empty or lacks baseline rewards.
double baseline_accuracy(const RewardDataset& cache);
/// Mean over instances of the best reward across emotions.
double oracle_accuracy(const RewardDataset& cache);

}  // namespace emoprompt
