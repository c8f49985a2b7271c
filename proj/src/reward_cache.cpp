#include "emoprompt/reward_cache.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <set>

#include "emoprompt/digest.hpp"
#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/scoring.hpp"
#include "emoprompt/text_util.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> optional_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return std::nullopt;
}

}  // namespace

json RewardRecord::to_json() const {
  json preds = json::array();
  for (const auto& p : predictions) preds.push_back(optional_json(p));
  json j{{"instance_id", instance_id}, {"embedding", embedding.values}, {"rewards", rewards}, {"predictions", preds}};
  j["baseline_reward"] = baseline_reward ? json(*baseline_reward) : json(nullptr);
  j["baseline_prediction"] = optional_json(baseline_prediction);
  return j;
}

RewardRecord RewardRecord::from_json(const json& j, const std::string& encoder_id) {
  RewardRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.embedding.values = j.at("embedding").get<std::vector<double>>();
  r.embedding.encoder_id = encoder_id;
  const json& rewards = j.at("rewards");
  if (!rewards.is_array() || rewards.size() != kNumEmotions) {
    throw ShapeError("reward record '" + r.instance_id + "' needs exactly 6 rewards");
  }
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    const int v = rewards[k].get<int>();
    if (v != 0 && v != 1) throw DomainError("reward record '" + r.instance_id + "' has a non-binary reward");
    r.rewards[k] = v;
  }
  if (j.contains("predictions")) {
    const json& preds = j.at("predictions");
    for (std::size_t k = 0; k < kNumEmotions && k < preds.size(); ++k) r.predictions[k] = optional_string(preds[k]);
  }
  if (j.contains("baseline_reward") && j.at("baseline_reward").is_number_integer()) {
    r.baseline_reward = j.at("baseline_reward").get<int>();
  }
  if (j.contains("baseline_prediction")) r.baseline_prediction = optional_string(j.at("baseline_prediction"));
  return r;
}

bool RewardDataset::has_baseline() const {
  return !records.empty() &&
         std::all_of(records.begin(), records.end(), [](const RewardRecord& r) { return r.baseline_reward.has_value(); });
}

void RewardDataset::check_invariants() const {
  std::set<std::string> ids;
  const std::size_t d = dim();
  for (const auto& r : records) {
    if (!ids.insert(r.instance_id).second) throw ConfigError("duplicate instance id in reward cache: " + r.instance_id);
    if (r.embedding.dim() != d) throw ShapeError("embedding dimension differs across the reward cache");
    if (r.embedding.encoder_id != encoder_id) throw ConfigError("mixed encoder ids in reward cache");
  }
}

std::optional<EmotionPrefix> PrefixPlan::lookup(const std::string& instance_id, Emotion emotion) const {
  if (source == PrefixSource::Template) return template_prefix(emotion, template_intensity);
  if (store) {
    if (auto p = store->find(instance_id, emotion)) return p;
  }
  if (template_fallback) return template_prefix(emotion, template_intensity);
  return std::nullopt;
}

namespace {

struct Work {
  const QuestionInstance* instance;
  std::array<EmotionPrefix, kNumEmotions> prefixes;
};

RewardRecord build_record(const Work& work, Backend& backend, const BuildOptions& options,
                          const DecodingConfig& decoding) {
  const QuestionInstance& inst = *work.instance;
  RewardRecord rec;
  rec.instance_id = inst.id;
  rec.embedding = backend.embed(state_text(inst));
  for (Emotion e : kEmotions) {
    const ConditionedPrompt prompt = inject(inst, work.prefixes[index_of(e)], options.position);
    const CompletionRecord completion = backend.complete(prompt.full_text, decoding);
    const Prediction pred = extract_answer(inst.kind, completion.text);
    rec.rewards[index_of(e)] = is_correct(pred, inst.gold);
    rec.predictions[index_of(e)] = pred.extracted;
  }
  if (options.with_baseline) {
    const CompletionRecord completion = backend.complete(neutral_prompt(inst).full_text, decoding);
    const Prediction pred = extract_answer(inst.kind, completion.text);
    rec.baseline_reward = is_correct(pred, inst.gold);
    rec.baseline_prediction = pred.extracted;
  }
  return rec;
}

/// Reads persisted records, dropping a torn final line left by an interrupted write.
std::vector<json> read_existing(const std::filesystem::path& path) {
  std::vector<json> out;
  if (!std::filesystem::exists(path)) return out;
  std::string text = read_text_file(path);
  if (!text.empty() && text.back() != '\n') {
    const auto last_nl = text.rfind('\n');
    text.resize(last_nl == std::string::npos ? 0 : last_nl + 1);
    write_file_atomic(path, text);
  }
  for (const std::string& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    out.push_back(json::parse(line));
  }
  return out;
}

/// Embedding dimension of the first persisted record (0 when there is none).
std::size_t persisted_dim(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) return json::parse(line).at("embedding").size();
  }
  return 0;
}

}  // namespace

BuildReport build_cache(std::span<const QuestionInstance> train, const PrefixPlan& prefixes, Backend& backend,
                        const CachePaths& paths, const BuildOptions& options) {
  BuildReport report;
  std::vector<const QuestionInstance*> eligible;
  for (const auto& inst : train) {
    if (options.instance_cap && eligible.size() >= *options.instance_cap) break;
    if (!inst.has_gold()) {
      ++report.skipped_no_gold;
      continue;
    }
    eligible.push_back(&inst);
  }
  report.considered = eligible.size();

  const std::string dataset = train.empty() ? std::string() : train.front().dataset;
  const json build_config{{"backbone_id", backend.model_id()},
                          {"encoder_id", backend.encoder_id()},
                          {"dataset", dataset},
                          {"position", std::string(to_string(options.position))},
                          {"prefix_source", std::string(to_string(prefixes.source))},
                          {"template_intensity", std::string(to_string(prefixes.template_intensity))},
                          {"template_fallback", prefixes.template_fallback},
                          {"with_baseline", options.with_baseline},
                          {"instance_cap", options.instance_cap ? json(*options.instance_cap) : json(nullptr)},
                          {"config", options.config}};
  const std::string config_hash = hash_json(build_config);

  std::filesystem::create_directories(paths.dir);
  if (std::filesystem::exists(paths.progress())) {
    const json progress = read_json_file(paths.progress());
    if (progress.value("config_hash", "") != config_hash) {
      throw ConfigError("cache directory " + paths.dir.string() + " holds a build with a different configuration");
    }
  } else {
    write_json_file(paths.progress(), json{{"config_hash", config_hash}, {"config", build_config}});
  }

  std::set<std::string> done;
  for (const json& j : read_existing(paths.records())) done.insert(j.at("instance_id").get<std::string>());

  std::vector<Work> todo;
  for (const QuestionInstance* inst : eligible) {
    if (done.count(inst->id)) {
      ++report.resumed;
      continue;
    }
    Work w{inst, {}};
    bool ok = true;
    for (Emotion e : kEmotions) {
      auto p = prefixes.lookup(inst->id, e);
      if (!p) {
        report.errors.push_back(inst->id + ": no " + std::string(to_string(e)) + " prefix and template fallback is off");
        ok = false;
        break;
      }
      w.prefixes[index_of(e)] = *p;
    }
    if (ok) todo.push_back(std::move(w));
  }

  std::ofstream out(paths.records(), std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + paths.records().string());

  const DecodingConfig decoding{};
  const std::size_t window = static_cast<std::size_t>(backend.max_concurrency());
  const std::size_t limit = options.stop_after ? std::min(*options.stop_after, todo.size()) : todo.size();
  for (std::size_t start = 0; start < limit; start += window) {
    const std::size_t end = std::min(limit, start + window);
    std::vector<std::future<RewardRecord>> futures;
    for (std::size_t i = start; i < end; ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] { return build_record(todo[i], backend, options, decoding); }));
    }
    // Emit in input order; on failure keep everything before the failed item as the checkpoint.
    std::exception_ptr failure;
    for (auto& f : futures) {
      try {
        RewardRecord rec = f.get();
        if (failure) continue;
        out << rec.to_json().dump() << '\n';
        out.flush();
        ++report.built;
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  report.complete = report.resumed + report.built == eligible.size() - report.errors.size() && limit == todo.size();
  if (report.complete) {
    const json manifest{{"backbone_id", backend.model_id()},
                        {"encoder_id", backend.encoder_id()},
                        {"dataset", dataset},
                        {"position", std::string(to_string(options.position))},
                        {"prefix_source", std::string(to_string(prefixes.source))},
                        {"K", kNumEmotions},
                        {"emotion_order", [] {
                           json order = json::array();
                           for (Emotion e : kEmotions) order.push_back(std::string(to_string(e)));
                           return order;
                         }()},
                        {"counts",
                         {{"eligible", eligible.size()},
                          {"records", report.resumed + report.built},
                          {"skipped_no_gold", report.skipped_no_gold},
                          {"errors", report.errors.size()}}},
                        {"instance_cap", options.instance_cap ? json(*options.instance_cap) : json(nullptr)},
                        {"with_baseline", options.with_baseline},
                        {"config_hash", config_hash}};
    out.close();
    json with_dim = manifest;
    with_dim["d"] = persisted_dim(paths.records());
    write_json_file(paths.manifest(), with_dim);
  }
  return report;
}

RewardDataset load_cache(const CachePaths& paths) {
  if (!std::filesystem::exists(paths.manifest())) {
    throw UpstreamMissing("reward cache in " + paths.dir.string() + " is missing or incomplete", "build-cache");
  }
  const json manifest = read_json_file(paths.manifest());
  RewardDataset ds;
  ds.encoder_id = manifest.at("encoder_id").get<std::string>();
  ds.backbone_id = manifest.at("backbone_id").get<std::string>();
  ds.dataset = manifest.value("dataset", "");
  const auto pos = parse_position(manifest.value("position", "prepended"));
  const auto src = parse_source(manifest.value("prefix_source", "generated"));
  if (!pos || !src) throw ConfigError("reward cache manifest has an unknown position or prefix source");
  ds.position = *pos;
  ds.prefix_source = *src;
  for (const std::string& line : split_lines(read_text_file(paths.records()))) {
    if (trim(line).empty()) continue;
    ds.records.push_back(RewardRecord::from_json(json::parse(line), ds.encoder_id));
  }
  ds.check_invariants();
  return ds;
}

double static_accuracy(const RewardDataset& cache, Emotion emotion) {
  std::vector<int> outcomes;
  outcomes.reserve(cache.records.size());
  for (const auto& r : cache.records) outcomes.push_back(r.rewards[index_of(emotion)]);
  return accuracy(outcomes);
}

double static_average(const RewardDataset& cache) {
  double sum = 0.0;
  for (Emotion e : kEmotions) sum += static_accuracy(cache, e);
  return sum / static_cast<double>(kNumEmotions);
}

double baseline_accuracy(const RewardDataset& cache) {
  if (!cache.has_baseline()) throw UndefinedMetric("reward cache has no baseline rewards");
  std::vector<int> outcomes;
  for (const auto& r : cache.records) outcomes.push_back(*r.baseline_reward);
  return accuracy(outcomes);
}

double oracle_accuracy(const RewardDataset& cache) {
  std::vector<int> outcomes;
  outcomes.reserve(cache.records.size());
  for (const auto& r : cache.records) outcomes.push_back(*std::max_element(r.rewards.begin(), r.rewards.end()));
  return accuracy(outcomes);
}

}  // namespace emoprompt
