#include "emoprompt/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <set>

#include "emoprompt/digest.hpp"
#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/report.hpp"
#include "emoprompt/reward_cache.hpp"
#include "emoprompt/scoring.hpp"
#include "emoprompt/text_util.hpp"
#include "emoprompt/toml_config.hpp"

namespace emoprompt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Runs fn(i) for i in [0, n) with at most `concurrency` calls in flight and
/// returns the results in index order.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, int concurrency, F fn) {
  std::vector<T> out(n);
  const std::size_t window = static_cast<std::size_t>(std::max(1, concurrency));
  for (std::size_t start = 0; start < n; start += window) {
    const std::size_t end = std::min(n, start + window);
    std::vector<std::future<T>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = start; i < end; ++i) out[i] = futures[i - start].get();
  }
  return out;
}

const json& section(const json& doc, const char* name) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  const json& s = doc.at(name);
  if (!s.is_object()) throw ConfigError(std::string("config section [") + name + "] must be a table");
  return s;
}

template <class T>
T get_or(const json& s, const char* key, T fallback, const char* where) {
  if (!s.contains(key)) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key ") + where + "." + key + " has the wrong type");
  }
}

std::optional<std::string> get_string(const json& s, const char* key, const char* where) {
  if (!s.contains(key)) return std::nullopt;
  return get_or<std::string>(s, key, "", where);
}

std::optional<std::size_t> get_count(const json& s, const char* key, const char* where) {
  if (!s.contains(key)) return std::nullopt;
  const auto v = get_or<long long>(s, key, 0, where);
  if (v < 0) throw ConfigError(std::string("config key ") + where + "." + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

std::string file_digest(const std::optional<fs::path>& path) {
  if (!path || !fs::exists(*path)) return "";
  return sha256_hex(read_text_file(*path));
}

std::string reasons_text(const std::vector<std::string>& reasons) {
  std::string out;
  for (const auto& r : reasons) out += (out.empty() ? "" : ", ") + r;
  return out;
}

struct EvalCondition {
  std::string condition;
  std::optional<Emotion> emotion;
  InsertPosition position = InsertPosition::Prepended;
  std::optional<Intensity> intensity;
  std::optional<PrefixSource> source;
  bool adaptive = false;
};

std::vector<EvalCondition> expand_conditions(const RunConfig& cfg) {
  std::vector<EvalCondition> out;
  std::set<std::string> seen;
  auto add = [&](EvalCondition c) {
    const std::string key = c.condition + "|" + std::string(to_string(c.position)) + "|" +
                            (c.intensity ? std::string(to_string(*c.intensity)) : "") + "|" +
                            (c.source ? std::string(to_string(*c.source)) : "") + "|" + (c.adaptive ? "rl" : "");
    if (seen.insert(key).second) out.push_back(std::move(c));
  };
  auto fixed = [&](Emotion e, InsertPosition p) {
    EvalCondition c{std::string(to_string(e)), e, p, std::nullopt, cfg.prefix_source, false};
    if (cfg.prefix_source == PrefixSource::Template) c.intensity = cfg.intensity;
    return c;
  };
  for (const std::string& set : cfg.eval_conditions) {
    if (set == "baseline") {
      add(EvalCondition{"baseline", std::nullopt, InsertPosition::Prepended, std::nullopt, std::nullopt, false});
    } else if (set == "static") {
      for (Emotion e : kEmotions) add(fixed(e, InsertPosition::Prepended));
    } else if (set == "intensity") {
      for (Emotion e : kEmotions) {
        for (Intensity i : kIntensities) {
          add(EvalCondition{std::string(to_string(e)), e, InsertPosition::Prepended, i, PrefixSource::Template, false});
        }
      }
    } else if (set == "positions") {
      for (InsertPosition p : kPositions) {
        for (Emotion e : kEmotions) add(fixed(e, p));
      }
    } else if (set == "emotionrl") {
      add(EvalCondition{"emotionrl", std::nullopt, InsertPosition::Prepended, std::nullopt, cfg.prefix_source, true});
    } else {
      throw ConfigError("unknown eval condition set '" + set +
                        "' (expected baseline, static, intensity, positions or emotionrl)");
    }
  }
  return out;
}

}  // namespace

// ---- configuration -----------------------------------------------------------

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  json parsed;
  try {
    parsed = parse_toml("v = " + value).at("v");
  } catch (const ConfigError&) {
    parsed = value;
  }
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*cur)[part] = parsed;
      return;
    }
    if (!cur->contains(part) || !(*cur)[part].is_object()) (*cur)[part] = json::object();
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

fs::path RunConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

RunConfig RunConfig::from_json(json doc, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  if (!doc.is_object()) throw ConfigError("config must be a table");
  const auto out = get_string(doc, "output_dir", "");
  if (!out || out->empty()) throw ConfigError("config is missing output_dir");
  c.output_dir = c.resolve(*out);
  c.seed = get_or<std::uint64_t>(doc, "seed", 0, "");

  const json& ds = section(doc, "dataset");
  c.dataset = get_or<std::string>(ds, "name", "", "dataset");
  if (c.dataset.empty()) throw ConfigError("config is missing dataset.name");
  if (auto p = get_string(ds, "train", "dataset")) c.train_path = c.resolve(*p);
  if (auto p = get_string(ds, "test", "dataset")) c.test_path = c.resolve(*p);
  if (auto p = get_string(ds, "adapters", "dataset")) c.adapters_path = c.resolve(*p);

  const json& be = section(doc, "backend");
  c.backend = be;
  c.backend_mode = get_or<std::string>(be, "mode", "", "backend");
  if (c.backend_mode != "mock" && c.backend_mode != "http") {
    throw ConfigError("backend.mode must be \"mock\" or \"http\"");
  }
  const std::string other = c.backend_mode == "mock" ? "http" : "mock";
  if (be.contains(other)) {
    throw ConfigError("backend.mode is \"" + c.backend_mode + "\" but a [backend." + other +
                      "] section is also present; exactly one backend mode may be configured");
  }

  const json& px = section(doc, "prefixes");
  const std::string source = get_or<std::string>(px, "source", "generated", "prefixes");
  const auto src = parse_source(source);
  if (!src) throw ConfigError("prefixes.source must be template, generated or human");
  c.prefix_source = *src;
  if (auto p = get_string(px, "human_path", "prefixes")) c.human_prefixes = c.resolve(*p);
  if (c.prefix_source == PrefixSource::Human && !c.human_prefixes) {
    throw ConfigError("prefixes.source = \"human\" requires prefixes.human_path");
  }
  const auto intensity = parse_intensity(get_or<std::string>(px, "intensity", "moderate", "prefixes"));
  if (!intensity) throw ConfigError("prefixes.intensity must be slight, moderate or extreme");
  c.intensity = *intensity;
  c.template_fallback = get_or<bool>(px, "template_fallback", false, "prefixes");

  const json& cache = section(doc, "cache");
  const auto pos = parse_position(get_or<std::string>(cache, "position", "prepended", "cache"));
  if (!pos) throw ConfigError("cache.position must be prepended, mid or appended");
  c.cache_position = *pos;
  c.with_baseline = get_or<bool>(cache, "with_baseline", true, "cache");
  c.cache_cap = get_count(cache, "instance_cap", "cache");
  c.stop_after = get_count(cache, "stop_after", "cache");

  json train = section(doc, "train");
  if (!train.contains("seed")) train["seed"] = c.seed;
  try {
    c.train = TrainConfig::from_json(train);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config section [train]: ") + e.what());
  }
  c.train.validate();

  const json& ev = section(doc, "eval");
  if (ev.contains("conditions")) c.eval_conditions = get_or<std::vector<std::string>>(ev, "conditions", {}, "eval");
  c.eval_cap = get_count(ev, "instance_cap", "eval");

  const json& rp = section(doc, "report");
  if (auto p = get_string(rp, "outcomes", "report")) c.report_outcomes = c.resolve(*p);
  if (rp.contains("formats")) c.report_formats = get_or<std::vector<std::string>>(rp, "formats", {}, "report");
  for (const auto& f : c.report_formats) parse_emit_format(f);

  c.raw = std::move(doc);
  (void)expand_conditions(c);
  return c;
}

RunConfig RunConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc = load_toml(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(std::move(doc), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// ---- generation parsing ---------------------------------------------------------

GeneratedPrefix parse_generated_prefix(const std::string& reply) {
  std::string body = trim(reply);
  // Tolerate a fenced code block around the JSON object.
  if (body.rfind("```", 0) == 0) {
    const auto first_nl = body.find('\n');
    const auto last_fence = body.rfind("```");
    if (first_nl != std::string::npos && last_fence > first_nl) body = trim(body.substr(first_nl + 1, last_fence - first_nl - 1));
  }
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::exception&) {
    return GeneratedPrefix{"", {"invalid JSON"}};
  }
  if (!parsed.is_object() || !parsed.contains("prepended_sentence") || !parsed.at("prepended_sentence").is_string()) {
    return GeneratedPrefix{"", {"missing key"}};
  }
  GeneratedPrefix out;
  out.text = trim(parsed.at("prepended_sentence").get<std::string>());
  out.violations = validate_prefix(out.text, ValidationMode::Strict).violations;
  return out;
}

// ---- pipeline -----------------------------------------------------------------

Pipeline::Pipeline(RunConfig config, std::shared_ptr<ModelClient> client)
    : config_(std::move(config)), dirs_{config_.output_dir}, client_(std::move(client)) {
  adapters_ = config_.adapters_path ? AdapterMap::load(*config_.adapters_path) : AdapterMap::builtin();
  adapters_.at(config_.dataset);
  mock_ = std::dynamic_pointer_cast<MockClient>(client_);
}

Backend& Pipeline::backend() {
  if (backend_) return *backend_;
  const json& be = config_.backend;
  if (!client_) {
    if (config_.backend_mode == "mock") {
      const json& m = section(be, "mock");
      MockOptions options;
      options.seed = get_or<std::uint64_t>(m, "seed", config_.seed, "backend.mock");
      options.skill = SkillRule::from_json(m.contains("skill") ? m.at("skill") : json{{"rule", "uniform_p"}});
      const auto gen = parse_mock_generation(get_or<std::string>(m, "generation", "valid", "backend.mock"));
      if (!gen) throw ConfigError("backend.mock.generation must be valid, short, missing_key or not_json");
      options.generation = *gen;
      mock_ = std::make_shared<MockClient>(std::move(options));
      client_ = mock_;
    } else {
      const json& h = section(be, "http");
      HttpClientOptions options;
      options.chat_url = get_or<std::string>(h, "chat_url", "", "backend.http");
      options.embedding_url = get_or<std::string>(h, "embedding_url", "", "backend.http");
      options.model_id = get_or<std::string>(h, "model_id", "", "backend.http");
      options.encoder_id = get_or<std::string>(h, "encoder_id", "", "backend.http");
      options.max_retries = get_or<int>(h, "max_retries", options.max_retries, "backend.http");
      options.backoff_initial_ms = get_or<int>(h, "backoff_initial_ms", options.backoff_initial_ms, "backend.http");
      options.timeout_seconds = get_or<int>(h, "timeout_seconds", options.timeout_seconds, "backend.http");
      if (options.chat_url.empty() || options.model_id.empty()) {
        throw ConfigError("backend.http needs chat_url and model_id");
      }
      const std::string env = get_or<std::string>(h, "api_key_env", "EMOPROMPT_API_KEY", "backend.http");
      const char* key = std::getenv(env.c_str());
      if (key == nullptr || *key == '\0') throw ConfigError("environment variable " + env + " is not set");
      options.api_key = key;
      client_ = std::make_shared<HttpClient>(std::move(options));
    }
  }
  BackendOptions options;
  if (auto dir = get_string(be, "cache_dir", "backend")) options.cache_dir = config_.resolve(*dir);
  options.max_concurrency = get_or<int>(be, "max_concurrency", 4, "backend");
  if (options.max_concurrency < 1) throw ConfigError("backend.max_concurrency must be >= 1");
  backend_ = std::make_unique<Backend>(client_, std::move(options));

  if (mock_ && !registered_) {
    // The mock answers by recognising registered questions and prefixes.
    for (const auto* path : {&config_.train_path, &config_.test_path}) {
      if (*path && fs::exists(**path)) {
        const auto loaded = load_dataset(**path, config_.dataset, adapters_);
        mock_->add_instances(loaded.instances);
      }
    }
    registered_ = true;
  }
  if (mock_ && store_) mock_->add_prefixes(*store_);
  return *backend_;
}

std::vector<QuestionInstance> Pipeline::load_split(const std::optional<fs::path>& path, const char* key) {
  if (!path) throw ConfigError(std::string("config is missing dataset.") + key);
  if (!fs::exists(*path)) throw ConfigError("dataset file " + path->string() + " not found");
  return load_dataset(*path, config_.dataset, adapters_).instances;
}

const PrefixStore* Pipeline::prefix_store() {
  if (config_.prefix_source == PrefixSource::Template) return nullptr;
  if (!store_) {
    const fs::path path = dirs_.prefixes() / "prefixes.jsonl";
    if (!fs::exists(path)) {
      throw UpstreamMissing("prefix store " + path.string() + " not found; run gen-prefixes first", "gen-prefixes");
    }
    store_ = PrefixStore::load(path);
    if (mock_) mock_->add_prefixes(*store_);
  }
  return &*store_;
}

std::optional<EmotionPrefix> Pipeline::prefix_for(const std::string& instance_id, Emotion emotion) {
  PrefixPlan plan{config_.prefix_source, prefix_store(), config_.intensity, config_.template_fallback};
  return plan.lookup(instance_id, emotion);
}

json Pipeline::stage_manifest(const std::string& stage, const json& stage_config,
                              const std::vector<std::string>& upstream) const {
  json m{{"stage", stage}, {"config", stage_config}, {"config_hash", hash_json(stage_config)}};
  json up = json::object();
  for (const auto& name : upstream) {
    fs::path p;
    if (name == "gen-prefixes") p = dirs_.prefixes() / "manifest.json";
    if (name == "build-cache") p = dirs_.cache() / "manifest.json";
    if (name == "train") p = dirs_.policy() / "manifest.json";
    if (name == "eval") p = dirs_.eval() / "manifest.json";
    if (!p.empty() && fs::exists(p)) up[name] = read_json_file(p).value("config_hash", "");
  }
  m["upstream"] = up;
  return m;
}

StageResult Pipeline::gen_prefixes() {
  StageResult result;
  result.stage = "gen-prefixes";
  std::vector<QuestionInstance> instances;
  std::set<std::string> ids;
  for (const auto* path : {&config_.train_path, &config_.test_path}) {
    if (!*path) continue;
    for (auto& inst : load_split(*path, path == &config_.train_path ? "train" : "test")) {
      if (ids.insert(inst.id).second) instances.push_back(std::move(inst));
    }
  }
  if (!config_.train_path && !config_.test_path) throw ConfigError("gen-prefixes needs dataset.train or dataset.test");

  PrefixStore store;
  json counts{{"entries", 0}, {"validated", 0}, {"invalid", 0}, {"reasons", json::object()}};
  json stage_config{{"dataset", config_.dataset},
                    {"source", std::string(to_string(config_.prefix_source))},
                    {"train_digest", file_digest(config_.train_path)},
                    {"test_digest", file_digest(config_.test_path)}};

  if (config_.prefix_source == PrefixSource::Template) {
    throw ConfigError("prefixes.source = \"template\" needs no gen-prefixes stage");
  }
  if (config_.prefix_source == PrefixSource::Human) {
    HumanPrefixLoad human = load_human_prefixes(*config_.human_prefixes);
    store = std::move(human.store);
    stage_config["human_digest"] = file_digest(config_.human_prefixes);
    result.summary["unknown_emotion"] = human.unknown_emotion;
    result.summary["duplicates"] = human.duplicates;
    result.summary["malformed"] = human.malformed;
    result.summary["missing"] = human.missing.size();
    result.summary["warnings"] = human.warnings;
  } else {
    Backend& be = backend();
    DecodingConfig decoding;
    const json& px = section(config_.raw, "prefixes");
    decoding.temperature = get_or<double>(px, "temperature", 0.0, "prefixes");
    stage_config["generator_model"] = be.model_id();
    stage_config["temperature"] = decoding.temperature;

    const std::size_t n = instances.size() * kNumEmotions;
    auto entries = parallel_map<PrefixEntry>(n, be.max_concurrency(), [&](std::size_t i) {
      const QuestionInstance& inst = instances[i / kNumEmotions];
      const Emotion emotion = emotion_at(i % kNumEmotions);
      ChatRequest request = build_generation_request(emotion, inst, decoding);
      const std::string reply = be.complete(request).text;
      GeneratedPrefix gen = parse_generated_prefix(reply);
      if (!gen.violations.empty()) {
        request.messages.push_back(ChatMessage{"assistant", reply});
        request.messages.push_back(ChatMessage{
            "user", "The previous reply was rejected (" + reasons_text(gen.violations) +
                        "). Return only valid JSON with key \"prepended_sentence\" holding one sentence of 5-8 words."});
        gen = parse_generated_prefix(be.complete(request).text);
      }
      PrefixEntry e;
      e.instance_id = inst.id;
      e.emotion = emotion;
      e.text = gen.text;
      e.source = PrefixSource::Generated;
      e.validated = gen.violations.empty();
      e.violations = gen.violations;
      return e;
    });
    for (auto& e : entries) store.put(std::move(e));
  }

  for (const auto& [key, e] : store.entries()) {
    counts["entries"] = counts["entries"].get<int>() + 1;
    if (e.validated) {
      counts["validated"] = counts["validated"].get<int>() + 1;
    } else {
      counts["invalid"] = counts["invalid"].get<int>() + 1;
      for (const auto& r : e.violations) counts["reasons"][r] = counts["reasons"].value(r, 0) + 1;
    }
  }
  fs::create_directories(dirs_.prefixes());
  store.save(dirs_.prefixes() / "prefixes.jsonl");
  json manifest = stage_manifest("gen-prefixes", stage_config, {});
  manifest["counts"] = counts;
  write_json_file(dirs_.prefixes() / "manifest.json", manifest);
  store_ = std::move(store);
  if (mock_) mock_->add_prefixes(*store_);

  result.summary["counts"] = counts;
  if (backend_) result.stats = backend_->stats();
  return result;
}

StageResult Pipeline::build_cache() {
  StageResult result;
  result.stage = "build-cache";
  const auto train = load_split(config_.train_path, "train");
  Backend& be = backend();
  PrefixPlan plan{config_.prefix_source, prefix_store(), config_.intensity, config_.template_fallback};

  BuildOptions options;
  options.position = config_.cache_position;
  options.with_baseline = config_.with_baseline;
  options.instance_cap = config_.cache_cap;
  options.stop_after = config_.stop_after;
  json upstream = stage_manifest("build-cache", json::object(),
                                 config_.prefix_source == PrefixSource::Template ? std::vector<std::string>{}
                                                                                 : std::vector<std::string>{"gen-prefixes"})
                      .at("upstream");
  options.config = json{{"train_digest", file_digest(config_.train_path)},
                        {"intensity", std::string(to_string(config_.intensity))},
                        {"template_fallback", config_.template_fallback},
                        {"upstream", upstream}};

  const BuildReport report = emoprompt::build_cache(train, plan, be, CachePaths{dirs_.cache()}, options);
  result.summary = json{{"considered", report.considered}, {"resumed", report.resumed},
                        {"built", report.built},           {"skipped_no_gold", report.skipped_no_gold},
                        {"errors", report.errors},         {"complete", report.complete}};
  result.stats = be.stats();
  return result;
}

StageResult Pipeline::train() {
  StageResult result;
  result.stage = "train";
  const RewardDataset cache = load_cache(CachePaths{dirs_.cache()});
  const TrainResult trained = emoprompt::train(cache, config_.train);

  fs::create_directories(dirs_.policy());
  save_checkpoint(dirs_.policy() / "checkpoint.json", trained.params, cache.encoder_id, config_.train);
  std::vector<json> log;
  for (const auto& e : trained.log) log.push_back(e.to_json());
  write_file_atomic(dirs_.policy() / "training_log.jsonl", to_jsonl(log));

  json stage_config = config_.train.to_json();
  stage_config["activation_id"] = trained.params.activation_id;
  json manifest = stage_manifest("train", stage_config, {"build-cache"});
  const json final_metrics{{"train_size", trained.train_size},
                           {"validation_size", trained.validation_size},
                           {"final_train_loss", trained.log.back().train_loss},
                           {"final_validation_expected_reward", trained.log.back().validation_expected_reward}};
  manifest["metrics"] = final_metrics;
  write_json_file(dirs_.policy() / "manifest.json", manifest);
  result.summary = final_metrics;
  return result;
}

StageResult Pipeline::eval() {
  StageResult result;
  result.stage = "eval";
  const auto conditions = expand_conditions(config_);
  auto test = load_split(config_.test_path, "test");

  std::optional<Checkpoint> checkpoint;
  const bool adaptive = std::any_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.adaptive; });
  Backend& be = backend();
  if (adaptive) {
    const fs::path path = dirs_.policy() / "checkpoint.json";
    if (!fs::exists(path)) throw UpstreamMissing("policy checkpoint " + path.string() + " not found; run train first", "train");
    checkpoint = load_checkpoint(path);
    if (checkpoint->encoder_id != be.encoder_id()) {
      throw ConfigError("policy was trained on encoder '" + checkpoint->encoder_id + "' but the backend encodes with '" +
                        be.encoder_id() + "'");
    }
  }
  const bool needs_store = std::any_of(conditions.begin(), conditions.end(), [&](const auto& c) {
    return c.source && *c.source != PrefixSource::Template && !c.intensity;
  });
  if (needs_store) prefix_store();

  std::vector<QuestionInstance> eligible;
  std::size_t skipped_no_gold = 0;
  for (auto& inst : test) {
    if (!inst.has_gold()) {
      ++skipped_no_gold;
      continue;
    }
    if (config_.eval_cap && eligible.size() >= *config_.eval_cap) break;
    eligible.push_back(std::move(inst));
  }

  struct InstanceResult {
    std::vector<OutcomeRecord> outcomes;
    std::vector<std::string> missing;
  };
  auto per_instance = parallel_map<InstanceResult>(eligible.size(), be.max_concurrency(), [&](std::size_t idx) {
    const QuestionInstance& inst = eligible[idx];
    InstanceResult r;
    for (const auto& c : conditions) {
      OutcomeRecord o;
      o.instance_id = inst.id;
      o.condition = c.condition;
      o.group = config_.dataset;
      o.source = c.source ? std::string(to_string(*c.source)) : "";
      o.intensity = c.intensity ? std::string(to_string(*c.intensity)) : "";
      std::string prompt;
      if (c.condition == "baseline") {
        prompt = neutral_prompt(inst).full_text;
      } else {
        Emotion emotion = c.emotion.value_or(Emotion::Anger);
        if (c.adaptive) {
          const Embedding s = be.embed(state_text(inst));
          emotion = select_emotion(checkpoint->params, s.values);
        }
        std::optional<EmotionPrefix> prefix;
        if (c.intensity) {
          prefix = template_prefix(emotion, *c.intensity);
        } else {
          PrefixPlan plan{*c.source, store_ ? &*store_ : nullptr, config_.intensity, config_.template_fallback};
          prefix = plan.lookup(inst.id, emotion);
        }
        if (!prefix) {
          r.missing.push_back(inst.id + "/" + std::string(to_string(emotion)) + "/" + c.condition);
          continue;
        }
        o.emotion = std::string(to_string(emotion));
        o.position = std::string(to_string(c.position));
        prompt = inject(inst, *prefix, c.position).full_text;
      }
      const CompletionRecord completion = be.complete(prompt);
      const Prediction pred = extract_answer(inst.kind, completion.text);
      o.extracted = pred.extracted;
      o.correct = is_correct(pred, inst.gold);
      r.outcomes.push_back(std::move(o));
    }
    return r;
  });

  std::vector<OutcomeRecord> outcomes;
  std::vector<std::string> missing;
  for (auto& r : per_instance) {
    for (auto& o : r.outcomes) outcomes.push_back(std::move(o));
    for (auto& m : r.missing) missing.push_back(std::move(m));
  }
  fs::create_directories(dirs_.eval());
  write_file_atomic(dirs_.eval() / "outcomes.jsonl", write_outcomes(outcomes));

  json stage_config{{"conditions", config_.eval_conditions},
                    {"test_digest", file_digest(config_.test_path)},
                    {"prefix_source", std::string(to_string(config_.prefix_source))},
                    {"intensity", std::string(to_string(config_.intensity))},
                    {"instance_cap", config_.eval_cap ? json(*config_.eval_cap) : json(nullptr)},
                    {"backbone_id", be.model_id()}};
  std::vector<std::string> upstream;
  if (needs_store) upstream.push_back("gen-prefixes");
  if (adaptive) upstream.push_back("train");
  json manifest = stage_manifest("eval", stage_config, upstream);
  const json counts{{"instances", eligible.size()},
                    {"skipped_no_gold", skipped_no_gold},
                    {"outcomes", outcomes.size()},
                    {"missing_prefix", missing.size()},
                    {"extraction_failure_rate", outcomes.empty() ? json(nullptr)
                                                                 : json(extraction_failure_rate(outcomes))}};
  manifest["counts"] = counts;
  write_json_file(dirs_.eval() / "manifest.json", manifest);
  result.summary = counts;
  result.stats = be.stats();
  return result;
}

StageResult Pipeline::report() {
  StageResult result;
  result.stage = "report";
  const fs::path source = config_.report_outcomes.value_or(dirs_.eval() / "outcomes.jsonl");
  if (!fs::exists(source)) {
    throw UpstreamMissing("outcome records " + source.string() + " not found; run eval first", "eval");
  }
  const auto outcomes = read_outcomes(read_text_file(source));
  const auto tables = tabulate_groups(outcomes);

  fs::create_directories(dirs_.report());
  json written = json::array();
  for (const std::string& f : config_.report_formats) {
    switch (parse_emit_format(f)) {
      case EmitFormat::Csv:
        for (const auto& t : tables) {
          const std::string name = (t.group.empty() ? std::string("outcomes") : t.group) + ".csv";
          write_file_atomic(dirs_.report() / name, to_csv(t));
          written.push_back(name);
        }
        break;
      case EmitFormat::Json: {
        json all = json::array();
        for (const auto& t : tables) all.push_back(to_json(t));
        write_json_file(dirs_.report() / "tables.json", all);
        written.push_back("tables.json");
        break;
      }
      case EmitFormat::PlotData:
        write_json_file(dirs_.report() / "plotdata.json", to_plotdata(tables));
        written.push_back("plotdata.json");
        break;
    }
  }

  // In-sample adaptive comparison, when the offline stages have run.
  std::vector<std::string> upstream{"eval"};
  const fs::path checkpoint = dirs_.policy() / "checkpoint.json";
  if (!config_.report_outcomes && fs::exists(CachePaths{dirs_.cache()}.manifest()) && fs::exists(checkpoint)) {
    const RewardDataset cache = load_cache(CachePaths{dirs_.cache()});
    if (cache.has_baseline()) {
      const ConditionTable adaptive = compare_adaptive(cache, load_checkpoint(checkpoint).params);
      write_file_atomic(dirs_.report() / "adaptive.csv", to_csv(adaptive));
      write_json_file(dirs_.report() / "adaptive.json", to_json(adaptive));
      written.push_back("adaptive.csv");
      written.push_back("adaptive.json");
      upstream.push_back("train");
    }
  }

  json stage_config{{"formats", config_.report_formats}, {"outcomes_digest", sha256_hex(read_text_file(source))}};
  json manifest = stage_manifest("report", stage_config, upstream);
  manifest["files"] = written;
  write_json_file(dirs_.report() / "manifest.json", manifest);
  result.summary = json{{"tables", tables.size()}, {"files", written}};
  return result;
}

StageResult cmd_gen_prefixes(const RunConfig& config) { return Pipeline(config).gen_prefixes(); }
StageResult cmd_build_cache(const RunConfig& config) { return Pipeline(config).build_cache(); }
StageResult cmd_train(const RunConfig& config) { return Pipeline(config).train(); }
StageResult cmd_eval(const RunConfig& config) { return Pipeline(config).eval(); }
StageResult cmd_report(const RunConfig& config) { return Pipeline(config).report(); }

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UpstreamMissing*>(&e) != nullptr) return 2;
  if (dynamic_cast<const RetryableError*>(&e) != nullptr || dynamic_cast<const ProtocolError*>(&e) != nullptr) return 3;
  return 1;
}

}  // namespace emoprompt
