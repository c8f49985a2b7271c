// Command-line driver for the prompt-conditioning pipeline.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emoprompt/errors.hpp"
#include "emoprompt/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config, "Run config file (TOML)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", flags.overrides, "Override a config key, e.g. --set train.epochs=10");
  cmd->add_option("-o,--output-dir", flags.output_dir, "Override output_dir");
  cmd->add_option("--seed", flags.seed, "Override the top-level seed");
}

emoprompt::RunConfig load(const CommonFlags& flags, std::vector<std::string> extra) {
  std::vector<std::string> overrides;
  if (flags.output_dir) overrides.push_back("output_dir=\"" + *flags.output_dir + "\"");
  if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
  overrides.insert(overrides.end(), flags.overrides.begin(), flags.overrides.end());
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return emoprompt::RunConfig::load(flags.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-conditioned prompting pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<std::size_t> stop_after;
  std::optional<int> epochs;
  std::vector<std::string> conditions;
  std::optional<std::string> outcomes;

  auto* gen = app.add_subcommand("gen-prefixes", "Generate and validate per-instance emotional prefixes");
  add_common(gen, flags);

  auto* cache = app.add_subcommand("build-cache", "Query all six emotions per training instance and store rewards");
  add_common(cache, flags);
  cache->add_option("--stop-after", stop_after, "Stop after this many new records (resumable)");

  auto* train = app.add_subcommand("train", "Train the emotion-selection policy on the reward cache");
  add_common(train, flags);
  train->add_option("--epochs", epochs, "Override train.epochs");

  auto* eval = app.add_subcommand("eval", "Score test instances under the configured conditions");
  add_common(eval, flags);
  eval->add_option("--conditions", conditions, "Condition sets: baseline static intensity positions emotionrl");

  auto* report = app.add_subcommand("report", "Tabulate outcomes into condition tables");
  add_common(report, flags);
  report->add_option("--outcomes", outcomes, "Outcome records to tabulate instead of the eval output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    std::vector<std::string> extra;
    if (stop_after) extra.push_back("cache.stop_after=" + std::to_string(*stop_after));
    if (epochs) extra.push_back("train.epochs=" + std::to_string(*epochs));
    if (!conditions.empty()) {
      std::string list = "eval.conditions=[";
      for (std::size_t i = 0; i < conditions.size(); ++i) list += (i ? ",\"" : "\"") + conditions[i] + "\"";
      extra.push_back(list + "]");
    }
    if (outcomes) extra.push_back("report.outcomes=\"" + *outcomes + "\"");
    const emoprompt::RunConfig config = load(flags, extra);

    emoprompt::StageResult result;
    if (*gen) result = emoprompt::cmd_gen_prefixes(config);
    if (*cache) result = emoprompt::cmd_build_cache(config);
    if (*train) result = emoprompt::cmd_train(config);
    if (*eval) result = emoprompt::cmd_eval(config);
    if (*report) result = emoprompt::cmd_report(config);

    nlohmann::json out{{"stage", result.stage}, {"summary", result.summary}};
    out["backend"] = {{"completion_requests", result.stats.completion_requests},
                      {"completion_cache_hits", result.stats.completion_cache_hits},
                      {"embedding_requests", result.stats.embedding_requests},
                      {"embedding_cache_hits", result.stats.embedding_cache_hits}};
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const emoprompt::UpstreamMissing& e) {
    std::cerr << "error: " << e.what() << " (required stage: " << e.stage() << ")\n";
    return emoprompt::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return emoprompt::exit_code_for(e);
  }
}
