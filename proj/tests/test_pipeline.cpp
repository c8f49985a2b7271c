#include <doctest.h>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/pipeline.hpp"
#include "emoprompt/scoring.hpp"
#include "emoprompt/toml_config.hpp"
#include "pipeline_fixture.hpp"

using namespace emoprompt;
using nlohmann::json;
using testutil::TempDir;

TEST_CASE("toml subset") {
  const json doc = parse_toml(R"(
# comment
title = "run"   # trailing comment
count = 3
ratio = 0.25
neg = -1e-3
on = true
path = 'C:\raw\path'
esc = "tab\there \u00e9"
list = [1, 2,
        3]
names = ["a", "b"]

[a.b]
c = 1
d.e = "x"
inline = { rule = "uniform_p", p = 1.0 }
)");
  CHECK(doc.at("title") == "run");
  CHECK(doc.at("count") == 3);
  CHECK(doc.at("ratio") == 0.25);
  CHECK(doc.at("neg") == -1e-3);
  CHECK(doc.at("on") == true);
  CHECK(doc.at("path") == "C:\\raw\\path");
  CHECK(doc.at("esc") == "tab\there \xc3\xa9");
  CHECK(doc.at("list") == json{1, 2, 3});
  CHECK(doc.at("names") == json{"a", "b"});
  CHECK(doc.at("a").at("b").at("c") == 1);
  CHECK(doc.at("a").at("b").at("d").at("e") == "x");
  CHECK(doc.at("a").at("b").at("inline") == json{{"rule", "uniform_p"}, {"p", 1.0}});

  CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("a = \n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("a = \"open\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("[t]\nx=1\n[t]\n"), ConfigError);
  CHECK_THROWS_AS(load_toml("/nonexistent/run.toml"), ConfigError);
}

TEST_CASE("overrides use value syntax with a string fallback") {
  json doc = json::object();
  apply_override(doc, "train.epochs=10");
  apply_override(doc, "train.learning_rate = 0.5");
  apply_override(doc, "eval.conditions=[\"baseline\"]");
  apply_override(doc, "prefixes.source=human");
  CHECK(doc.at("train").at("epochs") == 10);
  CHECK(doc.at("train").at("learning_rate") == 0.5);
  CHECK(doc.at("eval").at("conditions") == json{"baseline"});
  CHECK(doc.at("prefixes").at("source") == "human");
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "a..b=1"), ConfigError);
}

TEST_CASE("run config validation") {
  TempDir dir;
  const auto path = testutil::prepare_mock_run(dir.path(), {});
  const RunConfig c = RunConfig::load(path);
  CHECK(c.backend_mode == "mock");
  CHECK(c.train.seed == 7);  // inherits the top-level seed
  CHECK(c.train.epochs == 20);
  CHECK(c.output_dir == dir.path() / "out");
  CHECK(RunConfig::load(path, {"train.seed=3"}).train.seed == 3);

  CHECK_THROWS_AS(RunConfig::load(path, {"backend.mode=grpc"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"backend.http.chat_url=\"http://x\""}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"train.epochs=0"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"prefixes.source=human"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"eval.conditions=[\"everything\"]"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"report.formats=[\"xlsx\"]"}), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(path, {"cache.position=sideways"}), ConfigError);

  // Relative paths resolve against the config file's directory.
  testutil::write_text(dir / "sub" / "rel.toml",
                       "output_dir = \"o\"\n[dataset]\nname = \"gsm8k\"\ntrain = \"../data/train.jsonl\"\n"
                       "[backend]\nmode = \"mock\"\n");
  const RunConfig rel = RunConfig::load(dir / "sub" / "rel.toml");
  CHECK(rel.output_dir == dir.path() / "sub" / "o");
  CHECK(std::filesystem::exists(*rel.train_path));
}

TEST_CASE("http backend requires the credential env var") {
  TempDir dir;
  testutil::write_text(dir / "h.toml",
                       "output_dir = \"o\"\n[dataset]\nname = \"gsm8k\"\n"
                       "[backend]\nmode = \"http\"\n[backend.http]\nchat_url = \"http://127.0.0.1:9/v1/chat\"\n"
                       "model_id = \"m\"\nencoder_id = \"e\"\napi_key_env = \"EMOPROMPT_TEST_UNSET_KEY\"\n");
  ::unsetenv("EMOPROMPT_TEST_UNSET_KEY");
  Pipeline p(RunConfig::load(dir / "h.toml"));
  CHECK_THROWS_AS(p.backend(), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(UpstreamMissing("x", "train")) == 2);
  CHECK(exit_code_for(RetryableError("x", 5)) == 3);
  CHECK(exit_code_for(ProtocolError("x", "raw")) == 3);
  CHECK(exit_code_for(ConfigError("x")) == 1);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("missing upstream artifacts name the required stage") {
  TempDir dir;
  const auto path = testutil::prepare_mock_run(dir.path(), {});
  const RunConfig c = RunConfig::load(path);
  auto stage_of = [](auto fn) -> std::string {
    try {
      fn();
    } catch (const UpstreamMissing& e) {
      return e.stage();
    }
    return "";
  };
  CHECK(stage_of([&] { Pipeline(c).build_cache(); }) == "gen-prefixes");
  CHECK(stage_of([&] { Pipeline(c).train(); }) == "build-cache");
  CHECK(stage_of([&] { Pipeline(c).eval(); }) == "train");
  CHECK(stage_of([&] { Pipeline(c).report(); }) == "eval");
}

TEST_CASE("generated prefix parsing") {
  const auto ok = parse_generated_prefix(R"({"prepended_sentence": "I am absolutely furious about this situation!"})");
  CHECK(ok.violations.empty());
  CHECK(ok.text == "I am absolutely furious about this situation!");
  CHECK(parse_generated_prefix("```json\n{\"prepended_sentence\": \"This is utterly revolting to even read.\"}\n```")
            .violations.empty());
  CHECK(parse_generated_prefix("not json at all").violations == std::vector<std::string>{"invalid JSON"});
  CHECK(parse_generated_prefix(R"({"sentence": "x"})").violations == std::vector<std::string>{"missing key"});
  CHECK(parse_generated_prefix(R"({"prepended_sentence": 3})").violations == std::vector<std::string>{"missing key"});
  CHECK(parse_generated_prefix(R"({"prepended_sentence": "I am sad."})").violations ==
        std::vector<std::string>{"word_count"});
}

TEST_CASE("gen-prefixes: mock generation modes") {
  struct Case {
    std::string mode;
    bool valid;
    std::string reason;
  };
  for (const auto& [mode, valid, reason] : {Case{"valid", true, ""}, Case{"short", false, "word_count"},
                                            Case{"missing_key", false, "missing key"},
                                            Case{"not_json", false, "invalid JSON"}}) {
    CAPTURE(mode);
    TempDir dir;
    testutil::MockRunSpec spec;
    spec.train = 5;
    spec.test = 3;
    spec.generation = mode;
    Pipeline p(RunConfig::load(testutil::prepare_mock_run(dir.path(), spec)));
    const auto r = p.gen_prefixes();
    const json counts = r.summary.at("counts");
    CHECK(counts.at("entries") == 48);
    CHECK(counts.at("validated") == (valid ? 48 : 0));
    if (!valid) CHECK(counts.at("reasons").at(reason) == 48);
    // One request per pair, plus one retry per rejected reply.
    CHECK(p.mock()->generation_calls() == (valid ? 48u : 96u));
    const auto store = PrefixStore::load(dir / "out" / "prefixes" / "prefixes.jsonl");
    CHECK(store.size() == 48);
    for (const auto& [key, e] : store.entries()) {
      CHECK(e.validated == valid);
      if (!valid) CHECK(e.violations == std::vector<std::string>{reason});
    }
  }
}

TEST_CASE("emotionrl evaluation issues one completion per test instance") {
  TempDir dir;
  testutil::MockRunSpec spec;
  spec.train = 30;
  spec.test = 50;
  spec.epochs = 3;
  spec.conditions = R"(["emotionrl"])";
  const RunConfig c = RunConfig::load(testutil::prepare_mock_run(dir.path(), spec));
  Pipeline(c).gen_prefixes();
  Pipeline(c).build_cache();
  Pipeline(c).train();
  Pipeline p(c);
  p.backend();
  const auto before_c = p.mock()->completion_calls();
  const auto before_e = p.mock()->embedding_calls();
  const auto r = p.eval();
  CHECK(p.mock()->completion_calls() - before_c == 50u);
  CHECK(p.mock()->embedding_calls() - before_e == 50u);
  CHECK(r.summary.at("outcomes") == 50);
  const auto outcomes = read_outcomes(read_text_file(dir / "out" / "eval" / "outcomes.jsonl"));
  for (const auto& o : outcomes) {
    CHECK(o.condition == "emotionrl");
    CHECK(parse_emotion(o.emotion).has_value());
    CHECK(o.position == "prepended");
  }
}

TEST_CASE("full mock pipeline is reproducible and reports are byte-identical") {
  std::map<std::string, std::string> first;
  for (int run = 0; run < 2; ++run) {
    TempDir dir;
    testutil::MockRunSpec spec;
    spec.train = 24;
    spec.test = 10;
    spec.epochs = 5;
    spec.conditions = R"(["baseline", "static", "intensity", "positions", "emotionrl"])";
    const RunConfig c = RunConfig::load(testutil::prepare_mock_run(dir.path(), spec));
    Pipeline(c).gen_prefixes();
    Pipeline(c).build_cache();
    Pipeline(c).train();
    const auto ev = Pipeline(c).eval();
    // baseline + 6 static + 18 intensity + 12 extra positions (prepended deduplicated) + emotionrl
    CHECK(ev.summary.at("outcomes") == 10 * (1 + 6 + 18 + 12 + 1));
    Pipeline(c).report();
    const auto snap = testutil::snapshot(dir / "out" / "report");
    CHECK(snap.count("gsm8k.csv") == 1);
    CHECK(snap.count("adaptive.csv") == 1);
    if (run == 0) {
      first = snap;
    } else {
      CHECK(snap == first);
    }
  }
}

TEST_CASE("stages are idempotent") {
  TempDir dir;
  testutil::MockRunSpec spec;
  spec.train = 12;
  spec.test = 6;
  spec.epochs = 2;
  const RunConfig c = RunConfig::load(testutil::prepare_mock_run(dir.path(), spec));
  Pipeline(c).gen_prefixes();
  Pipeline(c).build_cache();
  const auto cache1 = testutil::snapshot(dir / "out" / "cache");
  Pipeline(c).gen_prefixes();
  const auto again = Pipeline(c).build_cache();
  CHECK(again.summary.at("built") == 0);
  CHECK(again.summary.at("resumed") == 12);
  CHECK(testutil::snapshot(dir / "out" / "cache") == cache1);
}

TEST_CASE("report replays the bundled outcome fixture") {
  TempDir dir;
  const auto path = testutil::prepare_mock_run(dir.path(), {});
  const RunConfig c =
      RunConfig::load(path, {"report.outcomes=\"" + testutil::fixture("published_outcomes.jsonl").string() + "\""});
  const auto r = Pipeline(c).report();
  CHECK(r.summary.at("tables") == 2);
  const std::string csv = testutil::read_text(dir / "out" / "report" / "DeepSeek.csv");
  CHECK(csv.find("baseline,,,,3976,94.97,0.00\n") != std::string::npos);
  CHECK(csv.find("FEAR,prepended,,,3976,95.07,0.10\n") != std::string::npos);
  const std::string qwen = testutil::read_text(dir / "out" / "report" / "Qwen3.csv");
  CHECK(qwen.find("SURPRISE,prepended,,,527,93.74,-0.19\n") != std::string::npos);
}
