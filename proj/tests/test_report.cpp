#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/report.hpp"
#include "test_support.hpp"

using namespace emoprompt;
using nlohmann::json;
using testutil::TempDir;

namespace {

OutcomeRecord outcome(std::string id, std::string condition, int correct, std::string position = "",
                      std::string group = "") {
  OutcomeRecord r;
  r.instance_id = std::move(id);
  r.condition = std::move(condition);
  if (r.condition != "baseline") r.emotion = r.condition;
  r.position = std::move(position);
  r.group = std::move(group);
  r.correct = correct;
  return r;
}

double two_decimals(double x) { return std::round(x * 100.0) / 100.0; }

std::vector<OutcomeRecord> published() {
  return read_outcomes(read_text_file(testutil::fixture("published_outcomes.jsonl")));
}

RewardDataset one_hot_anger(int n) {
  RewardDataset ds;
  ds.encoder_id = "e";
  ds.dataset = "toy";
  for (int i = 0; i < n; ++i) {
    RewardRecord r;
    r.instance_id = "t" + std::to_string(i);
    r.embedding = Embedding{{static_cast<double>(i % 3), 1.0}, "e"};
    r.rewards = {1, 0, 0, 0, 0, 0};
    r.baseline_reward = i % 2;
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace

TEST_CASE("published table replay: DeepSeek prepended column") {
  const auto tables = tabulate_groups(published());
  REQUIRE(tables.size() == 2);
  const auto& ds = tables[0];
  CHECK(ds.group == "DeepSeek");
  CHECK(two_decimals(100.0 * ds.baseline().accuracy) == doctest::Approx(94.97));
  CHECK(ds.baseline().n == 3976);
  const std::pair<const char*, double> expected[] = {{"FEAR", 95.07},    {"ANGER", 94.77},   {"HAPPINESS", 95.12},
                                                     {"SADNESS", 95.42}, {"DISGUST", 95.15}, {"SURPRISE", 94.62}};
  for (const auto& [label, pct] : expected) {
    CAPTURE(label);
    const auto& row = ds.row(label, "prepended");
    CHECK(std::abs(two_decimals(100.0 * row.accuracy) - pct) < 0.01 + 1e-9);
    CHECK(std::abs(two_decimals(row.delta_pp) - two_decimals(pct - 94.97)) < 0.01 + 1e-9);
  }
  CHECK(std::abs(two_decimals(ds.row("FEAR", "prepended").delta_pp) - 0.10) < 0.01 + 1e-9);
}

TEST_CASE("published table replay: Qwen3 surprise") {
  const auto tables = tabulate_groups(published());
  const auto& q = tables[1];
  CHECK(q.group == "Qwen3");
  CHECK(two_decimals(100.0 * q.baseline().accuracy) == doctest::Approx(93.93));
  CHECK(std::abs(two_decimals(q.row("SURPRISE", "prepended").delta_pp) - (-0.19)) < 0.01 + 1e-9);
}

TEST_CASE("identical outcomes give zero deltas") {
  std::vector<OutcomeRecord> rows;
  const int pattern[] = {1, 0, 1, 1, 0};
  for (int i = 0; i < 5; ++i) {
    rows.push_back(outcome("q" + std::to_string(i), "baseline", pattern[i]));
    for (Emotion e : kEmotions) rows.push_back(outcome("q" + std::to_string(i), std::string(to_string(e)), pattern[i], "prepended"));
  }
  const auto t = tabulate(rows);
  CHECK(t.rows.size() == 7);
  for (const auto& r : t.rows) CHECK(r.delta_pp == 0.0);
}

TEST_CASE("no baseline is a report error") {
  std::vector<OutcomeRecord> rows{outcome("a", "FEAR", 1, "prepended")};
  CHECK_THROWS_AS(tabulate(rows), ReportError);
  CHECK_THROWS_AS(ConditionTable{}.baseline(), ReportError);
}

TEST_CASE("delta identity, antisymmetry and row conservation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<OutcomeRecord> rows;
    const int n = 1 + static_cast<int>(rng() % 60);
    std::vector<std::string> conds{"baseline", "FEAR", "SADNESS"};
    std::map<std::string, std::size_t> counts;
    for (int i = 0; i < n; ++i) {
      for (const auto& c : conds) {
        if (c != "baseline" && rng() % 4 == 0) continue;
        rows.push_back(outcome("i" + std::to_string(i), c, static_cast<int>(rng() & 1), c == "baseline" ? "" : "mid"));
        ++counts[c];
      }
    }
    const auto t = tabulate(rows);
    CHECK(t.rows.front().is_baseline());
    CHECK(t.baseline().delta_pp == 0.0);
    std::size_t total = 0;
    for (const auto& r : t.rows) {
      CHECK(std::abs(r.delta_pp - 100.0 * (r.accuracy - t.baseline().accuracy)) < 1e-9);
      CHECK(r.n == counts[r.condition]);
      total += r.n;
    }
    CHECK(total == rows.size());

    // Renaming FEAR as the baseline flips the sign of the FEAR/baseline delta.
    if (counts["FEAR"] == 0) continue;
    std::vector<OutcomeRecord> swapped;
    for (auto r : rows) {
      if (r.condition == "baseline") {
        r.condition = "ORIGINAL";
        r.position = "none";
      } else if (r.condition == "FEAR") {
        r.condition = "baseline";
        r.position = "";
      }
      swapped.push_back(r);
    }
    const auto s = tabulate(swapped);
    CHECK(std::abs(s.row("ORIGINAL").delta_pp + t.row("FEAR").delta_pp) < 1e-9);
  }
}

TEST_CASE("position, intensity and source keep separate rows") {
  std::vector<OutcomeRecord> rows{outcome("a", "baseline", 1), outcome("a", "FEAR", 1, "prepended"),
                                  outcome("a", "FEAR", 0, "mid"), outcome("a", "FEAR", 1, "appended")};
  auto templ = outcome("a", "FEAR", 0, "prepended");
  templ.intensity = "extreme";
  templ.source = "template";
  rows.push_back(templ);
  const auto t = tabulate(rows);
  CHECK(t.rows.size() == 5);
  CHECK(t.row("FEAR", "mid").accuracy == 0.0);
  CHECK(t.row("FEAR", "mid").delta_pp == -100.0);
}

TEST_CASE("csv layout") {
  std::vector<OutcomeRecord> rows{outcome("a", "baseline", 1), outcome("b", "baseline", 0),
                                  outcome("a", "FEAR", 1, "prepended"), outcome("b", "FEAR", 1, "prepended"),
                                  outcome("a", "ANGER", 0, "prepended"), outcome("b", "ANGER", 0, "prepended")};
  const auto t = tabulate(rows);
  REQUIRE(t.rows.size() == 3);
  const std::string csv = to_csv(t);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv ==
        "condition,position,intensity,source,n,accuracy,delta_pp\n"
        "baseline,,,,2,50.00,0.00\n"
        "FEAR,prepended,,,2,100.00,50.00\n"
        "ANGER,prepended,,,2,0.00,-50.00\n");
  CHECK(format_fixed2(-0.001) == "0.00");
}

TEST_CASE("json round trip is lossless") {
  const auto tables = tabulate_groups(published());
  for (const auto& t : tables) {
    CHECK(table_from_json(to_json(t)) == t);
    CHECK(table_from_json(json::parse(to_json(t).dump())) == t);
  }
  CHECK_THROWS_AS(table_from_json(json{{"rows", {{{"condition", "x"}}}}}), ReportError);
}

TEST_CASE("plot data: one bar per benchmark x emotion") {
  const auto tables = tabulate_groups(published());
  const auto plot = to_plotdata(tables);
  REQUIRE(plot.size() == 7);
  std::set<std::string> deepseek;
  for (const auto& bar : plot) {
    CHECK(bar.contains("group"));
    CHECK(bar.contains("condition"));
    CHECK(bar.contains("delta_pp"));
    if (bar.at("group") == "DeepSeek") deepseek.insert(bar.at("condition").get<std::string>());
  }
  CHECK(deepseek == std::set<std::string>{"ANGER", "DISGUST", "FEAR", "HAPPINESS", "SADNESS", "SURPRISE"});
}

TEST_CASE("emit writes files and reports unwritable paths") {
  TempDir dir;
  const auto t = tabulate_groups(published())[1];
  emit(t, EmitFormat::Csv, dir / "t.csv");
  CHECK(testutil::read_text(dir / "t.csv") == to_csv(t));
  emit(t, parse_emit_format("json"), dir / "t.json");
  CHECK(table_from_json(json::parse(testutil::read_text(dir / "t.json"))) == t);
  testutil::write_text(dir / "file", "x");
  CHECK_THROWS_AS(emit(t, EmitFormat::Csv, dir / "file" / "t.csv"), IoError);
  CHECK_THROWS_AS(parse_emit_format("xlsx"), ConfigError);
}

TEST_CASE("adaptive comparison on a one-hot cache") {
  const auto cache = one_hot_anger(12);
  auto perfect = PolicyParams::zeros(2, 3);  // ties resolve to ANGER
  const auto t = compare_adaptive(cache, perfect);
  CHECK(t.rows.size() == 10);
  CHECK(t.row("emotionrl").accuracy == 1.0);
  CHECK(t.row("static-average").accuracy == 1.0 / 6.0);
  CHECK(t.row("oracle").accuracy == 1.0);
  CHECK(t.row("ANGER").accuracy == 1.0);
  CHECK(t.baseline().accuracy == 0.5);
  CHECK(t.row("emotionrl").delta_pp == doctest::Approx(50.0));

  auto wrong = perfect;
  wrong.b2 << 0, 0, 0, 0, 0, 1;
  CHECK(compare_adaptive(cache, wrong).row("emotionrl").accuracy == 0.0);

  auto no_base = cache;
  for (auto& r : no_base.records) r.baseline_reward.reset();
  CHECK_THROWS_AS(compare_adaptive(no_base, perfect), ReportError);
}

TEST_CASE("emotionrl never exceeds the oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    RewardDataset ds;
    ds.encoder_id = "e";
    for (int i = 0; i < 25; ++i) {
      RewardRecord r;
      r.instance_id = std::to_string(i);
      r.embedding = Embedding{testutil::random_vector(rng, 3), "e"};
      for (int& x : r.rewards) x = static_cast<int>(rng() % 4 == 0);
      r.baseline_reward = static_cast<int>(rng() & 1);
      ds.records.push_back(r);
    }
    const auto t = compare_adaptive(ds, PolicyParams::initialize(3, 4, rng(), 3.0));
    CHECK(t.row("emotionrl").accuracy <= t.row("oracle").accuracy);
    for (Emotion e : kEmotions) CHECK(t.row(std::string(to_string(e))).accuracy <= t.row("oracle").accuracy);
  }
}
