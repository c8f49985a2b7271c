#include <doctest.h>

#include "emoprompt/corpus.hpp"
#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/text_util.hpp"
#include "test_support.hpp"

using namespace emoprompt;
using testutil::TempDir;

TEST_CASE("gsm8k answer sentinel is stripped to a numeric gold") {
  TempDir dir;
  testutil::write_text(dir / "g.jsonl",
                       R"({"id":"q1","question":"Janet sells eggs. How much does she make?","answer":"She makes 9*2 = 18.\n#### 18","split":"train"})"
                       "\n");
  const auto r = load_dataset(dir / "g.jsonl", "gsm8k");
  REQUIRE(r.instances.size() == 1);
  const auto& q = r.instances[0];
  CHECK(q.kind == TaskKind::numeric_exact());
  CHECK(q.gold == std::optional<std::string>("18"));
  CHECK(q.split == Split::Train);
  CHECK(q.dataset == "gsm8k");
}

TEST_CASE("gold numbers are canonicalised") {
  TempDir dir;
  testutil::write_text(dir / "g.jsonl",
                       R"({"id":"a","question":"Q?","answer":"#### 1,000"})"
                       "\n"
                       R"({"id":"b","question":"Q?","answer":"#### 18.0"})"
                       "\n"
                       R"({"id":"c","question":"Q?","answer":"#### -0.50"})"
                       "\n");
  const auto r = load_dataset(dir / "g.jsonl", "gsm8k");
  REQUIRE(r.instances.size() == 3);
  CHECK(*r.instances[0].gold == "1000");
  CHECK(*r.instances[1].gold == "18");
  CHECK(*r.instances[2].gold == "-0.5");
  CHECK(r.instances[0].split == Split::Test);  // adapter default
}

TEST_CASE("record without a recoverable answer keeps the instance with gold absent") {
  TempDir dir;
  testutil::write_text(dir / "m.jsonl",
                       R"({"id":"m0","question":"A 45-year-old man presents with chest pain. What is the next step?","options":{"A":"ECG","B":"CT","C":"MRI","D":"Discharge"},"answer_idx":""})"
                       "\n"
                       R"({"id":"m1","question":"Which drug?","options":{"A":"x","B":"y"},"answer_idx":"E"})"
                       "\n");
  const auto r = load_dataset(dir / "m.jsonl", "medqa");
  REQUIRE(r.instances.size() == 2);
  CHECK_FALSE(r.instances[0].has_gold());
  CHECK_FALSE(r.instances[1].has_gold());
  CHECK(r.report.missing_gold == 2);
  CHECK(r.report.loaded == 2);
  CHECK(r.instances[0].kind.labels() == std::vector<std::string>{"A", "B", "C", "D"});
}

TEST_CASE("empty file yields no instances and a zero report") {
  TempDir dir;
  testutil::write_text(dir / "e.jsonl", "");
  const auto r = load_dataset(dir / "e.jsonl", "gsm8k");
  CHECK(r.instances.empty());
  CHECK(r.report.read == 0);
  CHECK(r.report.skipped == 0);
  CHECK(r.report.to_json() == nlohmann::json{{"read", 0}, {"loaded", 0}, {"skipped", 0}, {"missing_gold", 0}});
}

TEST_CASE("malformed lines are skipped and every line is counted once") {
  TempDir dir;
  testutil::write_text(dir / "g.jsonl",
                       R"({"id":"ok","question":"Fine?","answer":"#### 1"})"
                       "\n"
                       "{not json\n"
                       R"({"id":"noq","question":"","answer":"#### 1"})"
                       "\n"
                       "\n"
                       R"({"id":"ok","question":"Duplicate id","answer":"#### 2"})"
                       "\n"
                       R"({"id":"badsplit","question":"Q","answer":"#### 2","split":"validation"})"
                       "\n");
  const auto r = load_dataset(dir / "g.jsonl", "gsm8k");
  CHECK(r.report.read == 6);
  CHECK(r.report.loaded == 1);
  CHECK(r.report.loaded + r.report.skipped == r.report.read);
  CHECK(r.instances.size() == 1);
}

TEST_CASE("unknown dataset and unreadable file are fatal") {
  TempDir dir;
  testutil::write_text(dir / "g.jsonl", "");
  CHECK_THROWS_AS(load_dataset(dir / "g.jsonl", "no-such-dataset"), ConfigError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl", "gsm8k"), IoError);
}

TEST_CASE("multiple-choice task needs two distinct labels") {
  CHECK_THROWS_AS(TaskKind::multiple_choice({"A"}), ConfigError);
  CHECK_THROWS_AS(TaskKind::multiple_choice({"A", "A"}), ConfigError);
  CHECK(TaskKind::multiple_choice({"A", "B"}).admits("B"));
  CHECK_FALSE(TaskKind::multiple_choice({"A", "B"}).admits("C"));
  CHECK(TaskKind::boolean().labels() == std::vector<std::string>{"yes", "no"});
}

TEST_CASE("option encodings: object, list, label/text arrays, separate fields") {
  TempDir dir;
  testutil::write_text(dir / "o.jsonl",
                       R"({"id":"o1","question_stem":"Best way to save money is to","choices":{"label":["A","B","C","D"],"text":["make more phone calls","quit eating lunch out","buy less with monopoly money","have lunch with friends"]},"answerKey":"B"})"
                       "\n");
  testutil::write_text(dir / "s.jsonl",
                       R"({"id":"s1","context":"Tracy went to the store.","question":"Why?","answerA":"to buy food","answerB":"to sleep","answerC":"to swim","label":"1"})"
                       "\n");
  testutil::write_text(dir / "b.jsonl",
                       R"({"id":"b1","passage":"Water boils at 100 C at sea level.","question":"does water boil at 100 c","answer":true})"
                       "\n");
  const auto obqa = load_dataset(dir / "o.jsonl", "openbookqa").instances.at(0);
  CHECK(obqa.options.size() == 4);
  CHECK(obqa.options[1] == Option{"B", "quit eating lunch out"});
  CHECK(*obqa.gold == "B");

  const auto siqa = load_dataset(dir / "s.jsonl", "socialiqa").instances.at(0);
  CHECK(siqa.options.size() == 3);
  CHECK(*siqa.gold == "A");
  CHECK(siqa.passage == std::optional<std::string>("Tracy went to the store."));

  const auto boolq = load_dataset(dir / "b.jsonl", "boolq").instances.at(0);
  CHECK(*boolq.gold == "yes");
  CHECK(boolq.kind == TaskKind::boolean());
}

TEST_CASE("state_text concatenates passage and question with one newline") {
  QuestionInstance q;
  q.question_text = "Q";
  CHECK(state_text(q) == "Q");
  q.passage = "P";
  CHECK(state_text(q) == "P\nQ");
  QuestionInstance r = q;
  CHECK(state_text(r) == state_text(q));
  q.state_mode = StateTextMode::QuestionOnly;
  CHECK(state_text(q) == "Q");
}

TEST_CASE("round trip through the adapter format reproduces the instances") {
  const AdapterMap adapters = AdapterMap::builtin();
  for (const std::string ds : {"gsm8k", "openbookqa", "socialiqa", "boolq", "medqa"}) {
    CAPTURE(ds);
    TempDir dir;
    std::string src;
    if (ds == "gsm8k") {
      src = testutil::read_text(testutil::fixture("gsm8k_train.jsonl"));
    } else if (ds == "openbookqa") {
      src = R"({"id":"o1","question_stem":"Stem","choices":{"label":["A","B","C","D"],"text":["a","b","c","d"]},"answerKey":"C","split":"train"})"
            "\n";
    } else if (ds == "socialiqa") {
      src = R"({"id":"s1","context":"Ctx.","question":"Why?","answerA":"x","answerB":"y","answerC":"z","label":"3"})"
            "\n";
    } else if (ds == "boolq") {
      src = R"({"id":"b1","passage":"P.","question":"is it","answer":false})"
            "\n";
    } else {
      src = R"({"id":"m1","question":"Which?","options":{"A":"x","B":"y","C":"z"},"answer_idx":"B"})"
            "\n"
            R"({"id":"m2","question":"No key?","options":{"A":"x","B":"y"}})"
            "\n";
    }
    testutil::write_text(dir / "in.jsonl", src);
    const auto first = load_dataset(dir / "in.jsonl", ds).instances;
    std::vector<nlohmann::json> rows;
    for (const auto& q : first) rows.push_back(to_adapter_record(q, adapters.at(ds)));
    testutil::write_text(dir / "out.jsonl", to_jsonl(rows));
    const auto second = load_dataset(dir / "out.jsonl", ds).instances;
    CHECK(first == second);
  }
}

TEST_CASE("shipped adapter config equals the compiled-in map") {
  const AdapterMap shipped = AdapterMap::load(std::filesystem::path(EMOPROMPT_SOURCE_DIR) / "configs" / "adapters.json");
  const AdapterMap builtin = AdapterMap::builtin();
  CHECK(shipped.version() == builtin.version());
  CHECK(shipped.names() == builtin.names());
}

TEST_CASE("canonical_number") {
  CHECK(canonical_number("18") == std::optional<std::string>("18"));
  CHECK(canonical_number("18.0") == std::optional<std::string>("18"));
  CHECK(canonical_number(" $1,234.50 ") == std::optional<std::string>("1234.5"));
  CHECK(canonical_number("-0") == std::optional<std::string>("0"));
  CHECK(canonical_number("+007") == std::optional<std::string>("7"));
  CHECK_FALSE(canonical_number("12a").has_value());
  CHECK_FALSE(canonical_number("1.2.3").has_value());
  CHECK_FALSE(canonical_number("").has_value());
}
