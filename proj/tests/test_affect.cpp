#include <doctest.h>

#include <set>

#include "emoprompt/affect.hpp"
#include "emoprompt/errors.hpp"
#include "test_support.hpp"

using namespace emoprompt;
using testutil::TempDir;

namespace {

QuestionInstance savings_question() {
  QuestionInstance q;
  q.id = "obqa-savings";
  q.dataset = "openbookqa";
  q.question_text =
      "A person wants to start saving money so that they can afford a nice vacation at the end of the year. After "
      "looking over their budget and expenses, they decide the best way to save money is to";
  q.options = {{"A", "make more phone calls"},
               {"B", "quit eating lunch out"},
               {"C", "buy less with monopoly money"},
               {"D", "have lunch with friends"}};
  q.kind = TaskKind::multiple_choice({"A", "B", "C", "D"});
  q.gold = "B";
  return q;
}

const std::string kSavingsBlock =
    "Question: A person wants to start saving money so that they can afford a nice vacation at the end of the year. "
    "After looking over their budget and expenses, they decide the best way to save money is to\n"
    "A: make more phone calls\n"
    "B: quit eating lunch out\n"
    "C: buy less with monopoly money\n"
    "D: have lunch with friends";

std::multiset<std::string> lines_without(const std::string& text, const std::string& prefix) {
  std::multiset<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (line != prefix) out.insert(line);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("canonical emotion order is alphabetical") {
  CHECK(kEmotions.size() == 6);
  const char* names[] = {"ANGER", "DISGUST", "FEAR", "HAPPINESS", "SADNESS", "SURPRISE"};
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    CHECK(to_string(emotion_at(k)) == names[k]);
    CHECK(index_of(emotion_at(k)) == k);
    CHECK(parse_emotion(names[k]) == emotion_at(k));
  }
  CHECK(parse_emotion("happy") == Emotion::Happiness);
  CHECK(parse_emotion("Fear") == Emotion::Fear);
  CHECK_FALSE(parse_emotion("joy").has_value());
  CHECK_THROWS_AS(emotion_at(6), DomainError);
}

TEST_CASE("intensity templates") {
  CHECK(template_prefix(Emotion::Happiness, Intensity::Slight).text == "I am happy.");
  CHECK(template_prefix(Emotion::Fear, Intensity::Extreme).text == "I am extremely afraid.");
  CHECK(template_prefix(Emotion::Disgust, Intensity::Moderate).text == "I am very disgusted.");
  CHECK(template_prefix(Emotion::Sadness, Intensity::Moderate).text == "I am very sad.");
  CHECK(template_prefix(Emotion::Anger, Intensity::Extreme).text == "I am extremely angry.");
  CHECK(template_prefix(Emotion::Surprise, Intensity::Slight).text == "I am surprised.");
  const auto p = template_prefix(Emotion::Fear, Intensity::Slight);
  CHECK(p.source == PrefixSource::Template);
  CHECK(p.intensity == Intensity::Slight);
  CHECK(p.emotion == Emotion::Fear);
}

TEST_CASE("template totality: all 18 templates pass lenient validation, none pass strict") {
  std::set<std::string> seen;
  for (Emotion e : kEmotions) {
    for (Intensity i : kIntensities) {
      const auto p = template_prefix(e, i);
      CHECK(validate_prefix(p.text, ValidationMode::Lenient).pass);
      CHECK(validate_prefix(p.text, ValidationMode::Strict).violated("word_count"));
      seen.insert(p.text);
    }
  }
  CHECK(seen.size() == 18);
}

TEST_CASE("validation rules") {
  const auto anger = validate_prefix("I am absolutely furious about this situation!", ValidationMode::Strict);
  CHECK(anger.pass);
  CHECK(anger.word_count == 7);

  const auto happy = validate_prefix("I am happy.", ValidationMode::Strict);
  CHECK_FALSE(happy.pass);
  CHECK(happy.word_count == 3);
  CHECK(happy.violated("word_count"));

  const auto empty = validate_prefix("", ValidationMode::Lenient);
  CHECK_FALSE(empty.pass);
  CHECK(empty.violations == std::vector<std::string>{"empty"});
  CHECK(validate_prefix("   ", ValidationMode::Strict).violated("empty"));

  CHECK(validate_prefix("I am so very tired of this", ValidationMode::Strict).violated("missing_terminal_punctuation"));
  CHECK(validate_prefix("Wait, are you seriously telling me this?!", ValidationMode::Strict)
            .violated("multiple_terminal_punctuation"));
  CHECK(validate_prefix("I am upset. This is really bad!", ValidationMode::Strict).violated("internal_sentence_break"));
  CHECK(validate_prefix("I am upset\nabout this whole thing.", ValidationMode::Strict).violated("line_break"));
  CHECK(validate_prefix("A well-known, long-winded, self-made mess here.", ValidationMode::Strict).word_count == 6);
  CHECK(validate_prefix("This is far far far far far too many words now.", ValidationMode::Strict).violated("word_count"));
  CHECK(validate_prefix("Ugh, this whole scenario is just grossing me out already.", ValidationMode::Lenient).pass);

  const auto j = anger.to_json();
  CHECK(j.at("pass") == true);
  CHECK(j.at("word_count") == 7);
}

TEST_CASE("validation reports every violated rule") {
  const auto r = validate_prefix("Hi?!", ValidationMode::Strict);
  CHECK(r.violated("multiple_terminal_punctuation"));
  CHECK(r.violated("word_count"));
  CHECK(r.violations.size() == 2);
}

TEST_CASE("generation request follows the prompt contract") {
  const auto q = savings_question();
  const ChatRequest a = build_generation_request(Emotion::Anger, q);
  const ChatRequest b = build_generation_request(Emotion::Anger, q);
  CHECK(a == b);
  REQUIRE(a.messages.size() == 2);
  CHECK(a.messages[0].role == "system");
  CHECK(a.messages[0].content == generation_system_message());
  CHECK(a.messages[0].content.find("Length: 5--8 words.") != std::string::npos);
  CHECK(a.messages[1].role == "user");
  CHECK(a.messages[1].content.find("EMOTION_LABEL: ANGER\n") == 0);
  CHECK(a.messages[1].content.find(kSavingsBlock) != std::string::npos);
  CHECK(a.messages[1].content.find("Return only valid JSON with key \"prepended_sentence\".") != std::string::npos);
  CHECK(a.decoding.temperature == 0.0);
}

TEST_CASE("prepended layout matches the full-prompt example") {
  const auto q = savings_question();
  CHECK(neutral_prompt(q).full_text == kSavingsBlock);
  const EmotionPrefix disgust{"Ugh, this whole scenario is just grossing me out already.", Emotion::Disgust,
                              PrefixSource::Generated, std::nullopt};
  const auto p = inject(q, disgust, InsertPosition::Prepended);
  CHECK(p.full_text == "Ugh, this whole scenario is just grossing me out already.\n" + kSavingsBlock);
  CHECK(p.emotion == Emotion::Disgust);
  CHECK(p.baseline_text() == kSavingsBlock);
}

TEST_CASE("mid and appended positions") {
  const auto q = savings_question();
  const EmotionPrefix fear{"I'm seriously freaking out about this decision!", Emotion::Fear, PrefixSource::Generated,
                           std::nullopt};
  const auto mid = inject(q, fear, InsertPosition::Mid);
  CHECK(mid.full_text.find("end of the year. I'm seriously freaking out about this decision! After looking") !=
        std::string::npos);
  const auto app = inject(q, fear, InsertPosition::Appended);
  CHECK(app.full_text.find("save money is to\nI'm seriously freaking out about this decision!\nA: make more") !=
        std::string::npos);

  QuestionInstance single;
  single.id = "s";
  single.question_text = "What is two plus two?";
  CHECK(inject(single, fear, InsertPosition::Mid).full_text ==
        inject(single, fear, InsertPosition::Prepended).full_text);
  CHECK(inject(single, fear, InsertPosition::Mid).position == InsertPosition::Mid);
}

TEST_CASE("injection is reversible and position-neutral") {
  std::vector<QuestionInstance> qs{savings_question()};
  for (const auto& q : testutil::numeric_instances(5, "rev")) qs.push_back(q);
  QuestionInstance with_passage = savings_question();
  with_passage.passage = "Budgets matter. Saving is hard.";
  qs.push_back(with_passage);
  for (const auto& q : qs) {
    const std::string base = neutral_prompt(q).full_text;
    for (Emotion e : kEmotions) {
      for (Intensity i : kIntensities) {
        const auto prefix = template_prefix(e, i);
        for (InsertPosition pos : kPositions) {
          const auto p = inject(q, prefix, pos);
          CHECK(p.baseline_text() == base);
          CHECK(p.full_text.substr(p.insert_offset, p.insert_length).find(prefix.text) != std::string::npos);
        }
        // Prepended and appended keep the prefix on its own line.
        CHECK(lines_without(inject(q, prefix, InsertPosition::Prepended).full_text, prefix.text) ==
              lines_without(inject(q, prefix, InsertPosition::Appended).full_text, prefix.text));
      }
    }
  }
}

TEST_CASE("inject rejects invalid prefixes with the rule name") {
  const auto q = savings_question();
  const EmotionPrefix bad{"no punctuation here", Emotion::Anger, PrefixSource::Human, std::nullopt};
  try {
    inject(q, bad, InsertPosition::Prepended);
    FAIL("expected PrefixRejected");
  } catch (const PrefixRejected& e) {
    CHECK(std::string(e.what()).find("missing_terminal_punctuation") != std::string::npos);
  }
  CHECK_THROWS_AS(inject(q, EmotionPrefix{"", Emotion::Anger, PrefixSource::Human, std::nullopt},
                         InsertPosition::Mid),
                  PrefixRejected);
}

TEST_CASE("human prefix files") {
  TempDir dir;
  testutil::write_text(dir / "h.jsonl",
                       R"({"instance_id":"medqa-0","emotion":"FEAR","text":"I'm really worried about this medical situation."})"
                       "\n"
                       R"({"instance_id":"medqa-0","emotion":"joy","text":"Yay."})"
                       "\n"
                       R"({"instance_id":"medqa-0","emotion":"ANGER","text":"First."})"
                       "\n"
                       R"({"instance_id":"medqa-0","emotion":"ANGER","text":"I'm frustrated by this ethical dilemma in medical practice."})"
                       "\n");
  const auto h = load_human_prefixes(dir / "h.jsonl");
  const auto fear = h.store.find("medqa-0", Emotion::Fear);
  REQUIRE(fear.has_value());
  CHECK(fear->source == PrefixSource::Human);
  CHECK(fear->text == "I'm really worried about this medical situation.");
  CHECK(h.unknown_emotion == 1);
  CHECK(h.duplicates == 1);
  CHECK(h.store.find("medqa-0", Emotion::Anger)->text ==
        "I'm frustrated by this ethical dilemma in medical practice.");
  CHECK(h.missing.size() == 4);
  CHECK(h.warnings.size() == 1);

  testutil::write_text(dir / "empty.jsonl", "");
  CHECK(load_human_prefixes(dir / "empty.jsonl").store.size() == 0);

  std::string full;
  for (int i = 0; i < 250; ++i) {
    for (Emotion e : kEmotions) {
      full += nlohmann::json{{"instance_id", "q" + std::to_string(i)},
                             {"emotion", std::string(to_string(e))},
                             {"text", "I feel " + std::string(adjective(e)) + " about question " + std::to_string(i) + "."}}
                  .dump() +
              "\n";
    }
  }
  testutil::write_text(dir / "full.jsonl", full);
  const auto complete = load_human_prefixes(dir / "full.jsonl");
  CHECK(complete.store.size() == 1500);
  CHECK(complete.missing.empty());
}

TEST_CASE("prefix store round trip keeps invalid entries out of lookups") {
  TempDir dir;
  PrefixStore store;
  store.put(PrefixEntry{"a", Emotion::Fear, "I am absolutely terrified right now.", PrefixSource::Generated, true, {}});
  store.put(PrefixEntry{"a", Emotion::Anger, "", PrefixSource::Generated, false, {"missing key"}});
  store.save(dir / "p.jsonl");
  const auto loaded = PrefixStore::load(dir / "p.jsonl");
  CHECK(loaded.size() == 2);
  CHECK(loaded.find("a", Emotion::Fear).has_value());
  CHECK_FALSE(loaded.find("a", Emotion::Anger).has_value());
  CHECK(loaded.to_jsonl() == store.to_jsonl());
}
