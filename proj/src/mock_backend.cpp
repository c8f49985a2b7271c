#include "emoprompt/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "emoprompt/digest.hpp"
#include "emoprompt/errors.hpp"
#include "emoprompt/text_util.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::string condition_label(std::optional<Emotion> emotion) {
  return emotion ? std::string(to_string(*emotion)) : std::string("BASELINE");
}

}  // namespace

std::vector<double> mock_embedding(std::uint64_t seed, std::string_view text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  if (dim == 0) return v;
  if (text.empty()) {
    v[0] = 1.0;
    return v;
  }
  std::uint64_t state = sha256_u64("embed|" + std::to_string(seed) + "|" + std::string(text));
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = 1.0 - unit_from_bits(splitmix64(state));
    const double u2 = unit_from_bits(splitmix64(state));
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::uint64_t mock_skill_hash(std::uint64_t seed, std::string_view instance_id, std::optional<Emotion> emotion) {
  return sha256_u64("skill|" + std::to_string(seed) + "|" + std::string(instance_id) + "|" + condition_label(emotion));
}

double mock_skill_uniform(std::uint64_t seed, std::string_view instance_id, std::optional<Emotion> emotion) {
  return unit_from_bits(mock_skill_hash(seed, instance_id, emotion));
}

// ---- skill rules -----------------------------------------------------------

SkillRule SkillRule::from_json(const json& j) {
  SkillRule r;
  const std::string id = j.value("rule", "");
  if (id == "uniform_p") {
    r.kind = Kind::UniformP;
    r.p = j.value("p", 0.5);
    if (j.contains("modulus")) {
      r.modulus = j.at("modulus").get<std::uint64_t>();
      if (*r.modulus == 0) throw ConfigError("uniform_p modulus must be positive");
    }
  } else if (id == "emotion_linked") {
    r.kind = Kind::EmotionLinked;
    r.baseline_accuracy = j.value("baseline", 0.5);
    if (j.contains("accuracy")) {
      for (const auto& [label, value] : j.at("accuracy").items()) {
        const auto e = parse_emotion(label);
        if (!e) throw ConfigError("emotion_linked: unknown emotion '" + label + "'");
        r.emotion_accuracy[index_of(*e)] = value.get<double>();
      }
    }
  } else if (id == "embedding_linked") {
    r.kind = Kind::EmbeddingLinked;
    r.coordinate = j.value("coordinate", std::size_t{0});
    r.bin_low = j.value("bin_low", -0.3);
    r.bin_high = j.value("bin_high", 0.3);
    r.p_best = j.value("p_best", 1.0);
    r.p_other = j.value("p_other", 0.0);
    r.baseline_accuracy = j.value("baseline", 0.5);
    if (!(r.bin_high > r.bin_low)) throw ConfigError("embedding_linked: bin_high must exceed bin_low");
  } else {
    throw ConfigError("unknown mock skill rule '" + id + "'");
  }
  return r;
}

json SkillRule::to_json() const {
  switch (kind) {
    case Kind::UniformP: {
      json j{{"rule", "uniform_p"}, {"p", p}};
      if (modulus) j["modulus"] = *modulus;
      return j;
    }
    case Kind::EmotionLinked: {
      json acc = json::object();
      for (Emotion e : kEmotions) acc[std::string(emoprompt::to_string(e))] = emotion_accuracy[index_of(e)];
      return json{{"rule", "emotion_linked"}, {"accuracy", acc}, {"baseline", baseline_accuracy}};
    }
    case Kind::EmbeddingLinked:
      return json{{"rule", "embedding_linked"}, {"coordinate", coordinate}, {"bin_low", bin_low},
                  {"bin_high", bin_high},       {"p_best", p_best},         {"p_other", p_other},
                  {"baseline", baseline_accuracy}};
  }
  return {};
}

std::size_t embedding_bin(const SkillRule& rule, const std::vector<double>& embedding) {
  if (rule.coordinate >= embedding.size()) throw ShapeError("embedding_linked coordinate out of range");
  const double x = embedding[rule.coordinate];
  const double t = (x - rule.bin_low) / (rule.bin_high - rule.bin_low) * static_cast<double>(kNumEmotions);
  const double clamped = std::clamp(std::floor(t), 0.0, static_cast<double>(kNumEmotions - 1));
  return static_cast<std::size_t>(clamped);
}

std::optional<MockGeneration> parse_mock_generation(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "valid") return MockGeneration::Valid;
  if (t == "short") return MockGeneration::Short;
  if (t == "missing_key") return MockGeneration::MissingKey;
  if (t == "not_json") return MockGeneration::NotJson;
  return std::nullopt;
}

// ---- client ----------------------------------------------------------------

MockClient::MockClient(MockOptions options) : options_(std::move(options)) {
  for (Emotion e : kEmotions) {
    for (Intensity i : kIntensities) add_prefix(template_prefix(e, i).text, e);
    for (const std::string& s : sentence_bank(e)) add_prefix(s, e);
  }
}

const std::vector<std::string>& MockClient::sentence_bank(Emotion emotion) {
  static const std::array<std::vector<std::string>, kNumEmotions> kBank{{
      {"This is seriously driving me up the wall!", "I am completely fed up with this!",
       "Honestly, this whole thing makes me furious!"},
      {"Ugh, this honestly makes my skin crawl.", "This is utterly revolting to even read.",
       "I am so grossed out right now."},
      {"I am absolutely terrified of getting this wrong.", "My heart is literally pounding right now!",
       "I am seriously panicking about this one."},
      {"I am absolutely thrilled to work on this!", "This literally makes my whole day better!",
       "Wow, I am so incredibly happy today!"},
      {"I feel completely crushed and hopeless today.", "This honestly makes me want to cry.",
       "I am utterly heartbroken about all this."},
      {"Wow, I never expected to see this!", "Wait, this is seriously happening right now?",
       "Whoa, this completely caught me off guard!"},
  }};
  return kBank[index_of(emotion)];
}

void MockClient::add_instances(std::span<const QuestionInstance> instances) {
  for (const auto& inst : instances) {
    const std::string block = render_question_block(inst);
    if (blocks_.count(block)) continue;
    instances_.push_back(inst);
    blocks_.emplace(block, instances_.size() - 1);
  }
}

void MockClient::add_prefix(const std::string& text, Emotion emotion) { prefixes_.emplace(trim(text), emotion); }

void MockClient::add_prefixes(const PrefixStore& store) {
  for (const auto& [_, entry] : store.entries()) add_prefix(entry.text, entry.emotion);
}

MockClient::Identified MockClient::identify(const std::string& prompt) const {
  Identified out;
  auto match = [&](const std::string& remainder, const std::string& removed) {
    auto it = blocks_.find(remainder);
    if (it == blocks_.end()) return false;
    out.instance = &instances_[it->second];
    auto p = prefixes_.find(trim(removed));
    if (p != prefixes_.end()) {
      out.emotion = p->second;
    } else {
      out.unknown_prefix = true;
    }
    return true;
  };

  if (auto it = blocks_.find(prompt); it != blocks_.end()) {
    out.instance = &instances_[it->second];
    return out;
  }

  // Whole-line insertions (prepended or appended).
  std::vector<std::pair<std::size_t, std::size_t>> lines;  // [begin, end)
  std::size_t begin = 0;
  while (true) {
    const std::size_t nl = prompt.find('\n', begin);
    lines.emplace_back(begin, nl == std::string::npos ? prompt.size() : nl);
    if (nl == std::string::npos) break;
    begin = nl + 1;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto [b, e] = lines[i];
    std::string rest = prompt;
    if (i == 0) {
      if (e == prompt.size()) continue;
      rest.erase(0, e + 1);
    } else {
      rest.erase(b - 1, e - b + 1);
    }
    if (match(rest, prompt.substr(b, e - b))) return out;
  }

  // In-line sentence insertions (mid position): "<sentence> " spans inside a line.
  for (const auto& [b, e] : lines) {
    std::vector<std::size_t> starts{b};
    for (std::size_t k = b; k + 1 < e; ++k) {
      if (is_terminal_punct(prompt[k]) && prompt[k + 1] == ' ') starts.push_back(k + 2);
    }
    for (std::size_t s = 1; s < starts.size(); ++s) {
      for (std::size_t t = s + 1; t < starts.size(); ++t) {
        std::string rest = prompt;
        rest.erase(starts[s], starts[t] - starts[s]);
        if (match(rest, prompt.substr(starts[s], starts[t] - starts[s]))) return out;
      }
    }
  }
  return out;
}

bool MockClient::answers_correctly(const QuestionInstance& instance, std::optional<Emotion> emotion) const {
  const SkillRule& rule = options_.skill;
  const double u = mock_skill_uniform(options_.seed, instance.id, emotion);
  switch (rule.kind) {
    case SkillRule::Kind::UniformP:
      if (rule.modulus) return mock_skill_hash(options_.seed, instance.id, emotion) % *rule.modulus == 0;
      return u < rule.p;
    case SkillRule::Kind::EmotionLinked:
      return u < (emotion ? rule.emotion_accuracy[index_of(*emotion)] : rule.baseline_accuracy);
    case SkillRule::Kind::EmbeddingLinked:
      if (!emotion) return u < rule.baseline_accuracy;
      return u < (*emotion == best_emotion(instance) ? rule.p_best : rule.p_other);
  }
  return false;
}

Emotion MockClient::best_emotion(const QuestionInstance& instance) const {
  const auto emb = mock_embedding(options_.seed, state_text(instance), options_.dim);
  return emotion_at(embedding_bin(options_.skill, emb));
}

std::string MockClient::answer(const QuestionInstance& instance, bool correct) const {
  if (!instance.gold) return "Unable to determine.";
  const std::string& gold = *instance.gold;
  std::string reply = gold;
  if (!correct) {
    switch (instance.kind.variant()) {
      case TaskKind::Variant::NumericExact: {
        const bool integral = gold.find('.') == std::string::npos && gold.size() < 18;
        reply = integral ? std::to_string(std::stoll(gold) + 1) : gold + "1";
        break;
      }
      case TaskKind::Variant::Boolean:
        reply = gold == "yes" ? "no" : "yes";
        break;
      case TaskKind::Variant::MultipleChoice: {
        const auto& labels = instance.kind.labels();
        auto it = std::find(labels.begin(), labels.end(), gold);
        const std::size_t i = it == labels.end() ? 0 : static_cast<std::size_t>(it - labels.begin());
        reply = labels[(i + 1) % labels.size()];
        break;
      }
    }
  }
  if (instance.kind.variant() == TaskKind::Variant::MultipleChoice) {
    return "Let me think about each option. The answer is (" + reply + ").";
  }
  return "Let me work through this step by step. The answer is " + reply + ".";
}

std::string MockClient::generate_prefix(const ChatRequest& request) const {
  std::optional<Emotion> emotion;
  std::string question;
  for (const auto& m : request.messages) {
    if (m.role != "user") continue;
    const std::string key = "EMOTION_LABEL: ";
    if (m.content.rfind(key, 0) == 0) {
      const std::size_t eol = m.content.find('\n');
      emotion = parse_emotion(m.content.substr(key.size(), eol - key.size()));
      question = m.content;
      break;
    }
  }
  if (!emotion) return "{\"error\": \"no emotion label\"}";
  const auto& bank = sentence_bank(*emotion);
  const std::uint64_t h = sha256_u64("gen|" + std::to_string(options_.seed) + "|" + question);
  const std::string sentence = bank[h % bank.size()];
  switch (options_.generation) {
    case MockGeneration::Valid:
      return json{{"prepended_sentence", sentence}}.dump();
    case MockGeneration::Short:
      return json{{"prepended_sentence", template_prefix(*emotion, Intensity::Slight).text}}.dump();
    case MockGeneration::MissingKey:
      return json{{"sentence", sentence}}.dump();
    case MockGeneration::NotJson:
      return sentence;
  }
  return {};
}

std::string MockClient::complete(const ChatRequest& request) {
  ++completion_calls_;
  if (!request.messages.empty() && request.messages.front().role == "system" &&
      request.messages.front().content == generation_system_message()) {
    ++generation_calls_;
    return generate_prefix(request);
  }
  std::string prompt;
  for (const auto& m : request.messages) {
    if (m.role == "user") prompt = m.content;
  }
  const Identified id = identify(prompt);
  if (!id.instance || id.unknown_prefix) return "Unable to determine.";
  return answer(*id.instance, answers_correctly(*id.instance, id.emotion));
}

std::vector<double> MockClient::embed(const std::string& text) {
  ++embedding_calls_;
  return mock_embedding(options_.seed, text, options_.dim);
}

std::shared_ptr<MockClient> configure_mock(std::uint64_t seed, const json& skill_rule, MockGeneration generation) {
  MockOptions options;
  options.seed = seed;
  options.skill = SkillRule::from_json(skill_rule);
  options.generation = generation;
  return std::make_shared<MockClient>(std::move(options));
}

}  // namespace emoprompt
