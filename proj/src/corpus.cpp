#include "emoprompt/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"
#include "emoprompt/text_util.hpp"

namespace emoprompt {

#include "builtin_adapters.inc"

using nlohmann::json;

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  const std::string t = to_lower(trim(text));
  if (t == "train") return Split::Train;
  if (t == "test") return Split::Test;
  throw ConfigError("unknown split '" + text + "'");
}

TaskKind TaskKind::multiple_choice(std::vector<std::string> labels) {
  std::set<std::string> distinct(labels.begin(), labels.end());
  if (labels.size() < 2 || distinct.size() != labels.size()) {
    throw ConfigError("multiple-choice task needs at least two distinct option labels");
  }
  return TaskKind(Variant::MultipleChoice, std::move(labels));
}

bool TaskKind::admits(const std::string& canonical_label) const {
  if (variant_ == Variant::NumericExact) return canonical_number(canonical_label).has_value();
  return std::find(labels_.begin(), labels_.end(), canonical_label) != labels_.end();
}

std::string state_text(const QuestionInstance& instance) {
  if (instance.passage && instance.state_mode == StateTextMode::PassageAndQuestion) {
    return *instance.passage + "\n" + instance.question_text;
  }
  return instance.question_text;
}

// ---- adapters --------------------------------------------------------------

namespace {

TaskKind::Variant parse_kind(const std::string& s) {
  if (s == "numeric") return TaskKind::Variant::NumericExact;
  if (s == "mcq") return TaskKind::Variant::MultipleChoice;
  if (s == "boolean") return TaskKind::Variant::Boolean;
  throw ConfigError("unknown task kind '" + s + "'");
}

std::optional<std::string> opt_string(const json& obj, const char* key) {
  if (auto it = obj.find(key); it != obj.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

DatasetAdapter parse_adapter(const std::string& name, const json& spec) {
  DatasetAdapter a;
  a.name = name;
  a.kind = parse_kind(spec.value("kind", "numeric"));
  a.id_field = opt_string(spec, "id");
  a.question_field = spec.value("question", "question");
  a.passage_field = opt_string(spec, "passage");
  a.options_field = opt_string(spec, "options");
  if (auto it = spec.find("option_fields"); it != spec.end()) {
    a.option_fields = it->get<std::vector<std::string>>();
  }
  a.answer_field = spec.value("answer", "answer");
  a.answer_format = spec.value("answer_format", "plain");
  static const std::set<std::string> kFormats{"gsm8k", "plain", "boolean", "index0", "index1"};
  if (!kFormats.count(a.answer_format)) {
    throw ConfigError("dataset '" + name + "': unknown answer_format '" + a.answer_format + "'");
  }
  a.split_field = opt_string(spec, "split");
  a.default_split = parse_split(spec.value("default_split", "test"));
  const std::string mode = spec.value("state_text", "passage_question");
  if (mode == "passage_question") {
    a.state_mode = StateTextMode::PassageAndQuestion;
  } else if (mode == "question_only") {
    a.state_mode = StateTextMode::QuestionOnly;
  } else {
    throw ConfigError("dataset '" + name + "': unknown state_text mode '" + mode + "'");
  }
  if (a.kind == TaskKind::Variant::MultipleChoice && !a.options_field && a.option_fields.empty()) {
    throw ConfigError("dataset '" + name + "': multiple-choice adapter needs options");
  }
  return a;
}

std::string label_for_index(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

}  // namespace

AdapterMap AdapterMap::from_json(const json& doc) {
  AdapterMap map;
  if (!doc.is_object() || !doc.contains("datasets") || !doc.contains("version")) {
    throw ConfigError("adapter map needs 'version' and 'datasets'");
  }
  map.version_ = doc.at("version").get<int>();
  for (const auto& [name, spec] : doc.at("datasets").items()) {
    map.adapters_.emplace(name, parse_adapter(name, spec));
  }
  return map;
}

AdapterMap AdapterMap::builtin() {
  static const AdapterMap map = from_json(json::parse(kBuiltinAdapters));
  return map;
}

AdapterMap AdapterMap::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

const DatasetAdapter& AdapterMap::at(const std::string& dataset) const {
  auto it = adapters_.find(dataset);
  if (it == adapters_.end()) {
    throw ConfigError("unknown dataset '" + dataset + "'");
  }
  return it->second;
}

std::vector<std::string> AdapterMap::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : adapters_) out.push_back(name);
  return out;
}

json LoadReport::to_json() const {
  return json{{"read", read}, {"loaded", loaded}, {"skipped", skipped}, {"missing_gold", missing_gold}};
}

// ---- loading ---------------------------------------------------------------

namespace {

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  return {};
}

std::vector<Option> parse_options(const json& record, const DatasetAdapter& a) {
  std::vector<Option> options;
  if (!a.option_fields.empty()) {
    for (std::size_t i = 0; i < a.option_fields.size(); ++i) {
      auto it = record.find(a.option_fields[i]);
      if (it == record.end() || !it->is_string()) return {};
      options.push_back({label_for_index(i), it->get<std::string>()});
    }
    return options;
  }
  auto it = record.find(*a.options_field);
  if (it == record.end()) return {};
  const json& v = *it;
  if (v.is_object() && v.contains("label") && v.contains("text")) {
    const auto& labels = v.at("label");
    const auto& texts = v.at("text");
    if (!labels.is_array() || !texts.is_array() || labels.size() != texts.size()) return {};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      options.push_back({to_upper(trim(scalar_text(labels[i]))), scalar_text(texts[i])});
    }
  } else if (v.is_object()) {
    for (const auto& [label, text] : v.items()) {
      options.push_back({to_upper(trim(label)), scalar_text(text)});
    }
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_object() && v[i].contains("label")) {
        options.push_back({to_upper(trim(scalar_text(v[i]["label"]))), scalar_text(v[i].value("text", json()))});
      } else {
        options.push_back({label_for_index(i), scalar_text(v[i])});
      }
    }
  }
  return options;
}

std::optional<std::string> boolean_label(const std::string& raw) {
  const std::string t = to_lower(trim(raw));
  if (t == "yes" || t == "true") return "yes";
  if (t == "no" || t == "false") return "no";
  return std::nullopt;
}

std::optional<std::string> parse_gold(const json& record, const DatasetAdapter& a, const TaskKind& kind,
                                      const std::vector<Option>& options) {
  auto it = record.find(a.answer_field);
  if (it == record.end() || it->is_null()) return std::nullopt;
  std::string raw = scalar_text(*it);
  if (raw.empty()) return std::nullopt;

  std::optional<std::string> gold;
  if (a.answer_format == "gsm8k") {
    const auto mark = raw.rfind("####");
    gold = canonical_number(mark == std::string::npos ? raw : raw.substr(mark + 4));
  } else if (a.answer_format == "index0" || a.answer_format == "index1") {
    const auto idx = canonical_number(raw);
    if (!idx || idx->find('.') != std::string::npos || idx->front() == '-') return std::nullopt;
    long long i = std::stoll(*idx) - (a.answer_format == "index1" ? 1 : 0);
    if (i < 0 || static_cast<std::size_t>(i) >= options.size()) return std::nullopt;
    gold = options[static_cast<std::size_t>(i)].label;
  } else if (kind.variant() == TaskKind::Variant::Boolean) {
    gold = boolean_label(raw);
  } else if (kind.variant() == TaskKind::Variant::NumericExact) {
    gold = canonical_number(raw);
  } else {
    gold = to_upper(trim(raw));
  }
  if (gold && !kind.admits(*gold)) return std::nullopt;
  return gold;
}

/// nullopt means the record is malformed and must be skipped.
std::optional<QuestionInstance> parse_record(const json& record, const DatasetAdapter& a, std::size_t line_no) {
  if (!record.is_object()) return std::nullopt;
  auto q = record.find(a.question_field);
  if (q == record.end() || !q->is_string() || trim(q->get<std::string>()).empty()) return std::nullopt;

  QuestionInstance inst;
  inst.dataset = a.name;
  inst.question_text = q->get<std::string>();
  inst.state_mode = a.state_mode;
  inst.split = a.default_split;
  if (a.split_field) {
    if (auto s = record.find(*a.split_field); s != record.end() && s->is_string()) {
      try {
        inst.split = parse_split(s->get<std::string>());
      } catch (const ConfigError&) {
        return std::nullopt;
      }
    }
  }
  if (a.passage_field) {
    if (auto p = record.find(*a.passage_field); p != record.end() && p->is_string()) {
      inst.passage = p->get<std::string>();
    }
  }
  switch (a.kind) {
    case TaskKind::Variant::NumericExact:
      inst.kind = TaskKind::numeric_exact();
      break;
    case TaskKind::Variant::Boolean:
      inst.kind = TaskKind::boolean();
      break;
    case TaskKind::Variant::MultipleChoice: {
      inst.options = parse_options(record, a);
      std::vector<std::string> labels;
      for (const auto& o : inst.options) labels.push_back(o.label);
      try {
        inst.kind = TaskKind::multiple_choice(labels);
      } catch (const ConfigError&) {
        return std::nullopt;
      }
      break;
    }
  }
  std::string id;
  if (a.id_field) {
    if (auto f = record.find(*a.id_field); f != record.end()) id = scalar_text(*f);
  }
  if (id.empty()) {
    id = a.name + "-" + to_string(inst.split) + "-" + std::to_string(line_no);
  }
  inst.id = id;
  inst.gold = parse_gold(record, a, inst.kind, inst.options);
  return inst;
}

}  // namespace

LoadResult load_dataset(const std::filesystem::path& path, const std::string& dataset, const AdapterMap& adapters) {
  const DatasetAdapter& adapter = adapters.at(dataset);
  const std::string text = read_text_file(path);

  LoadResult result;
  std::set<std::pair<Split, std::string>> seen;
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(text)) {
    ++line_no;
    ++result.report.read;
    std::optional<QuestionInstance> inst;
    if (!trim(line).empty()) {
      try {
        inst = parse_record(json::parse(line), adapter, line_no);
      } catch (const json::exception&) {
        inst.reset();
      }
    }
    if (!inst || !seen.emplace(inst->split, inst->id).second) {
      ++result.report.skipped;
      continue;
    }
    ++result.report.loaded;
    if (!inst->has_gold()) ++result.report.missing_gold;
    result.instances.push_back(std::move(*inst));
  }
  return result;
}

json to_adapter_record(const QuestionInstance& inst, const DatasetAdapter& a) {
  json rec = json::object();
  if (a.id_field) rec[*a.id_field] = inst.id;
  rec[a.question_field] = inst.question_text;
  if (a.passage_field && inst.passage) rec[*a.passage_field] = *inst.passage;
  if (a.split_field) rec[*a.split_field] = to_string(inst.split);
  if (!a.option_fields.empty()) {
    for (std::size_t i = 0; i < a.option_fields.size() && i < inst.options.size(); ++i) {
      rec[a.option_fields[i]] = inst.options[i].text;
    }
  } else if (a.options_field) {
    json opts = json::object();
    for (const auto& o : inst.options) opts[o.label] = o.text;
    rec[*a.options_field] = opts;
  }
  if (inst.gold) {
    const std::string& g = *inst.gold;
    if (a.answer_format == "gsm8k") {
      rec[a.answer_field] = "#### " + g;
    } else if (a.answer_format == "index0" || a.answer_format == "index1") {
      for (std::size_t i = 0; i < inst.options.size(); ++i) {
        if (inst.options[i].label == g) {
          rec[a.answer_field] = static_cast<long long>(i) + (a.answer_format == "index1" ? 1 : 0);
        }
      }
    } else if (a.answer_format == "boolean") {
      rec[a.answer_field] = g == "yes";
    } else {
      rec[a.answer_field] = g;
    }
  }
  return rec;
}

}  // namespace emoprompt
