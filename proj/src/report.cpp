#include "emoprompt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <tuple>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

using RowKey = std::tuple<std::string, std::string, std::string, std::string>;

RowKey key_of(const OutcomeRecord& r) {
  if (r.condition == "baseline") return {"baseline", "", "", ""};
  return {r.condition, r.position, r.intensity, r.source};
}

void apply_deltas(ConditionTable& table) {
  const double base = table.baseline().accuracy;
  for (auto& row : table.rows) row.delta_pp = row.is_baseline() ? 0.0 : 100.0 * (row.accuracy - base);
}

ConditionRow make_row(std::string condition, std::size_t n, double accuracy) {
  ConditionRow row;
  row.condition = std::move(condition);
  row.n = n;
  row.accuracy = accuracy;
  return row;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const ConditionRow& ConditionTable::baseline() const {
  for (const auto& r : rows) {
    if (r.is_baseline()) return r;
  }
  throw ReportError("condition table '" + group + "' has no baseline row");
}

const ConditionRow& ConditionTable::row(const std::string& condition, const std::string& position) const {
  for (const auto& r : rows) {
    if (r.condition == condition && (position.empty() || r.position == position)) return r;
  }
  throw ReportError("condition table has no row for '" + condition + (position.empty() ? "" : "/" + position) + "'");
}

std::string format_fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

ConditionTable tabulate(std::span<const OutcomeRecord> outcomes, const std::string& group) {
  std::map<RowKey, std::vector<int>> buckets;
  std::vector<RowKey> order;
  for (const auto& r : outcomes) {
    const RowKey k = key_of(r);
    auto [it, inserted] = buckets.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(r.correct);
  }
  const RowKey base_key{"baseline", "", "", ""};
  if (!buckets.contains(base_key)) {
    throw ReportError("no baseline outcomes" + (group.empty() ? std::string() : " in group '" + group + "'") +
                      "; deltas are relative to the no-emotion condition");
  }
  std::stable_partition(order.begin(), order.end(), [&](const RowKey& k) { return k == base_key; });

  ConditionTable table;
  table.group = group;
  for (const RowKey& k : order) {
    const auto& values = buckets.at(k);
    ConditionRow row = make_row(std::get<0>(k), values.size(), accuracy(values));
    row.position = std::get<1>(k);
    row.intensity = std::get<2>(k);
    row.source = std::get<3>(k);
    table.rows.push_back(std::move(row));
  }
  apply_deltas(table);
  return table;
}

std::vector<ConditionTable> tabulate_groups(std::span<const OutcomeRecord> outcomes) {
  std::map<std::string, std::vector<OutcomeRecord>> by_group;
  std::vector<std::string> order;
  for (const auto& r : outcomes) {
    auto [it, inserted] = by_group.try_emplace(r.group);
    if (inserted) order.push_back(r.group);
    it->second.push_back(r);
  }
  std::vector<ConditionTable> tables;
  for (const auto& g : order) tables.push_back(tabulate(by_group.at(g), g));
  return tables;
}

ConditionTable compare_adaptive(const RewardDataset& cache, const PolicyParams& params) {
  if (cache.records.empty()) throw ReportError("cannot compare policies on an empty reward cache");
  if (!cache.has_baseline()) throw ReportError("reward cache has no baseline rewards; rebuild it with the baseline enabled");
  const std::size_t n = cache.records.size();
  const std::string position(to_string(cache.position));
  const std::string source(to_string(cache.prefix_source));

  ConditionTable table;
  table.group = cache.dataset;
  table.rows.push_back(make_row("baseline", n, baseline_accuracy(cache)));
  for (Emotion e : kEmotions) {
    ConditionRow row = make_row(std::string(to_string(e)), n, static_accuracy(cache, e));
    row.position = position;
    row.source = source;
    table.rows.push_back(std::move(row));
  }
  ConditionRow avg = make_row("static-average", n, static_average(cache));
  avg.position = position;
  avg.source = source;
  table.rows.push_back(std::move(avg));
  ConditionRow rl = make_row("emotionrl", n, selected_reward(params, cache.records));
  rl.position = position;
  rl.source = source;
  table.rows.push_back(std::move(rl));
  ConditionRow oracle = make_row("oracle", n, oracle_accuracy(cache));
  oracle.position = position;
  oracle.source = source;
  table.rows.push_back(std::move(oracle));
  apply_deltas(table);
  return table;
}

EmitFormat parse_emit_format(const std::string& text) {
  if (text == "csv") return EmitFormat::Csv;
  if (text == "json") return EmitFormat::Json;
  if (text == "plotdata") return EmitFormat::PlotData;
  throw ConfigError("unknown report format '" + text + "' (expected csv, json or plotdata)");
}

std::string to_csv(const ConditionTable& table) {
  std::string out = "condition,position,intensity,source,n,accuracy,delta_pp\n";
  for (const auto& r : table.rows) {
    out += csv_field(r.condition) + "," + csv_field(r.position) + "," + csv_field(r.intensity) + "," +
           csv_field(r.source) + "," + std::to_string(r.n) + "," + format_fixed2(100.0 * r.accuracy) + "," +
           format_fixed2(r.delta_pp) + "\n";
  }
  return out;
}

json to_json(const ConditionTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back(json{{"condition", r.condition}, {"position", r.position}, {"intensity", r.intensity},
                        {"source", r.source},       {"n", r.n},               {"accuracy", r.accuracy},
                        {"delta_pp", r.delta_pp}});
  }
  return json{{"group", table.group}, {"rows", rows}};
}

ConditionTable table_from_json(const json& j) {
  try {
    ConditionTable t;
    t.group = j.value("group", "");
    for (const auto& r : j.at("rows")) {
      ConditionRow row;
      row.condition = r.at("condition").get<std::string>();
      row.position = r.value("position", "");
      row.intensity = r.value("intensity", "");
      row.source = r.value("source", "");
      row.n = r.at("n").get<std::size_t>();
      row.accuracy = r.at("accuracy").get<double>();
      row.delta_pp = r.at("delta_pp").get<double>();
      t.rows.push_back(std::move(row));
    }
    return t;
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed condition table: ") + e.what());
  }
}

json to_plotdata(std::span<const ConditionTable> tables) {
  json out = json::array();
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      if (r.is_baseline()) continue;
      out.push_back(json{{"group", t.group},
                         {"condition", r.condition},
                         {"position", r.position},
                         {"intensity", r.intensity},
                         {"source", r.source},
                         {"delta_pp", r.delta_pp}});
    }
  }
  return out;
}

std::string render(const ConditionTable& table, EmitFormat format) {
  switch (format) {
    case EmitFormat::Csv:
      return to_csv(table);
    case EmitFormat::Json:
      return to_json(table).dump(2) + "\n";
    case EmitFormat::PlotData:
      return to_plotdata(std::span<const ConditionTable>(&table, 1)).dump(2) + "\n";
  }
  return {};
}

void emit(const ConditionTable& table, EmitFormat format, const std::filesystem::path& path) {
  write_file_atomic(path, render(table, format));
}

}  // namespace emoprompt
