#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace emoprompt {

/// Parses the TOML subset used by run configs into a JSON object:
/// [table] and [dotted.table] headers, dotted keys, basic and literal strings,
/// integers, floats, booleans, arrays (may span lines) and inline tables.
/// Throws ConfigError with a line number on malformed input.
nlohmann::json parse_toml(const std::string& text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace emoprompt
