#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace emoprompt {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over the target, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Splits on '\n'; a trailing newline does not produce an empty final line.
std::vector<std::string> split_lines(const std::string& text);

std::string to_jsonl(const std::vector<nlohmann::json>& records);

}  // namespace emoprompt
