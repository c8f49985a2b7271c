#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace emoprompt {

/// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

/// First eight bytes of SHA-256(data), big-endian.
std::uint64_t sha256_u64(std::string_view data);

/// Compact JSON with sorted keys; stable input for content hashes.
std::string canonical_json(const nlohmann::json& value);

std::string hash_json(const nlohmann::json& value);

}  // namespace emoprompt
