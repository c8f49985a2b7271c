#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emoprompt {

std::string trim(std::string_view s);
std::string to_upper(std::string_view s);
std::string to_lower(std::string_view s);

/// Whitespace-delimited tokens; hyphenated words stay one token.
std::vector<std::string> split_words(std::string_view s);

/// Canonical decimal form of a numeric answer: commas, whitespace and currency
/// symbols stripped, no leading '+', no redundant leading or trailing zeros
/// ("18.0" -> "18", "-0" -> "0"). Returns nullopt when the text is not a number.
std::optional<std::string> canonical_number(std::string_view s);

bool is_terminal_punct(char c);

}  // namespace emoprompt
