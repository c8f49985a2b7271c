#include "emoprompt/text_util.hpp"

#include <cctype>

namespace emoprompt {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) words.emplace_back(s.substr(start, i - start));
  }
  return words;
}

bool is_terminal_punct(char c) { return c == '.' || c == '?' || c == '!'; }

std::optional<std::string> canonical_number(std::string_view s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == ',' || c == '$' || is_space(c)) continue;
    // UTF-8 euro (E2 82 AC) and pound (C2 A3)
    if (static_cast<unsigned char>(c) == 0xE2 && s.substr(i, 3) == "\xE2\x82\xAC") {
      i += 2;
      continue;
    }
    if (static_cast<unsigned char>(c) == 0xC2 && s.substr(i, 2) == "\xC2\xA3") {
      i += 1;
      continue;
    }
    cleaned.push_back(c);
  }
  if (cleaned.empty()) return std::nullopt;

  bool negative = false;
  std::size_t pos = 0;
  if (cleaned[0] == '+' || cleaned[0] == '-') {
    negative = cleaned[0] == '-';
    pos = 1;
  }
  std::string int_part;
  std::string frac_part;
  bool seen_dot = false;
  for (; pos < cleaned.size(); ++pos) {
    const char c = cleaned[pos];
    if (is_digit(c)) {
      (seen_dot ? frac_part : int_part).push_back(c);
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (int_part.empty() && frac_part.empty()) return std::nullopt;

  std::size_t nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out = "-" + out;
  return out;
}

}  // namespace emoprompt
