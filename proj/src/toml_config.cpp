#include "emoprompt/toml_config.hpp"

#include <cctype>
#include <charconv>
#include <set>

#include "emoprompt/errors.hpp"
#include "emoprompt/io.hpp"

namespace emoprompt {

using nlohmann::json;

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++i_;
        if (peek() == '[') fail("arrays of tables are not supported");
        skip_ws();
        std::vector<std::string> path = parse_key_path();
        skip_ws();
        expect(']');
        std::string dotted;
        for (const auto& k : path) dotted += (dotted.empty() ? "" : ".") + k;
        if (!headers_.insert(dotted).second) fail("table [" + dotted + "] defined twice");
        table = &descend(root, path, true);
      } else {
        std::vector<std::string> path = parse_key_path();
        skip_ws();
        expect('=');
        skip_ws();
        json value = parse_value();
        const std::string last = path.back();
        path.pop_back();
        json& target = descend(*table, path, false);
        if (target.contains(last)) fail("duplicate key '" + last + "'");
        target[last] = std::move(value);
      }
      end_of_line();
    }
    return root;
  }

 private:
  const std::string& s_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> headers_;

  bool eof() const { return i_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[i_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++i_;
    }
  }

  void newline() {
    if (peek() == '\r') ++i_;
    if (peek() == '\n') {
      ++i_;
      ++line_;
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        newline();
      } else {
        break;
      }
    }
  }

  // Whitespace, comments and newlines inside arrays and inline tables.
  void skip_space_multiline() { skip_blank_lines(); }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n' && peek() != '\r') fail("unexpected trailing characters");
    newline();
  }

  std::string parse_key() {
    if (peek() == '"') return parse_basic_string();
    if (peek() == '\'') return parse_literal_string();
    std::string key;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) {
      key += s_[i_++];
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> path{parse_key()};
    skip_ws();
    while (peek() == '.') {
      ++i_;
      skip_ws();
      path.push_back(parse_key());
      skip_ws();
    }
    return path;
  }

  json& descend(json& from, const std::vector<std::string>& path, bool header) {
    json* cur = &from;
    for (const auto& k : path) {
      if (!cur->contains(k)) (*cur)[k] = json::object();
      cur = &(*cur)[k];
      if (!cur->is_object()) fail("key '" + k + "' is not a table");
    }
    (void)header;
    return *cur;
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = s_[i_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      char e = s_[i_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': {
          if (i_ + 4 > s_.size()) fail("short \\u escape");
          unsigned cp = 0;
          auto [p, ec] = std::from_chars(s_.data() + i_, s_.data() + i_ + 4, cp, 16);
          if (ec != std::errc() || p != s_.data() + i_ + 4) fail("bad \\u escape");
          i_ += 4;
          json tmp = json::parse("\"\\u" + s_.substr(i_ - 4, 4) + "\"");
          out += tmp.get<std::string>();
          (void)cp;
          break;
        }
        default:
          fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string parse_literal_string() {
    expect('\'');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = s_[i_++];
      if (c == '\'') break;
      out += c;
    }
    return out;
  }

  json parse_array() {
    expect('[');
    json arr = json::array();
    while (true) {
      skip_space_multiline();
      if (peek() == ']') {
        ++i_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_space_multiline();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      skip_space_multiline();
      expect(']');
      return arr;
    }
  }

  json parse_inline_table() {
    expect('{');
    json obj = json::object();
    skip_ws();
    if (peek() == '}') {
      ++i_;
      return obj;
    }
    while (true) {
      skip_ws();
      std::vector<std::string> path = parse_key_path();
      skip_ws();
      expect('=');
      skip_ws();
      json value = parse_value();
      const std::string last = path.back();
      path.pop_back();
      json& target = descend(obj, path, false);
      if (target.contains(last)) fail("duplicate key '" + last + "'");
      target[last] = std::move(value);
      skip_ws();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      expect('}');
      return obj;
    }
  }

  json parse_scalar_word() {
    std::string word;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string("+-._").find(peek()) != std::string::npos)) {
      word += s_[i_++];
    }
    if (word == "true") return true;
    if (word == "false") return false;
    if (word.empty()) fail("expected a value");
    std::string digits;
    for (char c : word) {
      if (c != '_') digits += c;
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                          digits == "+inf" || digits == "-inf" || digits == "nan";
    const char* b = digits.data() + (digits.front() == '+' ? 1 : 0);
    const char* e = digits.data() + digits.size();
    if (is_float) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) fail("invalid number '" + word + "'");
      return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("invalid value '" + word + "'");
    return v;
  }

  json parse_value() {
    switch (peek()) {
      case '"':
        return parse_basic_string();
      case '\'':
        return parse_literal_string();
      case '[':
        return parse_array();
      case '{':
        return parse_inline_table();
      default:
        return parse_scalar_word();
    }
  }
};

}  // namespace

json parse_toml(const std::string& text) { return Parser(text).parse(); }

json load_toml(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  return parse_toml(read_text_file(path));
}

}  // namespace emoprompt
