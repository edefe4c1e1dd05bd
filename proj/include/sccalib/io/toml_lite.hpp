#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sccalib/error.hpp"

namespace sccalib::io {

// Reads the TOML subset used by pipeline configs into a JSON object:
// `key = value` pairs, `[table]` / `[a.b]` headers, `#` comments, and values
// that are basic strings, integers, floats, booleans or flat arrays of those.
// Anything else is rejected with the offending line number.
class TomlLite {
 public:
  static nlohmann::json parse(std::string_view text, const std::string& origin = "<config>") {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t eol = std::min(text.find('\n', pos), text.size());
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      Cursor cur{line, 0, origin, line_no};
      cur.skip_space();
      if (cur.done() || cur.peek() == '#') continue;

      if (cur.peek() == '[') {
        ++cur.i;
        table = &root;
        for (;;) {
          cur.skip_space();
          const std::string key = cur.key();
          nlohmann::json& next = (*table)[key];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) throw cur.error("'" + key + "' is not a table");
          table = &next;
          cur.skip_space();
          if (cur.eat('.')) continue;
          if (!cur.eat(']')) throw cur.error("expected ']'");
          break;
        }
        cur.expect_end();
        continue;
      }

      const std::string key = cur.key();
      cur.skip_space();
      if (!cur.eat('=')) throw cur.error("expected '=' after key '" + key + "'");
      cur.skip_space();
      if (table->contains(key)) throw cur.error("duplicate key '" + key + "'");
      (*table)[key] = cur.value();
      cur.expect_end();
    }
    return root;
  }

 private:
  struct Cursor {
    std::string_view s;
    std::size_t i;
    const std::string& origin;
    int line;

    bool done() const { return i >= s.size(); }
    char peek() const { return s[i]; }
    bool eat(char c) {
      if (!done() && s[i] == c) {
        ++i;
        return true;
      }
      return false;
    }
    void skip_space() {
      while (!done() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    }
    ParseError error(const std::string& msg) const {
      return ParseError(origin + ":" + std::to_string(line) + ": " + msg);
    }
    void expect_end() {
      skip_space();
      if (!done() && peek() != '#') throw error("unexpected trailing characters");
    }

    std::string key() {
      if (!done() && peek() == '"') return string();
      const std::size_t start = i;
      while (!done() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-')) ++i;
      if (i == start) throw error("expected a key");
      return std::string(s.substr(start, i - start));
    }

    std::string string() {
      if (!eat('"')) throw error("expected '\"'");
      std::string out;
      while (!done() && peek() != '"') {
        char c = s[i++];
        if (c == '\\') {
          if (done()) break;
          const char e = s[i++];
          switch (e) {
            case 'n': c = '\n'; break;
            case 't': c = '\t'; break;
            case '\\': c = '\\'; break;
            case '"': c = '"'; break;
            default: throw error(std::string("unsupported escape \\") + e);
          }
        }
        out.push_back(c);
      }
      if (!eat('"')) throw error("unterminated string");
      return out;
    }

    nlohmann::json value() {
      if (done()) throw error("missing value");
      if (peek() == '"') return string();
      if (peek() == '[') {
        ++i;
        nlohmann::json arr = nlohmann::json::array();
        skip_space();
        if (eat(']')) return arr;
        for (;;) {
          skip_space();
          arr.push_back(value());
          skip_space();
          if (eat(']')) return arr;
          if (!eat(',')) throw error("expected ',' or ']' in array");
        }
      }
      const std::size_t start = i;
      while (!done() && s[i] != ' ' && s[i] != '\t' && s[i] != '#' && s[i] != ',' && s[i] != ']' && s[i] != '\r') ++i;
      std::string tok(s.substr(start, i - start));
      if (tok == "true") return true;
      if (tok == "false") return false;
      std::string digits;
      for (char c : tok)
        if (c != '_') digits.push_back(c);
      if (digits.empty()) throw error("missing value");
      std::size_t used = 0;
      const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
      try {
        if (is_float) {
          const double v = std::stod(digits, &used);
          if (used == digits.size()) return v;
        } else {
          const long long v = std::stoll(digits, &used, 10);
          if (used == digits.size()) return v;
        }
      } catch (const std::exception&) {
      }
      throw error("cannot parse value '" + tok + "'");
    }
  };
};

}  // namespace sccalib::io
