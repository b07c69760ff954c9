// Copyright 2026 The szilard-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Flat "key = value" text with optional [section] headers and '#' comments.
// Keys are addressed as "section.key" (or just "key" before any section).
// Every entry remembers its source line so validation errors can point at it.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace szilard {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, std::size_t line, const std::string& message)
      : std::runtime_error(format(field, line, message)), field_(std::move(field)), line_(line) {}

  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& field, std::size_t line, const std::string& message) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  std::string field_;
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses a double with std::from_chars; the whole token must be consumed.
inline std::optional<double> parse_double(std::string_view text) {
  text = detail::trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view text) {
  text = detail::trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

/// Shortest representation that round-trips through parse_double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile out;
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("", line_no, "unterminated section header");
        section = std::string(detail::trim(line.substr(1, line.size() - 2)));
        if (section.empty()) throw ConfigError("", line_no, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("", line_no, "expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) throw ConfigError("", line_no, "missing key before '='");
      const std::string full = section.empty() ? key : section + "." + key;
      if (out.entries_.contains(full)) throw ConfigError(full, line_no, "duplicate key");
      out.entries_[full] = Entry{std::string(detail::trim(line.substr(eq + 1))), line_no};
      out.order_.push_back(full);
    }
    return out;
  }

  static KeyValueFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", 0, "cannot open '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::vector<std::string>& keys() const { return order_; }

  /// Marks keys as consumed; `unknown_keys` reports the rest.
  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    used_[key] = true;
    return &it->second;
  }

  std::size_t line_of(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
      if (!used_.contains(k)) out.push_back(k);
    }
    return out;
  }

  std::optional<std::string> get_string(const std::string& key) const {
    const Entry* e = find(key);
    if (e == nullptr) return std::nullopt;
    return e->value;
  }

  std::optional<double> get_double(const std::string& key) const {
    const Entry* e = find(key);
    if (e == nullptr) return std::nullopt;
    const auto v = parse_double(e->value);
    if (!v) throw ConfigError(key, e->line, "expected a number, got '" + e->value + "'");
    return v;
  }

  std::optional<long long> get_integer(const std::string& key) const {
    const Entry* e = find(key);
    if (e == nullptr) return std::nullopt;
    const auto v = parse_integer(e->value);
    if (!v) throw ConfigError(key, e->line, "expected an integer, got '" + e->value + "'");
    return v;
  }

  std::optional<bool> get_bool(const std::string& key) const {
    const Entry* e = find(key);
    if (e == nullptr) return std::nullopt;
    if (e->value == "true" || e->value == "on" || e->value == "yes" || e->value == "1") return true;
    if (e->value == "false" || e->value == "off" || e->value == "no" || e->value == "0") return false;
    throw ConfigError(key, e->line, "expected on/off, got '" + e->value + "'");
  }

  /// Comma- or whitespace-separated list of numbers.
  std::optional<std::vector<double>> get_double_list(const std::string& key) const {
    const Entry* e = find(key);
    if (e == nullptr) return std::nullopt;
    std::vector<double> out;
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const auto v = parse_double(token);
      if (!v) throw ConfigError(key, e->line, "bad list element '" + token + "'");
      out.push_back(*v);
      token.clear();
    };
    for (char c : e->value) {
      if (c == ',' || c == ' ' || c == '\t') {
        flush();
      } else {
        token.push_back(c);
      }
    }
    flush();
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  mutable std::map<std::string, bool> used_;
};

}  // namespace szilard
