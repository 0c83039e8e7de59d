#pragma once

// UTF-8 line-based "key = value" files with optional "[section]" blocks whose
// lines are kept verbatim. '#' starts a comment line.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "d2sm/error.hpp"

namespace d2sm {

struct KvFile {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::vector<std::string>> sections;

  std::optional<std::string> find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    return std::nullopt;
  }

  std::string get(const std::string& key) const {
    auto v = find(key);
    if (!v) throw FormatError("missing key '" + key + "'");
    return *v;
  }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries)
      if (k == key) {
        v = std::move(value);
        return;
      }
    entries.emplace_back(key, std::move(value));
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline KvFile parse_kv(const std::string& text, const std::string& source = "<text>") {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      kv.sections[section];
      continue;
    }
    if (!section.empty()) {
      kv.sections[section].push_back(t);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    auto key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw FormatError(source + ":" + std::to_string(lineno) + ": empty key");
    kv.set(key, detail::trim(t.substr(eq + 1)));
  }
  return kv;
}

inline KvFile read_kv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str(), path.string());
}

inline std::string format_kv(const KvFile& kv) {
  std::string out;
  for (const auto& [k, v] : kv.entries) out += k + " = " + v + "\n";
  for (const auto& [name, lines] : kv.sections) {
    out += "[" + name + "]\n";
    for (const auto& l : lines) out += l + "\n";
  }
  return out;
}

inline void write_kv(const KvFile& kv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << format_kv(kv);
  if (!out) throw IoError("write failed: " + path.string());
}

// Round-trippable number formatting and strict parsing.

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& s, const std::string& key) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw FormatError("key '" + key + "': cannot parse '" + s + "' as a number");
  return value;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw FormatError("key '" + key + "': cannot parse '" + s + "' as a boolean");
}

}  // namespace d2sm
