#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sks {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat sectioned key-value text:
//
//   # comment
//   [solver]
//   chi = 12.566
//   [noise]
//   f.kind = single_radius
//
// Keys are addressed as "section.key". Every key present in the file must be
// consumed by the reader; leftovers are hard errors, there are no silent
// defaults for unknown keys.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
      const std::string full = section + "." + key;
      if (cfg.values_.count(full))
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + full);
      cfg.values_[full] = value;
    }
    return cfg;
  }

  bool has(const std::string& full_key) const { return values_.count(full_key) > 0; }

  std::string get_string(const std::string& full_key) {
    auto it = values_.find(full_key);
    if (it == values_.end()) throw ConfigError("missing config key: " + full_key);
    consumed_.insert(full_key);
    return it->second;
  }

  std::string get_string_or(const std::string& full_key, const std::string& fallback) {
    if (!has(full_key)) return fallback;
    return get_string(full_key);
  }

  double get_double(const std::string& full_key) {
    return parse_double(get_string(full_key), full_key);
  }

  double get_double_or(const std::string& full_key, double fallback) {
    if (!has(full_key)) return fallback;
    return get_double(full_key);
  }

  long get_int(const std::string& full_key) {
    const std::string s = get_string(full_key);
    try {
      size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + full_key + ": not an integer: '" + s + "'");
    }
  }

  long get_int_or(const std::string& full_key, long fallback) {
    if (!has(full_key)) return fallback;
    return get_int(full_key);
  }

  std::uint64_t get_u64(const std::string& full_key) {
    const std::string s = get_string(full_key);
    try {
      size_t pos = 0;
      const unsigned long long v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing characters");
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("config key " + full_key + ": not an unsigned integer: '" + s + "'");
    }
  }

  std::uint64_t get_u64_or(const std::string& full_key, std::uint64_t fallback) {
    if (!has(full_key)) return fallback;
    return get_u64(full_key);
  }

  // comma separated list of doubles
  std::vector<double> get_double_list(const std::string& full_key) {
    const std::string s = get_string(full_key);
    std::vector<double> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(parse_double(item, full_key));
    }
    return out;
  }

  // unknown keys are hard errors
  void require_all_consumed() const {
    std::vector<std::string> leftover;
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) leftover.push_back(k);
    if (!leftover.empty()) {
      std::string msg = "unknown config key(s):";
      for (const auto& k : leftover) msg += " " + k;
      throw ConfigError(msg);
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;

  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  static double parse_double(const std::string& s, const std::string& key) {
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: '" + s + "'");
    }
  }
};

}  // namespace sks
