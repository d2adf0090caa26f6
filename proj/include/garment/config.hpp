#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "garment/error.hpp"
#include "garment/rng.hpp"

namespace garment {

/// Sectioned key-value config text:
///   [simulator]
///   gravity = 981.0   # comment
/// Unknown sections/keys are kept; consumers pull what they need.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(const std::string& text) {
    ConfigMap cfg;
    cfg.raw_ = text;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip_comment(line);
      s = trim(s);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw Error("bad-config", "unterminated section header at line " +
                                         std::to_string(lineno));
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw Error("bad-config",
                    "expected key = value at line " + std::to_string(lineno));
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      if (key.empty())
        throw Error("bad-config", "empty key at line " + std::to_string(lineno));
      cfg.values_[section][key] = val;
    }
    return cfg;
  }

  static ConfigMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback = "") const {
    auto s = values_.find(section);
    if (s == values_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    if (!has(section, key)) return fallback;
    try {
      return std::stod(get(section, key));
    } catch (const std::exception&) {
      throw Error("bad-config", "not a number: [" + section + "] " + key);
    }
  }

  long get_int(const std::string& section, const std::string& key,
               long fallback) const {
    if (!has(section, key)) return fallback;
    try {
      return std::stol(get(section, key));
    } catch (const std::exception&) {
      throw Error("bad-config", "not an integer: [" + section + "] " + key);
    }
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw Error("bad-config", "not a boolean: [" + section + "] " + key);
  }

  /// Hash of the raw config text; reports carry it for reproducibility.
  std::uint64_t hash() const { return fnv1a64(raw_); }

  const std::string& raw() const { return raw_; }

 private:
  static std::string strip_comment(const std::string& s) {
    auto pos = s.find_first_of("#;");
    return pos == std::string::npos ? s : s.substr(0, pos);
  }
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::map<std::string, std::string>> values_;
  std::string raw_;
};

}  // namespace garment
