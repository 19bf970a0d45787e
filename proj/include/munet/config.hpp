#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "munet/core.hpp"

namespace munet {

// Flat key=value configuration: file values first, command-line overrides on
// top. echo() serializes the effective configuration with sorted keys so a
// run directory records exactly what it ran with.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::size_t start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line[start] == '#') continue;
      std::size_t eq = line.find('=', start);
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = line.substr(start, eq - start);
      std::string val = line.substr(eq + 1);
      auto trim = [](std::string& s) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        s = (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
      };
      trim(key);
      trim(val);
      if (key.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      cfg.values[key] = val;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values[key] = value; }
  bool has(const std::string& key) const { return values.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
      std::size_t pos = 0;
      long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + s);
  }

  // Comma-separated list of doubles.
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stod(item, &pos));
        if (pos != item.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad list element: " + item);
      }
    }
    if (out.empty())
      throw ConfigError("config key '" + key + "': empty list");
    return out;
  }

  std::string echo() const {
    std::ostringstream os;
    for (const auto& [k, v] : values) os << k << '=' << v << '\n';
    return os.str();
  }
};

// Output directory resolution: absolute paths win; otherwise relative to
// $MUNET_RUN_DIR when set, else to the working directory.
inline std::string resolve_run_dir(const std::string& out_flag,
                                   const std::string& fallback_name) {
  namespace fs = std::filesystem;
  std::string name = out_flag.empty() ? fallback_name : out_flag;
  fs::path p(name);
  if (p.is_absolute()) return p.string();
  const char* base = std::getenv("MUNET_RUN_DIR");
  if (base && *base) return (fs::path(base) / p).string();
  return p.string();
}

}  // namespace munet
