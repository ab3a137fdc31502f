#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cslearn {

// ============================================================================
// Flat `key = value` config files. `#` starts a comment. Every key must be
// consumed by the loader; unknown keys are a hard error (fail fast on typos).
// ============================================================================

class ConfigFile {
 public:
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": expected 'key = value'");
      }
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
      }
      if (cfg.values_.count(key)) {
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                    key + "'");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
      throw std::invalid_argument(origin_ + ": missing required key '" + key + "'");
    }
    used_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    return parse_double(key, it->second);
  }

  int get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    return parse_int(key, it->second);
  }

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw std::invalid_argument(origin_ + ": key '" + key + "' is not a seed: '" + it->second +
                                  "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument(origin_ + ": key '" + key + "' is not a bool: '" + it->second +
                                "'");
  }

  /// Comma-separated doubles, e.g. `gamma_sweep = 0.1,0.2,0.3`.
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::istringstream in(it->second);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(parse_double(key, trim(cell)));
    return out;
  }

  /// Errors out if any key was never consumed by a getter.
  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) unknown.push_back(key);
    }
    if (!unknown.empty()) {
      std::string msg = origin_ + ": unknown key(s):";
      for (const auto& k : unknown) msg += " '" + k + "'";
      throw std::invalid_argument(msg);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  }

  double parse_double(const std::string& key, const std::string& value) const {
    const char* begin = value.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
      throw std::invalid_argument(origin_ + ": key '" + key + "' is not a number: '" + value +
                                  "'");
    }
    return v;
  }

  int parse_int(const std::string& key, const std::string& value) const {
    try {
      std::size_t pos = 0;
      int v = std::stoi(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin_ + ": key '" + key + "' is not an integer: '" + value +
                                  "'");
    }
  }

  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace cslearn
