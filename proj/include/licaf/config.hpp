#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace licaf {

/// Flat key=value configuration. Lines are `key = value`, '#' starts a
/// comment, blank lines are ignored. Keys are kept in sorted order so that
/// serialization is canonical.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }

  static Config from_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: line " + std::to_string(lineno) + " has no '=': " + t);
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty()) throw std::runtime_error("config: empty key on line " + std::to_string(lineno));
      cfg.kv_[key] = val;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  void set(const std::string& key, const std::string& val) { kv_[key] = val; }
  void set_int(const std::string& key, long v) { kv_[key] = std::to_string(v); }
  void set_real(const std::string& key, double v) {
    char buf[64];
    snprintf(buf, sizeof(buf), "%.12g", v);
    kv_[key] = buf;
  }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }
  std::string require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
    return it->second;
  }

  long get_int(const std::string& key, long dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    return parse_int(key, it->second);
  }

  double get_real(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::runtime_error("config: key '" + key + "' is not a number: " + it->second);
    return v;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: " + v);
  }

  std::vector<long> get_int_list(const std::string& key, std::vector<long> dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<long> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(parse_int(key, item));
    }
    return out;
  }

  /// Keys whose values differ between the two configs (present-vs-absent counts).
  std::vector<std::string> diff_keys(const Config& other) const {
    std::vector<std::string> keys;
    for (const auto& [k, v] : kv_) {
      auto it = other.kv_.find(k);
      if (it == other.kv_.end() || it->second != v) keys.push_back(k);
    }
    for (const auto& [k, v] : other.kv_)
      if (!kv_.count(k)) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << to_string();
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static long parse_int(const std::string& key, const std::string& s) {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::runtime_error("config: key '" + key + "' is not an integer: " + s);
    return v;
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace licaf
