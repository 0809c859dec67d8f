#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace fehmm {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` text. '#' starts a comment, `[name]` prefixes the
// following keys with `name.`, lists are comma separated. Keys are unique.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key) { values_.erase(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  // Throws ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  // Sorted `key = value` lines; the hash is taken over this text.
  std::string canonical() const;
  std::string hash() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  const std::string& raw(const std::string& key) const;
};

// Value parsers shared with the CLI. Numbers accept a/b fractions.
double parse_double(const std::string& key, const std::string& value);
int parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace fehmm
