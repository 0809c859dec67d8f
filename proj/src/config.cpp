#include "fehmm/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace fehmm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
      return false;
  return k.find("..") == std::string::npos;
}

double plain_double(const std::string& key, const std::string& v) {
  if (v.empty()) throw ConfigError(key + ": empty number");
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError(key + ": '" + v + "' is not a number");
  return d;
}

}  // namespace

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  const auto slash = v.find('/');
  if (slash == std::string::npos) return plain_double(key, v);
  const double num = plain_double(key, trim(v.substr(0, slash)));
  const double den = plain_double(key, trim(v.substr(slash + 1)));
  if (den == 0.0) throw ConfigError(key + ": zero denominator in '" + v + "'");
  return num / den;
}

int parse_int(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  errno = 0;
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE ||
      n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max())
    throw ConfigError(key + ": '" + v + "' is not an integer");
  return static_cast<int>(n);
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section))
        throw ConfigError(where + "bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(where + "bad key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    if (c.values_.count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
    c.set(key, value);
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str(), path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("bad key '" + key + "'");
  // normalize list spacing so the canonical text does not depend on layout
  const auto items = split_list(trim(value));
  std::string v;
  for (std::size_t i = 0; i < items.size(); ++i) v += (i ? ", " : "") + items[i];
  values_[key] = v;
}

const std::string& Config::raw(const std::string& key) const { return values_.at(key); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_double(key, raw(key)) : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
  return has(key) ? parse_int(key, raw(key)) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = raw(key);
  errno = 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v.front() == '-' || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError(key + ": '" + v + "' is not an unsigned integer");
  return n;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? parse_bool(key, raw(key)) : fallback;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  auto items = split_list(raw(key));
  for (const auto& s : items)
    if (s.empty()) throw ConfigError(key + ": empty list item");
  return items;
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_strings(key, {})) out.push_back(parse_double(key, s));
  return out;
}

std::vector<int> Config::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& s : get_strings(key, {})) out.push_back(parse_int(key, s));
  return out;
}

void Config::require_known(const std::set<std::string>& known) const {
  for (const auto& [k, v] : values_)
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string Config::hash() const { return fnv1a_hex(canonical()); }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fehmm
