#include "stereo4p/config.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "stereo4p/error.hpp"
#include "stereo4p/file_util.hpp"

namespace stereo4p {
namespace {

std::string trim(const std::string& s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_file_bytes(path), path.string());
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const int out = std::stoi(*v, &used);
    if (used == v->size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(origin_ + ": " + key + " = '" + *v + "' is not an integer");
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used == v->size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(origin_ + ": " + key + " = '" + *v + "' is not a number");
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError(origin_ + ": " + key + " = '" + *v + "' is not a boolean");
}

std::string KeyValueConfig::require_string(const std::string& key) const {
  const auto v = find(key);
  if (!v) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return *v;
}

int KeyValueConfig::require_int(const std::string& key) const {
  if (!has(key)) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return get_int(key, 0);
}

double KeyValueConfig::require_double(const std::string& key) const {
  if (!has(key)) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return get_double(key, 0.0);
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string KeyValueConfig::str() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace stereo4p
