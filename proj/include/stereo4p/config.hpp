#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stereo4p {

/// Plain-text `key = value` file: one entry per line, `#` starts a
/// comment, blank lines ignored, later duplicates override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<text>");
  /// Throws IoError if the file cannot be read.
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  /// The get_* accessors throw ConfigError when a present value does not
  /// parse; require_* additionally throw when the key is absent.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string require_string(const std::string& key) const;
  int require_int(const std::string& key) const;
  double require_double(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  std::vector<std::string> keys() const;
  const std::string& origin() const { return origin_; }

  /// Renders entries as `key = value` lines in key order.
  std::string str() const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<text>";
};

}  // namespace stereo4p
