#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace avp {

/// `key = value` lines; `#` starts a comment. Keys are unique.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming any key outside `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_string() const;

 private:
  std::string where(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> entries_;
  std::map<std::string, int> lines_;
};

}  // namespace avp
