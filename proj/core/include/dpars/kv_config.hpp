#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace dpars {

/// Flat `key = value` configuration with `#` comments. Used for every config
/// file the tools read; command-line flags overlay on top of a loaded file.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(const std::string& text, const std::string& source = "<string>");
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  /// Later entries win.
  void merge(const KvConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  std::string to_text() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::string source_ = "<string>";
};

}  // namespace dpars
