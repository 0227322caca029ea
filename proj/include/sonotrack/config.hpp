#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace sonotrack {

/// Plain-text key=value settings. Lines starting with '#' are comments.
/// Every getter records the value it returned (default or explicit), so the
/// effective configuration can be echoed into a run manifest.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  /// Throws Error(kBadConfig) on malformed lines or duplicate keys.
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);

  /// Keys present in the input that no getter asked for.
  std::set<std::string> unused_keys() const;
  const std::map<std::string, std::string>& effective() const { return effective_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> effective_;
};

}  // namespace sonotrack
