#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tsasr {

/// Flat textual key-value record, one `key = value` per line, `#` comments.
/// Used for config files and checkpoint sidecars. Keys keep insertion order;
/// setting an existing key replaces its value in place.
class KvRecord {
 public:
  static KvRecord parse(std::string_view text, const std::string& origin = "<text>");
  static KvRecord load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, double value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;

  // Typed getters throw ConfigError naming the key on a missing or malformed value.
  std::string get_string(const std::string& key) const { return get(key); }
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Copies every entry of `other` whose key starts with `prefix`, stripping it.
  KvRecord section(const std::string& prefix) const;
  /// Adds all entries of `other` under `prefix`.
  void merge(const KvRecord& other, const std::string& prefix = "");

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_double(double v);

}  // namespace tsasr
