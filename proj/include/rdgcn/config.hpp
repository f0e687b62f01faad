#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace rdgcn::config {

/// Flat configuration: one `key = value` per line, keys are dotted names,
/// `%` and `#` start comments, blank lines are ignored. Later assignments win.
class KeyValues {
 public:
  /// Throws ConfigError naming the offending line.
  static KeyValues parse(std::string_view text);
  /// Throws ConfigError when the file cannot be read.
  static KeyValues load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  /// `key=value`; throws ConfigError on a missing `=` or empty key.
  void apply_override(std::string_view assignment);
  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return values_; }

  /// Sorted `key = value` lines; parse(dump()) reproduces the entries.
  std::string dump() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// Typed readers; they throw ConfigError naming the key on malformed values.
double to_double(std::string_view key, std::string_view value);
std::uint64_t to_uint(std::string_view key, std::string_view value);
bool to_bool(std::string_view key, std::string_view value);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

}  // namespace rdgcn::config
