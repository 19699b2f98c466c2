#pragma once

// Declarative key-value configuration files.
//
//   # comment
//   include base.cfg          (path relative to the including file)
//   train.policy_steps = 2000
//
// Later assignments override earlier ones, so a file can include a base
// and then override selected keys.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace covert {

class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::filesystem::path& path);
  static KeyValueConfig from_string(const std::string& text,
                                    const std::filesystem::path& base_dir = ".");

  void set(const std::string& key, const std::string& value);
  /// Applies "key=value" overrides in order.
  void apply_overrides(const std::vector<std::string>& assignments);
  void merge(const KeyValueConfig& other);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Sorted "key = value" lines.
  std::string canonical() const;
  /// FNV-1a 64 of the canonical text, as 16 hex digits.
  std::string hash() const;

 private:
  void parse(const std::string& text, const std::filesystem::path& base_dir,
             std::vector<std::filesystem::path>& stack);
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& text);
std::string hex64(std::uint64_t v);

// Typed conversions with ConfigError on malformed text.
double parse_double(const std::string& key, const std::string& text);
std::int64_t parse_int(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<int> parse_int_list(const std::string& key, const std::string& text);
std::vector<double> parse_double_list(const std::string& key, const std::string& text);

std::string format_double(double v);
template <typename T>
std::string format_list(const std::vector<T>& v);

}  // namespace covert
