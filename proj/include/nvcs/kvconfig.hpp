#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nvcs/errors.hpp"

namespace nvcs {

// Flat key=value config file with '#' comments. Consumers declare the keys
// they understand; unknown keys are rejected, missing keys fall back to
// defaults and are reported through `notices`.
class KvFile {
 public:
  KvFile() = default;
  static KvFile parse_file(const std::filesystem::path& path);
  static KvFile parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);

  // Throws ConfigError if any key is outside `allowed`.
  void require_known_keys(const std::set<std::string>& allowed) const;

  const std::vector<std::string>& notices() const { return notices_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::vector<std::string> notices_;
};

}  // namespace nvcs
