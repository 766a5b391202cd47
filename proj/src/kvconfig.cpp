#include "nvcs/kvconfig.hpp"

#include <fstream>
#include <sstream>

namespace nvcs {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvFile KvFile::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path.string());
}

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
  KvFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.values_.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
    kv.values_[key] = value;
  }
  return kv;
}

std::string KvFile::get_string(const std::string& key, const std::string& fallback) {
  auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  notices_.push_back("notice: " + origin_ + ": " + key + " defaulted to \"" + fallback + "\"");
  return fallback;
}

int KvFile::get_int(const std::string& key, int fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    notices_.push_back("notice: " + origin_ + ": " + key + " defaulted to " + std::to_string(fallback));
    return fallback;
  }
  try {
    std::size_t used = 0;
    int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key " + key + " is not an integer: " + it->second);
  }
}

double KvFile::get_double(const std::string& key, double fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    notices_.push_back("notice: " + origin_ + ": " + key + " defaulted to " + std::to_string(fallback));
    return fallback;
  }
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key " + key + " is not a number: " + it->second);
  }
}

bool KvFile::get_bool(const std::string& key, bool fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    notices_.push_back("notice: " + origin_ + ": " + key + " defaulted to " +
                       std::string(fallback ? "true" : "false"));
    return fallback;
  }
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(origin_ + ": key " + key + " is not a boolean: " + it->second);
}

std::uint64_t KvFile::get_u64(const std::string& key, std::uint64_t fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    notices_.push_back("notice: " + origin_ + ": " + key + " defaulted to " + std::to_string(fallback));
    return fallback;
  }
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key " + key + " is not an unsigned integer: " + it->second);
  }
}

void KvFile::require_known_keys(const std::set<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (!allowed.count(key)) throw ConfigError(origin_ + ": unknown key " + key);
  }
}

}  // namespace nvcs
