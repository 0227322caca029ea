#include "sonotrack/config.hpp"

#include <sstream>

#include "sonotrack/error.hpp"
#include "sonotrack/scandata.hpp"

namespace sonotrack {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key)) {
      throw Error(ErrorCode::kBadConfig, "line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    cfg.values_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw Error(ErrorCode::kBadConfig, "cannot read config " + path.string());
    throw;
  }
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  const auto it = values_.find(key);
  const std::string v = it == values_.end() ? fallback : it->second;
  effective_[key] = v;
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    effective_[key] = format_double(fallback);
    return fallback;
  }
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (it->second.empty() || *end != '\0') {
    throw Error(ErrorCode::kBadConfig, key + ": '" + it->second + "' is not a number");
  }
  effective_[key] = it->second;
  return v;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) {
  const double v = get_double(key, fallback);
  if (v != static_cast<int>(v)) throw Error(ErrorCode::kBadConfig, key + " must be an integer");
  effective_[key] = std::to_string(static_cast<int>(v));
  return static_cast<int>(v);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    effective_[key] = std::to_string(fallback);
    return fallback;
  }
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    effective_[key] = it->second;
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kBadConfig, key + ": '" + it->second + "' is not an unsigned integer");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    effective_[key] = fallback ? "true" : "false";
    return fallback;
  }
  const std::string& v = it->second;
  bool out;
  if (v == "true" || v == "1" || v == "yes") {
    out = true;
  } else if (v == "false" || v == "0" || v == "no") {
    out = false;
  } else {
    throw Error(ErrorCode::kBadConfig, key + ": '" + v + "' is not a boolean");
  }
  effective_[key] = out ? "true" : "false";
  return out;
}

std::set<std::string> KeyValueConfig::unused_keys() const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!effective_.count(k)) out.insert(k);
  }
  return out;
}

}  // namespace sonotrack
