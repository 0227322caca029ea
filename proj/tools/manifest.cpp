#include "manifest.hpp"

#include <ctime>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

namespace sonotrack::cli {
namespace {

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest::RunManifest(std::string command)
    : command_(std::move(command)),
      started_(std::chrono::system_clock::now()),
      clock_(std::chrono::steady_clock::now()) {}

std::string RunManifest::finish(int exit_code, const std::string& error) {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["version"] = SONOTRACK_VERSION;
  j["started"] = iso_time(started_);
  j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
  j["exit_code"] = exit_code;
  j["status"] = exit_code == 0 ? "ok" : "failed";
  if (!error.empty()) j["error"] = error;
  j["config"] = config_;
  j["seeds"] = seeds_;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  if (!notes_.empty()) j["notes"] = notes_;
  return j.dump(2) + "\n";
}

void RunManifest::write(int exit_code, const std::string& error) {
  const std::string text = finish(exit_code, error);
  if (!out_dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    std::ofstream out(out_dir_ / "manifest.json", std::ios::binary);
    if (out && (out << text)) return;
  }
  std::cerr << text;
}

}  // namespace sonotrack::cli
