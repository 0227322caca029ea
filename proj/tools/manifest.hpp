#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sonotrack::cli {

/// Record of one command invocation. Written to <out>/manifest.json when the
/// directory is usable, otherwise to stderr, on success and on failure alike.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_config(const std::map<std::string, std::string>& effective) { config_ = effective; }
  void add_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
  void add_input(const std::filesystem::path& p) { inputs_.push_back(p.string()); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }
  void set_out_dir(const std::filesystem::path& dir) { out_dir_ = dir; }
  void note(const std::string& key, const std::string& value) { notes_[key] = value; }

  /// Serializes with the final status and returns the JSON text.
  std::string finish(int exit_code, const std::string& error);
  /// Writes the manifest; falls back to stderr when the out dir is unusable.
  void write(int exit_code, const std::string& error);

 private:
  std::string command_;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::string> inputs_, outputs_;
  std::map<std::string, std::string> notes_;
  std::filesystem::path out_dir_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_;
};

}  // namespace sonotrack::cli
