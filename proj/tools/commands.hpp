#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "manifest.hpp"

namespace sonotrack::cli {

namespace fs = std::filesystem;

/// Exit codes shared by every subcommand.
enum Exit : int { kOk = 0, kBadInput = 1, kIoFailure = 2, kDiverged = 3, kVersionMismatch = 4 };

/// Missing or contradictory command-line inputs (exit 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::optional<fs::path> config;
  std::vector<fs::path> scans;
  std::optional<fs::path> model;
  fs::path out;
  std::uint64_t seed = 0;
  std::optional<int> iterations;
  int count = 1;
  std::string style;                    // simulate: restrict to one trajectory style
  std::vector<fs::path> trajectories;   // evaluate, reconstruct: pose CSV files
  std::vector<fs::path> histories;      // plot: loss history CSV files
  bool zero_accel_branch = false;
  bool zero_euler_input = false;
};

int cmd_simulate(const Options& o, RunManifest& m);
int cmd_train(const Options& o, RunManifest& m);
int cmd_infer(const Options& o, RunManifest& m);
int cmd_adapt(const Options& o, RunManifest& m);
int cmd_evaluate(const Options& o, RunManifest& m);
int cmd_reconstruct(const Options& o, RunManifest& m);
int cmd_plot(const Options& o, RunManifest& m);

}  // namespace sonotrack::cli
