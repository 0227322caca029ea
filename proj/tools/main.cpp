#include <CLI11.hpp>
#include <exception>
#include <functional>
#include <iostream>

#include "commands.hpp"
#include "sonotrack/error.hpp"

using namespace sonotrack;
using namespace sonotrack::cli;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kChecksumMismatch:
      return kIoFailure;
    case ErrorCode::kDivergence:
      return kDiverged;
    case ErrorCode::kFormatVersionMismatch:
      return kVersionMismatch;
    default:
      return kBadInput;
  }
}

int run(const std::string& name, const Options& o, const std::function<int(const Options&, RunManifest&)>& fn) {
  RunManifest manifest(name);
  manifest.set_out_dir(o.out);
  int code = kOk;
  std::string message;
  try {
    code = fn(o, manifest);
  } catch (const Error& e) {
    code = exit_code_for(e.code());
    message = e.what();
  } catch (const UsageError& e) {
    code = kBadInput;
    message = e.what();
  } catch (const std::exception& e) {
    code = kIoFailure;
    message = e.what();
  }
  if (!message.empty()) std::cerr << "error: " << message << "\n";
  manifest.write(code, message);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory estimation for freehand ultrasound sweeps with IMU fusion"};
  app.require_subcommand(1);
  Options o;
  std::string config;
  std::string model;

  struct Spec {
    const char* name;
    const char* help;
    int (*fn)(const Options&, RunManifest&);
  };
  const Spec specs[] = {
      {"simulate", "Generate synthetic scans", cmd_simulate},
      {"train", "Train a model on scans with ground truth", cmd_train},
      {"infer", "Estimate the trajectory of a scan", cmd_infer},
      {"adapt", "Self-supervised refinement of a model on one scan", cmd_adapt},
      {"evaluate", "Drift metrics of trajectories against ground truth", cmd_evaluate},
      {"reconstruct", "Compound a scan into a voxel volume", cmd_reconstruct},
      {"plot", "Write a gnuplot script for loss decline curves", cmd_plot},
  };
  std::string chosen;
  int (*chosen_fn)(const Options&, RunManifest&) = nullptr;
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config, "key=value settings file");
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--seed", o.seed, "Random seed");
    const std::string n = s.name;
    if (n != "simulate" && n != "plot") sub->add_option("--scan", o.scans, "Scan directory, or a directory of scans");
    if (n != "simulate" && n != "plot") sub->add_option("--model", model, "Model checkpoint");
    if (n == "simulate") {
      sub->add_option("--count", o.count, "Number of scans");
      sub->add_option("--trajectory", o.style, "Restrict to one style: linear, curved, fast_and_slow, loop");
    }
    if (n == "evaluate" || n == "reconstruct") {
      sub->add_option("--trajectory", o.trajectories, "Pose CSV file");
    }
    if (n == "adapt") sub->add_option("--iterations", o.iterations, "Adaptation steps");
    if (n == "infer" || n == "evaluate" || n == "reconstruct") {
      sub->add_flag("--zero-accel-branch", o.zero_accel_branch, "Ablation: drop the acceleration feature");
      sub->add_flag("--zero-euler-input", o.zero_euler_input, "Ablation: feed zeros to the Euler branch");
    }
    if (n == "plot") sub->add_option("--history", o.histories, "Loss history CSV")->required();
    sub->callback([&chosen, &chosen_fn, s] {
      chosen = s.name;
      chosen_fn = s.fn;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  }
  if (!config.empty()) o.config = config;
  if (!model.empty()) o.model = model;
  return run(chosen, o, chosen_fn);
}
