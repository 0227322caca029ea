#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "settings.hpp"
#include "sonotrack/error.hpp"
#include "sonotrack/eval.hpp"
#include "sonotrack/scandata.hpp"

namespace sonotrack::cli {
namespace {

KeyValueConfig load_config(const Options& o, RunManifest& m) {
  if (!o.config) return {};
  if (!fs::exists(*o.config)) throw UsageError("config file not found: " + o.config->string());
  m.add_input(*o.config);
  return KeyValueConfig::load(*o.config);
}

void finish_config(KeyValueConfig& cfg, RunManifest& m) {
  m.set_config(cfg.effective());
  reject_unknown_keys(cfg);
}

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
  }
}

/// A path holding meta.json is one scan; otherwise every such subdirectory is.
std::vector<fs::path> expand_scans(const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw UsageError("no --scan given");
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    require(p, "scan");
    if (fs::exists(p / "meta.json")) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && fs::exists(e.path() / "meta.json")) found.push_back(e.path());
    }
    if (found.empty()) throw UsageError("no scan directories under " + p.string());
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

fs::path single_scan(const Options& o) {
  const auto scans = expand_scans(o.scans);
  if (scans.size() != 1) throw UsageError("expected exactly one scan, got " + std::to_string(scans.size()));
  return scans.front();
}

MotionEstimator open_model(const Options& o, RunManifest& m) {
  if (!o.model) throw UsageError("no --model given");
  require(*o.model, "model checkpoint");
  m.add_input(*o.model);
  return load_checkpoint(*o.model);
}

ForwardOptions forward_options(const Options& o) {
  ForwardOptions f;
  f.zero_accel_branch = o.zero_accel_branch;
  f.zero_euler_input = o.zero_euler_input;
  return f;
}

void write_text(const fs::path& path, const std::string& text, RunManifest& m) {
  write_file(path, text);
  m.add_output(path);
}

std::string theta_csv(const nn::Matrix& theta) {
  std::string s = "step,tx_mm,ty_mm,tz_mm,phi_x_deg,phi_y_deg,phi_z_deg\n";
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    s += std::to_string(j + 1);
    for (int r = 0; r < 6; ++r) s += "," + format_double(theta(r, j));
    s += "\n";
  }
  return s;
}

std::vector<Pose> inferred_poses(const MotionEstimator& model, const ScanSequence& scan,
                                 const ForwardOptions& f) {
  const auto steps = model.predict(make_inputs(scan), f);
  return chain_trajectory(Pose::identity(), steps).poses;
}

/// Rigidly moves an estimate so its first frame coincides with the reference's.
std::vector<Pose> align_first(const std::vector<Pose>& est, const Pose& first) {
  if (est.front().rotation == first.rotation && est.front().translation == first.translation) return est;
  const Pose t = compose(first, inverse(est.front()));
  std::vector<Pose> out;
  out.reserve(est.size());
  for (const auto& p : est) out.push_back(compose(t, p));
  return out;
}

void check_lengths(const std::string& label, std::size_t poses, int frames) {
  if (static_cast<int>(poses) != frames) {
    throw Error(ErrorCode::kLengthMismatch, label + " has " + std::to_string(poses) +
                                                " poses but the scan has " + std::to_string(frames) +
                                                " frames");
  }
}

}  // namespace

int cmd_simulate(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  DatasetSpec spec = dataset_settings(cfg);
  finish_config(cfg, m);
  if (!o.style.empty()) {
    const auto style = parse_style(o.style);
    if (!style) throw UsageError("unknown trajectory style '" + o.style + "'");
    spec.styles = {*style};
    m.note("trajectory", o.style);
  }
  if (o.count < 1) throw UsageError("--count must be at least 1");
  m.add_seed("dataset", o.seed);
  make_out_dir(o.out);
  generate_dataset(spec, o.count, o.seed, [&](int k, ScanSequence&& scan) {
    const auto problems = validate(scan);
    if (!problems.empty()) throw Error(ErrorCode::kInvalidScan, problems.front());
    char name[32];
    std::snprintf(name, sizeof name, "scan_%04d", k);
    save_scan(scan, o.out / name);
    m.add_output(o.out / name);
  });
  std::cout << "wrote " << o.count << " scans to " << o.out.string() << "\n";
  return kOk;
}

int cmd_train(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  const auto paths = expand_scans(o.scans);
  std::vector<ScanSequence> scans;
  for (const auto& p : paths) {
    scans.push_back(load_scan(p));
    m.add_input(p);
    if (!scans.back().gt) throw Error(ErrorCode::kNoGroundTruth, "scan " + p.string() + " has no ground truth");
  }
  const ScanSequence& first = scans.front();
  const ModelConfig mc = model_settings(cfg, first.frames.height, first.frames.width, o.seed);
  const TrainConfig tc = train_settings(cfg, o.seed);
  finish_config(cfg, m);
  m.add_seed("model", o.seed);
  m.add_seed("train", o.seed);
  make_out_dir(o.out);
  const fs::path model_path = o.model ? *o.model : o.out / "model.ckpt";

  MotionEstimator model(mc);
  std::string history = "epoch,learning_rate,total,mae,pearson\n";
  int code = kOk;
  try {
    train(model, scans, tc, [&](const EpochRecord& r) {
      history += std::to_string(r.epoch) + "," + format_double(r.learning_rate) + "," +
                 format_double(r.loss.total) + "," + format_double(r.loss.mae) + "," +
                 format_double(r.loss.pearson) + "\n";
      std::cout << "epoch " << r.epoch << " loss " << r.loss.total << "\n";
    });
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDivergence) throw;
    std::cerr << e.what() << "; keeping the last good parameters\n";
    m.note("divergence", e.what());
    code = kDiverged;
  }
  save_checkpoint(model, model_path);
  m.add_output(model_path);
  write_text(o.out / "history.csv", history, m);
  return code;
}

int cmd_infer(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  finish_config(cfg, m);
  const MotionEstimator model = open_model(o, m);
  const fs::path scan_path = single_scan(o);
  ScanSequence scan = load_scan(scan_path);
  m.add_input(scan_path);
  scan.gt.reset();
  make_out_dir(o.out);
  const auto steps = model.predict(make_inputs(scan), forward_options(o));
  write_text(o.out / "theta.csv", theta_csv(to_matrix(steps)), m);
  const auto poses = chain_trajectory(Pose::identity(), steps).poses;
  write_pose_csv(poses, o.out / "trajectory.csv");
  m.add_output(o.out / "trajectory.csv");
  return kOk;
}

int cmd_adapt(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  OnlineConfig oc = online_settings(cfg);
  finish_config(cfg, m);
  if (o.iterations) {
    oc.iterations = *o.iterations;
    m.note("iterations", std::to_string(oc.iterations));
  }
  if (oc.iterations < 0) throw UsageError("--iterations must be non-negative");
  MotionEstimator model = open_model(o, m);
  const fs::path scan_path = single_scan(o);
  ScanSequence scan = load_scan(scan_path);
  m.add_input(scan_path);
  scan.gt.reset();  // adaptation is self-supervised; ground truth is never available to it
  make_out_dir(o.out);

  std::vector<LossReport> history;
  int code = kOk;
  try {
    history = adapt_online(model, scan, oc);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDivergence) throw;
    std::cerr << e.what() << "; keeping the starting parameters\n";
    m.note("divergence", e.what());
    code = kDiverged;
  }
  save_checkpoint(model, o.out / "adapted.ckpt");
  m.add_output(o.out / "adapted.ckpt");
  std::string csv = "iteration,total,accel_pearson,euler_mae\n";
  for (std::size_t k = 0; k < history.size(); ++k) {
    csv += std::to_string(k) + "," + format_double(history[k].total) + "," +
           format_double(history[k].accel_pearson) + "," + format_double(history[k].euler_mae) + "\n";
  }
  write_text(o.out / "online_history.csv", csv, m);
  return code;
}

int cmd_evaluate(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  finish_config(cfg, m);
  const fs::path scan_path = single_scan(o);
  const ScanSequence scan = load_scan(scan_path);
  m.add_input(scan_path);
  if (!scan.gt) throw Error(ErrorCode::kNoGroundTruth, "scan " + scan_path.string() + " has no ground truth");
  if (o.trajectories.empty() && !o.model) throw UsageError("give --trajectory files or --model");

  const TrajectoryEstimate gt{scan.gt->poses};
  const FrameGeometry geo{scan.frames.height, scan.frames.width, scan.meta.pixel_spacing};
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& t : o.trajectories) {
    require(t, "trajectory");
    m.add_input(t);
    const auto poses = read_pose_csv(t);
    check_lengths("trajectory " + t.string(), poses.size(), scan.size());
    rows.emplace_back(t.filename().string(),
                      compute_metrics(TrajectoryEstimate{align_first(poses, gt.poses.front())}, gt, geo));
  }
  if (o.model) {
    const MotionEstimator model = open_model(o, m);
    ScanSequence blind = scan;
    blind.gt.reset();
    const auto poses = inferred_poses(model, blind, forward_options(o));
    std::string label = "model";
    if (o.zero_accel_branch) label += "+zero_accel_branch";
    if (o.zero_euler_input) label += "+zero_euler_input";
    rows.emplace_back(label, compute_metrics(TrajectoryEstimate{align_first(poses, gt.poses.front())}, gt, geo));
  }

  make_out_dir(o.out);
  std::string csv = "label," + metrics_csv_header() + "\n";
  for (const auto& [label, r] : rows) {
    csv += label + "," + metrics_csv_row(r) + "\n";
    std::cout << label << ": " << metrics_pretty(r) << "\n";
  }
  write_text(o.out / "metrics.csv", csv, m);
  return kOk;
}

int cmd_reconstruct(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  const double voxel = cfg.get_double("voxel_spacing", 0.3);
  finish_config(cfg, m);
  const fs::path scan_path = single_scan(o);
  const ScanSequence scan = load_scan(scan_path);
  m.add_input(scan_path);

  std::vector<Pose> poses;
  std::string source;
  if (!o.trajectories.empty()) {
    if (o.trajectories.size() != 1) throw UsageError("reconstruct takes one --trajectory");
    require(o.trajectories.front(), "trajectory");
    m.add_input(o.trajectories.front());
    poses = read_pose_csv(o.trajectories.front());
    source = "trajectory";
  } else if (o.model) {
    const MotionEstimator model = open_model(o, m);
    ScanSequence blind = scan;
    blind.gt.reset();
    poses = inferred_poses(model, blind, forward_options(o));
    source = "model";
  } else {
    if (!scan.gt) throw Error(ErrorCode::kNoGroundTruth, "no --trajectory or --model and the scan has no ground truth");
    poses = scan.gt->poses;
    source = "ground_truth";
  }
  check_lengths("trajectory", poses.size(), scan.size());
  m.note("pose_source", source);

  const CompoundedVolume v = compound_volume(scan.frames, poses, scan.meta.pixel_spacing, voxel);
  make_out_dir(o.out);
  std::string raw(v.voxels.size() * sizeof(float), '\0');
  std::memcpy(raw.data(), v.voxels.data(), raw.size());
  write_text(o.out / "volume.raw", raw, m);
  nlohmann::ordered_json dims;
  dims["nx"] = v.nx;
  dims["ny"] = v.ny;
  dims["nz"] = v.nz;
  dims["dtype"] = "float32";
  dims["byte_order"] = "little";
  dims["layout"] = "x fastest, then y, then z";
  dims["spacing_mm"] = v.spacing;
  dims["origin_mm"] = {v.origin.x(), v.origin.y(), v.origin.z()};
  dims["pose_source"] = source;
  write_text(o.out / "volume.json", dims.dump(2) + "\n", m);
  return kOk;
}

int cmd_plot(const Options& o, RunManifest& m) {
  KeyValueConfig cfg = load_config(o, m);
  const std::string column = cfg.get_string("column", "total");
  finish_config(cfg, m);
  if (o.histories.empty()) throw UsageError("give one or more --history files");
  std::ostringstream gp;
  gp << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set xlabel 'iteration'\n"
     << "set ylabel '" << column << "'\n"
     << "set terminal pngcairo size 900,600\n"
     << "set output '" << fs::absolute(o.out / "decline.png").string() << "'\n"
     << "plot ";
  for (std::size_t i = 0; i < o.histories.size(); ++i) {
    require(o.histories[i], "history");
    m.add_input(o.histories[i]);
    gp << (i ? ", \\\n     " : "") << "'" << fs::absolute(o.histories[i]).string() << "' using 1:'" << column
       << "' with lines title '" << o.histories[i].stem().string() << "'";
  }
  gp << "\n";
  make_out_dir(o.out);
  write_text(o.out / "decline.gp", gp.str(), m);
  return kOk;
}

}  // namespace sonotrack::cli
