// Acceptance suite: runs the seven criteria and prints one PASS/FAIL line each.
//
//   sonotrack_acceptance [--only A1,A3,...] [--out DIR] [--known-failures A4,...]
//
// A criterion listed in --known-failures still prints FAIL when it fails but
// does not set the exit status; one that passes anyway is reported as such.
//
// A3 trains the shared model (cached as DIR/a3_model.ckpt); A4 and A5 reuse it.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "sonotrack/error.hpp"
#include "sonotrack/eval.hpp"
#include "sonotrack/imu.hpp"
#include "sonotrack/learn.hpp"
#include "sonotrack/scandata.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace sonotrack;
using namespace sonotrack::testing;
using nn::Matrix;
using nn::Vector;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void report(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Experiment settings shared by A3, A4 and A5.

constexpr std::uint64_t kTrainSeed = 1;
constexpr std::uint64_t kTestSeed = 2;
constexpr std::uint64_t kShiftSeed = 3;
constexpr int kTrainScans = 100;
constexpr int kTestScans = 20;

DatasetSpec low_noise_dataset() {
  DatasetSpec d;
  d.scan.trajectory.frame_count = 32;
  d.scan.image_height = d.scan.image_width = 64;
  d.scan.noise = NoiseSpec{20.0, 20.0, 0.1};
  d.phantom_pool = kTrainScans;
  return d;
}

// Faster sweeps than anything seen in training.
DatasetSpec shifted_dataset() {
  DatasetSpec d = low_noise_dataset();
  d.length_min = 40.0;
  d.length_max = 50.0;
  return d;
}

TrainConfig a3_train_config() {
  TrainConfig t;
  t.epochs = 90;
  t.learning_rate = 1e-4;
  t.lr_halving_period = 30;
  t.augmentations_per_scan = 1;
  t.p_inversion = 0.0;
  t.seed = 11;
  return t;
}

ModelConfig a3_model_config() {
  ModelConfig m;
  m.seed = 5;
  return m;
}

struct Context {
  fs::path out;
  std::optional<std::vector<ScanSequence>> train_set, test_set;
  std::optional<MotionEstimator> model;
  Vector mean_theta;

  const std::vector<ScanSequence>& train() {
    if (!train_set) train_set = generate_dataset(low_noise_dataset(), kTrainScans, kTrainSeed);
    return *train_set;
  }
  const std::vector<ScanSequence>& test() {
    if (!test_set) test_set = generate_dataset(low_noise_dataset(), kTestScans, kTestSeed);
    return *test_set;
  }
  const Vector& training_mean() {
    if (mean_theta.size() == 0) {
      mean_theta = Vector::Zero(6);
      Eigen::Index count = 0;
      for (const auto& s : train()) {
        const Matrix th = to_matrix(s.gt->relative());
        mean_theta += th.rowwise().sum();
        count += th.cols();
      }
      mean_theta /= static_cast<double>(count);
    }
    return mean_theta;
  }
  /// Trains once and caches the checkpoint next to the other outputs.
  MotionEstimator& trained_model() {
    if (model) return *model;
    const fs::path ck = out / "a3_model.ckpt";
    if (fs::exists(ck)) {
      model = load_checkpoint(ck);
      std::cout << "  reusing " << ck.string() << "\n";
      return *model;
    }
    model.emplace(a3_model_config());
    std::string history = "epoch,learning_rate,total,mae,pearson\n";
    const auto t0 = std::chrono::steady_clock::now();
    sonotrack::train(*model, train(), a3_train_config(), [&](const EpochRecord& r) {
      history += std::to_string(r.epoch) + "," + format_double(r.learning_rate) + "," +
                 format_double(r.loss.total) + "," + format_double(r.loss.mae) + "," +
                 format_double(r.loss.pearson) + "\n";
      if (r.epoch % 10 == 9) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "  epoch " << r.epoch + 1 << " loss " << fmt(r.loss.total) << " (" << fmt(s, 3) << " s)\n"
                  << std::flush;
      }
    });
    save_checkpoint(*model, ck);
    write_file(out / "a3_history.csv", history);
    return *model;
  }
};

std::vector<Pose> estimate_poses(const MotionEstimator& model, const ScanSequence& scan,
                                 const ForwardOptions& opt = {}) {
  return chain_trajectory(scan.gt->poses.front(), model.predict(make_inputs(scan), opt)).poses;
}

MetricReport metrics_of(const std::vector<Pose>& est, const ScanSequence& scan) {
  const FrameGeometry geo{scan.frames.height, scan.frames.width, scan.meta.pixel_spacing};
  return compute_metrics(TrajectoryEstimate{est}, TrajectoryEstimate{scan.gt->poses}, geo);
}

// ---------------------------------------------------------------------------

Outcome a1_math_kernels(Context&) {
  Outcome o;
  Gen g(101);

  double euler_err = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 a(g.uniform(-180, 180), g.uniform(-89, 89), g.uniform(-180, 180));
    const Vec3 back = matrix_to_euler(euler_to_matrix(EulerAngles(a))).angles.degrees;
    for (int k = 0; k < 3; ++k) euler_err = std::max(euler_err, std::abs(wrap_degrees(back[k] - a[k])));
  }
  o.require(euler_err < 1e-9, "Euler round trip " + fmt(euler_err));

  double pose_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose a = g.pose(), b = g.pose(), c = g.pose();
    pose_err = std::max(pose_err, max_abs_diff(compose(a, inverse(a)), Pose::identity()));
    pose_err = std::max(pose_err, max_abs_diff(compose(compose(a, b), c), compose(a, compose(b, c))) / 100.0);
    pose_err = std::max(pose_err, max_abs_diff(to_pose(from_pose(a)), a));
  }
  o.require(pose_err < 1e-9, "pose algebra " + fmt(pose_err));

  double chain_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Pose> poses{g.pose()};
    for (int i = 0; i < 60; ++i) poses.push_back(compose(poses.back(), to_pose(g.step(1.5, 4.0))));
    const auto steps = relative_steps(poses);
    const auto rebuilt = chain_trajectory(poses.front(), steps);
    for (std::size_t i = 0; i < poses.size(); ++i) chain_err = std::max(chain_err, max_abs_diff(rebuilt.poses[i], poses[i]));
  }
  o.require(chain_err < 1e-6, "composition recovery " + fmt(chain_err));

  double mean_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ImuRecord> recs(40);
    for (auto& r : recs) {
      r.orientation = EulerAngles(g.vec(30.0));
      r.acceleration = g.vec(20000.0);
    }
    const auto acc = preprocess_acceleration(recs);
    Vec3 sum = Vec3::Zero();
    double scale = 0.0;
    for (const auto& a : acc) {
      sum += a;
      scale = std::max(scale, a.cwiseAbs().maxCoeff());
    }
    mean_err = std::max(mean_err, (sum / acc.size()).cwiseAbs().maxCoeff() / scale);
  }
  o.require(mean_err < 1e-12, "zero-mean acceleration " + fmt(mean_err));

  double pearson_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = Matrix::Random(3, 30);
    Matrix y = x;
    for (int r = 0; r < 3; ++r) y.row(r) = g.uniform(0.1, 10.0) * x.row(r).array() + g.uniform(-5, 5);
    pearson_err = std::max({pearson_err, std::abs(pearson_loss(x, x)), std::abs(pearson_loss(x, y))});
  }
  o.require(pearson_err < 1e-12, "Pearson identity/affine " + fmt(pearson_err));

  double const_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const MotionParams step = g.step(1.0, 3.0);
    Matrix th(6, 25);
    for (int j = 0; j < 25; ++j) th.col(j) = to_matrix({step}).col(0);
    const_err = std::max(const_err, estimated_acceleration(th).cwiseAbs().maxCoeff());
  }
  o.require(const_err < 1e-12, "constant velocity acceleration " + fmt(const_err));

  o.report("euler " + fmt(euler_err, 2) + ", pose " + fmt(pose_err, 2) + ", chain " + fmt(chain_err, 2) +
           ", mean " + fmt(mean_err, 2) + ", pearson " + fmt(pearson_err, 2) + ", const " + fmt(const_err, 2));
  return o;
}

Outcome a2_gradients(Context&) {
  Outcome o;
  MotionEstimator model(tiny_config(21));
  perturb(model, 22);
  const ScanSequence scan = tiny_scan(ScanStyle::kFastAndSlow, 6, 8, 23);
  const ScanInputs in = make_inputs(scan);
  const Matrix target = to_matrix(scan.gt->relative());

  auto check = [&](const std::function<double(const Matrix&, Matrix*)>& loss) {
    const Tape tape = model.forward(in);
    Matrix dtheta;
    loss(tape.state.theta, &dtheta);
    const Vector analytic = model.backward(tape, dtheta).values;
    Vector values = model.params().values;
    const double err = max_gradient_error(values, analytic, [&] {
      model.set_parameters(values);
      return loss(model.forward(in).state.theta, nullptr);
    });
    model.set_parameters(values);
    return err;
  };
  const double off = check([&](const Matrix& th, Matrix* g) { return offline_loss(th, target, g).total; });
  const double on = check([&](const Matrix& th, Matrix* g) { return online_loss(th, in.accel, in.euler, g).total; });
  o.require(off < 1e-4, "offline gradient " + fmt(off));
  o.require(on < 1e-4, "online gradient " + fmt(on));
  o.report(std::to_string(model.params().size()) + " parameters, offline " + fmt(off, 3) + ", online " + fmt(on, 3));
  return o;
}

Outcome a3_learning(Context& ctx) {
  Outcome o;
  MotionEstimator& model = ctx.trained_model();
  const Vector& mean = ctx.training_mean();
  double mae = 0.0, base_mae = 0.0, adr = 0.0, base_adr = 0.0;
  std::string rows = "scan,style,mae,baseline_mae,adr,baseline_adr\n";
  for (std::size_t k = 0; k < ctx.test().size(); ++k) {
    const ScanSequence& s = ctx.test()[k];
    const Matrix gt = to_matrix(s.gt->relative());
    const Matrix est = to_matrix(model.predict(make_inputs(s)));
    const Matrix flat = mean.replicate(1, gt.cols());
    const double m = (est - gt).cwiseAbs().mean(), bm = (flat - gt).cwiseAbs().mean();
    const double a = metrics_of(chain_trajectory(s.gt->poses.front(), from_matrix(est)).poses, s).adr;
    const double ba = metrics_of(chain_trajectory(s.gt->poses.front(), from_matrix(flat)).poses, s).adr;
    mae += m;
    base_mae += bm;
    adr += a;
    base_adr += ba;
    rows += std::to_string(k) + "," + s.meta.style + "," + format_double(m) + "," + format_double(bm) + "," +
            format_double(a) + "," + format_double(ba) + "\n";
  }
  write_file(ctx.out / "a3_test_metrics.csv", rows);
  const double n = static_cast<double>(ctx.test().size());
  mae /= n;
  base_mae /= n;
  adr /= n;
  base_adr /= n;
  o.require(mae <= 0.5 * base_mae, "MAE ratio " + fmt(mae / base_mae, 3));
  o.require(adr <= 0.5 * base_adr, "ADR ratio " + fmt(adr / base_adr, 3));
  o.report("MAE " + fmt(mae) + " vs baseline " + fmt(base_mae) + " (ratio " + fmt(mae / base_mae, 3) + "), ADR " +
           fmt(adr) + "% vs " + fmt(base_adr) + "% (ratio " + fmt(adr / base_adr, 3) + ")");
  return o;
}

Outcome a4_online(Context& ctx) {
  Outcome o;
  const MotionEstimator& trained = ctx.trained_model();
  const auto shifted = generate_dataset(shifted_dataset(), kTestScans, kShiftSeed);
  OnlineConfig cfg;
  cfg.iterations = 60;
  constexpr int kEvery = 10;

  const int points = cfg.iterations / kEvery + 1;
  std::vector<double> fdr(points, 0.0), ea(points, 0.0), loss(cfg.iterations + 1, 0.0);
  int improved = 0;
  std::string per_scan = "scan,style,initial_loss,final_loss\n";
  for (std::size_t k = 0; k < shifted.size(); ++k) {
    const ScanSequence& scan = shifted[k];
    ScanSequence blind = scan;
    blind.gt.reset();
    MotionEstimator model = trained;  // every scan starts from the offline checkpoint
    const auto history = adapt_online(model, blind, cfg, [&](int it, const MotionEstimator& current) {
      if (it % kEvery != 0) return;
      const MetricReport m = metrics_of(estimate_poses(current, scan), scan);
      fdr[it / kEvery] += m.fdr;
      ea[it / kEvery] += m.ea;
    });
    for (std::size_t i = 0; i < history.size(); ++i) loss[i] += history[i].total;
    if (history.back().total < history.front().total) ++improved;
    per_scan += std::to_string(k) + "," + scan.meta.style + "," + format_double(history.front().total) + "," +
                format_double(history.back().total) + "\n";
  }
  const double n = static_cast<double>(shifted.size());
  std::string curve = "iteration,mean_online_loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) curve += std::to_string(i) + "," + format_double(loss[i] / n) + "\n";
  std::string metric_curve = "iteration,mean_fdr_pct,mean_ea_deg\n";
  for (int p = 0; p < points; ++p) {
    metric_curve += std::to_string(p * kEvery) + "," + format_double(fdr[p] / n) + "," + format_double(ea[p] / n) + "\n";
  }
  write_file(ctx.out / "a4_online_loss_curve.csv", curve);
  write_file(ctx.out / "a4_metric_curve.csv", metric_curve);
  write_file(ctx.out / "a4_per_scan.csv", per_scan);

  const double fdr_gain = 1.0 - fdr.back() / fdr.front();
  const double ea_gain = 1.0 - ea.back() / ea.front();
  o.require(improved == static_cast<int>(shifted.size()),
            "online loss decreased on " + std::to_string(improved) + "/" + std::to_string(shifted.size()) + " scans");
  o.require(fdr_gain >= 0.05, "FDR reduction " + fmt(100 * fdr_gain, 3) + "%");
  o.require(ea_gain >= 0.05, "EA reduction " + fmt(100 * ea_gain, 3) + "%");
  o.report("loss down on " + std::to_string(improved) + "/" + std::to_string(shifted.size()) + ", FDR " +
           fmt(fdr.front() / n) + " -> " + fmt(fdr.back() / n) + "%, EA " + fmt(ea.front() / n) + " -> " +
           fmt(ea.back() / n) + " deg");
  return o;
}

Outcome a5_ablation(Context& ctx) {
  Outcome o;
  const MotionEstimator& model = ctx.trained_model();
  struct Variant {
    const char* name;
    ForwardOptions opt;
    double tz = 0.0, ea = 0.0;
  };
  std::vector<Variant> variants(3);
  variants[0].name = "full";
  variants[1].name = "zero_accel_branch";
  variants[1].opt.zero_accel_branch = true;
  variants[2].name = "zero_euler_input";
  variants[2].opt.zero_euler_input = true;
  for (const auto& s : ctx.test()) {
    const Matrix gt = to_matrix(s.gt->relative());
    for (auto& v : variants) {
      const auto steps = model.predict(make_inputs(s), v.opt);
      v.tz += (to_matrix(steps).row(2) - gt.row(2)).cwiseAbs().mean();
      v.ea += metrics_of(chain_trajectory(s.gt->poses.front(), steps).poses, s).ea;
    }
  }
  std::string csv = "variant,mean_abs_tz_error_mm,mean_ea_deg\n";
  const double n = static_cast<double>(ctx.test().size());
  for (auto& v : variants) {
    v.tz /= n;
    v.ea /= n;
    csv += std::string(v.name) + "," + format_double(v.tz) + "," + format_double(v.ea) + "\n";
    o.report(std::string(v.name) + " tz " + fmt(v.tz) + " ea " + fmt(v.ea));
  }
  write_file(ctx.out / "a5_ablation.csv", csv);
  for (std::size_t i = 1; i < variants.size(); ++i) {
    o.require(variants[0].tz < variants[i].tz, std::string("tz not below ") + variants[i].name);
    o.require(variants[0].ea < variants[i].ea, std::string("EA not below ") + variants[i].name);
  }
  return o;
}

// Brute-force metric definitions, written without the library's helpers.
MetricReport oracle_metrics(const std::vector<Pose>& est, const std::vector<Pose>& gt, const FrameGeometry& geo) {
  MetricReport m;
  const std::size_t n = gt.size();
  std::vector<double> drift(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = est[i].translation - gt[i].translation;
    drift[i] = std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
  }
  for (std::size_t i = 1; i < n; ++i) m.scan_length += (gt[i].translation - gt[i - 1].translation).norm();
  m.sd = std::accumulate(drift.begin(), drift.end(), 0.0);
  m.md = *std::max_element(drift.begin(), drift.end());
  m.fdr = drift.back() / m.scan_length * 100.0;
  m.adr = m.sd / n / m.scan_length * 100.0;

  auto corners = [&](const std::vector<Pose>& poses) {
    std::vector<Vec3> pts;
    const double hx = 0.5 * (geo.width - 1) * geo.pixel_spacing, hy = 0.5 * (geo.height - 1) * geo.pixel_spacing;
    for (const auto& p : poses) {
      for (double sx : {-1.0, 1.0}) {
        for (double sy : {-1.0, 1.0}) pts.push_back(p.rotation * Vec3(sx * hx, sy * hy, 0.0) + p.translation);
      }
    }
    return pts;
  };
  const auto a = corners(est), b = corners(gt);
  auto directed = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double worst = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, (p - q).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  m.hd = std::max(directed(a, b), directed(b, a));

  double angle = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Quaterniond q(est[i].rotation * gt[i].rotation.transpose());
    angle += 2.0 * std::atan2(q.vec().norm(), std::abs(q.w())) * 180.0 / std::numbers::pi;
  }
  m.ea = angle / n;
  return m;
}

Outcome a6_metric_oracles(Context&) {
  Outcome o;
  Gen g(606);
  const FrameGeometry geo{};
  double worst = 0.0;
  bool zeros = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(g.uniform(0, 60));
    std::vector<Pose> gt{g.pose(20.0)};
    for (int i = 1; i < n; ++i) gt.push_back(compose(gt.back(), to_pose(g.step(1.0, 3.0))));
    std::vector<Pose> est{gt.front()};
    for (int i = 1; i < n; ++i) est.push_back(compose(gt[i], to_pose(g.step(0.7, 2.0))));

    const MetricReport m = compute_metrics(TrajectoryEstimate{est}, TrajectoryEstimate{gt}, geo);
    const MetricReport r = oracle_metrics(est, gt, geo);
    for (int i = 0; i < n; ++i) {
      const double d = frame_drift(TrajectoryEstimate{est}, TrajectoryEstimate{gt}, i);
      worst = std::max(worst, std::abs(d - (est[i].translation - gt[i].translation).norm()));
    }
    for (auto [x, y] : {std::pair{m.fdr, r.fdr}, {m.adr, r.adr}, {m.md, r.md}, {m.sd, r.sd}, {m.hd, r.hd}, {m.ea, r.ea}}) {
      worst = std::max(worst, std::abs(x - y));
    }
    const MetricReport z = compute_metrics(TrajectoryEstimate{gt}, TrajectoryEstimate{gt}, geo);
    zeros = zeros && z.fdr == 0 && z.adr == 0 && z.md == 0 && z.sd == 0 && z.hd == 0 && z.ea == 0;
  }
  o.require(worst < 1e-9, "oracle difference " + fmt(worst));
  o.require(zeros, "identical pairs not all zero");
  o.report("100 pairs, max oracle difference " + fmt(worst, 3) + ", identical pairs all zero");
  return o;
}

Outcome a7_data_integrity(Context& ctx) {
  Outcome o;
  double aug_err = 0.0;
  int round_trips = 0;
  for (int k = 0; k < 4; ++k) {
    ScanSpec spec;
    spec.trajectory.style = static_cast<ScanStyle>(k);
    spec.trajectory.frame_count = 24;
    spec.trajectory.length = 12.0;
    spec.image_height = spec.image_width = 32;
    spec.seed = 700 + k;
    const ScanSequence scan = generate_scan(small_phantom(), spec);

    const fs::path dir = ctx.out / ("a7_scan_" + std::to_string(k));
    fs::remove_all(dir);
    save_scan(scan, dir);
    const ScanSequence back = load_scan(dir);
    bool same = back.frames.pixels.size() == scan.frames.pixels.size() &&
                std::memcmp(back.frames.pixels.data(), scan.frames.pixels.data(),
                            scan.frames.pixels.size() * sizeof(float)) == 0 &&
                back.imu.size() == scan.imu.size();
    for (std::size_t i = 0; same && i < scan.imu.size(); ++i) {
      same = std::memcmp(back.imu[i].orientation.degrees.data(), scan.imu[i].orientation.degrees.data(),
                         3 * sizeof(double)) == 0 &&
             std::memcmp(back.imu[i].acceleration.data(), scan.imu[i].acceleration.data(), 3 * sizeof(double)) == 0;
    }
    o.require(same, "round trip of scan " + std::to_string(k) + " not byte-exact");
    round_trips += same;
    fs::remove_all(dir);

    const ScanSequence twice = augment(augment(scan, AugmentKind::kInversion, {}, 1), AugmentKind::kInversion, {}, 2);
    for (int i = 0; i < scan.size(); ++i) aug_err = std::max(aug_err, max_abs_diff(twice.gt->poses[i], scan.gt->poses[i]));
    o.require(twice.frames.pixels == scan.frames.pixels, "double inversion changed frames");

    for (int stride : {2, 3}) {
      AugmentParams p;
      p.stride = stride;
      const ScanSequence sub = augment(scan, AugmentKind::kInterval, p, 3);
      const auto fine = scan.gt->relative();
      const auto coarse = sub.gt->relative();
      for (std::size_t j = 0; j < coarse.size(); ++j) {
        Pose composed = Pose::identity();
        for (int s = 0; s < stride; ++s) composed = compose(composed, to_pose(fine[j * stride + s]));
        aug_err = std::max(aug_err, max_abs_diff(to_pose(coarse[j]), composed));
      }
    }
  }
  o.require(aug_err < 1e-9, "augmentation consistency " + fmt(aug_err));
  o.report(std::to_string(round_trips) + "/4 byte-exact round trips, augmentation error " + fmt(aug_err, 3));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1-A7"};
  std::string only, known;
  std::string out = "acceptance_out";
  app.add_option("--only", only, "Comma-separated subset, e.g. A1,A6");
  app.add_option("--out", out, "Directory for checkpoints and CSV artifacts");
  app.add_option("--known-failures", known, "Criteria whose failure does not affect the exit status");
  CLI11_PARSE(app, argc, argv);

  auto split = [](const std::string& list) {
    std::set<std::string> items;
    std::stringstream in(list);
    for (std::string item; std::getline(in, item, ',');) items.insert(item);
    return items;
  };
  const std::set<std::string> selected = split(only);
  const std::set<std::string> expected_failures = split(known);

  Context ctx;
  ctx.out = out;
  fs::create_directories(ctx.out);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"A1", a1_math_kernels},  {"A2", a2_gradients},       {"A3", a3_learning},       {"A4", a4_online},
      {"A5", a5_ablation},      {"A6", a6_metric_oracles}, {"A7", a7_data_integrity},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = fn(ctx);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool known_failure = expected_failures.count(name) > 0;
    std::string note;
    if (known_failure) note = r.pass ? "  (listed as a known failure but passed)" : "  (known failure, not counted)";
    std::cout << name << " " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail << "  [" << fmt(s, 3) << " s]" << note
              << "\n"
              << std::flush;
    failures += !r.pass && !known_failure;
  }
  return failures == 0 ? 0 : 1;
}
