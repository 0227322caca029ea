#include "sonotrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "sonotrack/error.hpp"
#include "sonotrack/scandata.hpp"
#include "sonotrack/simulator.hpp"

namespace sonotrack {
namespace {

void check_lengths(const TrajectoryEstimate& est, const TrajectoryEstimate& gt) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::kLengthMismatch, "estimate has " + std::to_string(est.size()) +
                                                " frames, ground truth has " + std::to_string(gt.size()));
  }
}

// Largest distance from a point of `from` to its nearest point of `to`.
double directed_hausdorff(std::span<const Vec3> from, std::span<const Vec3> to,
                          const std::vector<std::size_t>& order_from,
                          const std::vector<std::size_t>& order_to) {
  double cmax = 0.0;
  for (std::size_t i : order_from) {
    double cmin = std::numeric_limits<double>::infinity();
    bool pruned = false;
    for (std::size_t j : order_to) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < cmax) {
        pruned = true;
        break;
      }
      cmin = std::min(cmin, d);
    }
    if (!pruned) cmax = std::max(cmax, cmin);
  }
  return std::sqrt(cmax);
}

}  // namespace

double frame_drift(const TrajectoryEstimate& est, const TrajectoryEstimate& gt, std::size_t i) {
  check_lengths(est, gt);
  if (i >= est.size()) throw Error(ErrorCode::kLengthMismatch, "frame index out of range");
  return (est.poses[i].translation - gt.poses[i].translation).norm();
}

double hausdorff_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  // Fixed-seed shuffles make the early break effective on ordered inputs.
  std::mt19937_64 rng(0x4a7d);
  std::vector<std::size_t> ia(a.size()), ib(b.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  std::shuffle(ia.begin(), ia.end(), rng);
  std::shuffle(ib.begin(), ib.end(), rng);
  return std::max(directed_hausdorff(a, b, ia, ib), directed_hausdorff(b, a, ib, ia));
}

MetricReport compute_metrics(const TrajectoryEstimate& est, const TrajectoryEstimate& gt,
                             const FrameGeometry& geometry) {
  check_lengths(est, gt);
  const std::size_t n = gt.size();
  if (n < 2) throw Error(ErrorCode::kTooShort, "metrics need at least 2 frames");

  MetricReport m;
  for (std::size_t i = 1; i < n; ++i) {
    m.scan_length += (gt.poses[i].translation - gt.poses[i - 1].translation).norm();
  }
  if (m.scan_length < 1e-6) {
    throw Error(ErrorCode::kDegenerateLength, "ground-truth scan length is below 1e-6 mm");
  }

  std::vector<Vec3> corners_est, corners_gt;
  corners_est.reserve(4 * n);
  corners_gt.reserve(4 * n);
  double angle_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = frame_drift(est, gt, i);
    m.sd += d;
    m.md = std::max(m.md, d);
    // R * R^T is not bitwise identity, so equal orientations are special-cased to exactly zero
    if (est.poses[i].rotation != gt.poses[i].rotation) {
      angle_sum += rotation_angle_deg(est.poses[i].rotation * gt.poses[i].rotation.transpose());
    }
    for (const auto& c : frame_corners(est.poses[i], geometry.height, geometry.width, geometry.pixel_spacing)) {
      corners_est.push_back(c);
    }
    for (const auto& c : frame_corners(gt.poses[i], geometry.height, geometry.width, geometry.pixel_spacing)) {
      corners_gt.push_back(c);
    }
  }
  m.fdr = frame_drift(est, gt, n - 1) / m.scan_length * 100.0;
  m.adr = m.sd / static_cast<double>(n) / m.scan_length * 100.0;
  m.hd = hausdorff_distance(corners_est, corners_gt);
  m.ea = angle_sum / static_cast<double>(n);
  return m;
}

std::string metrics_csv_header() { return "FDR_pct,ADR_pct,MD_mm,SD_mm,HD_mm,EA_deg,length_mm"; }

std::string metrics_csv_row(const MetricReport& m) {
  std::string out;
  for (double v : {m.fdr, m.adr, m.md, m.sd, m.hd, m.ea, m.scan_length}) {
    if (!out.empty()) out += ",";
    out += format_double(v);
  }
  return out;
}

std::string metrics_pretty(const MetricReport& m) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "FDR " << m.fdr << " %  ADR " << m.adr << " %  MD " << m.md << " mm  SD " << m.sd
     << " mm  HD " << m.hd << " mm  EA " << m.ea << " deg  (length " << m.scan_length << " mm)";
  return os.str();
}

CompoundedVolume compound_volume(const FrameStack& frames, std::span<const Pose> poses,
                                 double pixel_spacing, double voxel_spacing) {
  if (poses.empty()) throw Error(ErrorCode::kEmptyTrajectory, "no poses to compound");
  if (static_cast<int>(poses.size()) != frames.count) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(poses.size()) + " poses for " +
                                                std::to_string(frames.count) + " frames");
  }
  if (!(voxel_spacing > 0.0) || !(pixel_spacing > 0.0)) {
    throw Error(ErrorCode::kBadSpec, "spacings must be positive");
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : poses) {
    for (const auto& c : frame_corners(p, frames.height, frames.width, pixel_spacing)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  CompoundedVolume vol;
  vol.origin = lo;
  vol.spacing = voxel_spacing;
  const Vec3 span = (hi - lo) / voxel_spacing;
  vol.nx = static_cast<int>(std::floor(span.x() + 0.5)) + 1;
  vol.ny = static_cast<int>(std::floor(span.y() + 0.5)) + 1;
  vol.nz = static_cast<int>(std::floor(span.z() + 0.5)) + 1;
  const std::size_t total = static_cast<std::size_t>(vol.nx) * vol.ny * vol.nz;
  vol.voxels.assign(total, 0.0f);
  vol.hit.assign(total, 0);

  const double cx = 0.5 * (frames.width - 1), cy = 0.5 * (frames.height - 1);
  for (int f = 0; f < frames.count; ++f) {
    const Pose& pose = poses[f];
    const auto pixels = frames.frame(f);
    for (int v = 0; v < frames.height; ++v) {
      for (int u = 0; u < frames.width; ++u) {
        const Vec3 w = pose.apply(Vec3((u - cx) * pixel_spacing, (v - cy) * pixel_spacing, 0.0));
        const Vec3 g = (w - vol.origin) / voxel_spacing;
        const int i = static_cast<int>(std::lround(g.x()));
        const int j = static_cast<int>(std::lround(g.y()));
        const int k = static_cast<int>(std::lround(g.z()));
        if (i < 0 || j < 0 || k < 0 || i >= vol.nx || j >= vol.ny || k >= vol.nz) continue;
        const std::size_t idx = vol.index(i, j, k);
        vol.voxels[idx] = pixels[static_cast<std::size_t>(v) * frames.width + u];
        vol.hit[idx] = 1;
      }
    }
  }
  return vol;
}

}  // namespace sonotrack
