#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sonotrack/scan.hpp"

namespace sonotrack {

/// Size of the image plane, used to place frame corners.
struct FrameGeometry {
  int height = 64;
  int width = 64;
  double pixel_spacing = 0.3;  // mm
};

/// Drift metrics of an estimated trajectory against ground truth.
///
/// Definitions, with drift(i) the distance between estimated and true
/// centroids of frame i and L the summed length of the true centroid path:
///   FDR = drift(N) / L * 100          ADR = mean_i drift(i) / L * 100
///   MD  = max_i drift(i)              SD  = sum_i drift(i)
///   HD  = symmetric Hausdorff distance between the frame corner point sets
///   EA  = mean_i geodesic angle of R_est(i) * R_gt(i)^T, degrees
struct MetricReport {
  double fdr = 0.0;  // %
  double adr = 0.0;  // %
  double md = 0.0;   // mm
  double sd = 0.0;   // mm
  double hd = 0.0;   // mm
  double ea = 0.0;   // deg
  double scan_length = 0.0;  // mm
};

/// Throws kLengthMismatch when the trajectories differ in length or i is out of range.
double frame_drift(const TrajectoryEstimate& est, const TrajectoryEstimate& gt, std::size_t i);

/// Throws kLengthMismatch, kTooShort (N < 2) or kDegenerateLength (L < 1e-6 mm).
MetricReport compute_metrics(const TrajectoryEstimate& est, const TrajectoryEstimate& gt,
                             const FrameGeometry& geometry);

/// Symmetric Hausdorff distance with early-break pruning.
double hausdorff_distance(std::span<const Vec3> a, std::span<const Vec3> b);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricReport& m);
std::string metrics_pretty(const MetricReport& m);

/// Voxel grid filled by nearest-neighbour splatting of every pixel.
struct CompoundedVolume {
  int nx = 0, ny = 0, nz = 0;
  Vec3 origin = Vec3::Zero();  // world position of voxel (0, 0, 0)
  double spacing = 0.3;
  std::vector<float> voxels;       // x fastest
  std::vector<std::uint8_t> hit;   // 1 where some pixel landed

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny + j) * nx + i;
  }
};

/// Last write wins per voxel; the grid is fitted to the swept bounding box.
/// Throws kEmptyTrajectory for no poses, kLengthMismatch when pose and frame
/// counts differ, kBadSpec for non-positive spacing.
CompoundedVolume compound_volume(const FrameStack& frames, std::span<const Pose> poses,
                                 double pixel_spacing, double voxel_spacing);

}  // namespace sonotrack
