#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "sonotrack/scan.hpp"

namespace sonotrack {

struct Structure {
  enum class Kind { kEllipsoid, kTube };
  Kind kind = Kind::kEllipsoid;
  Vec3 center = Vec3::Zero();  // mm, world frame
  Vec3 radii = Vec3::Ones();   // ellipsoid semi-axes, mm
  Vec3 axis = Vec3::UnitZ();   // tube direction
  double radius = 1.0;         // tube radius, mm
  double intensity = 0.8;      // mean echo level in [0, 1]

  bool contains(const Vec3& p) const;
};

struct VolumeDims {
  int nx = 128;
  int ny = 128;
  int nz = 192;
};

struct SpeckleSpec {
  double background = 0.5;
  double contrast = 0.3;  // relative std of the multiplicative texture
  Vec3 correlation_mm{0.3, 0.3, 0.75};  // Gaussian smoothing sigma per axis
};

/// Scalar echo volume. Voxel (i, j, k) sits at world (i, j, k) * spacing.
struct PhantomVolume {
  VolumeDims dims;
  Vec3 spacing = Vec3::Constant(0.3);
  std::vector<float> voxels;  // x fastest, then y, then z
  std::vector<Structure> structures;

  float at(int i, int j, int k) const {
    return voxels[(static_cast<std::size_t>(k) * dims.ny + j) * dims.nx + i];
  }
  Vec3 extent() const {
    return {(dims.nx - 1) * spacing.x(), (dims.ny - 1) * spacing.y(), (dims.nz - 1) * spacing.z()};
  }
  bool contains(const Vec3& world) const;
  /// Trilinear sample; caller guarantees containment.
  double sample(const Vec3& world) const;
};

/// Throws kBadDims when any dimension is below 32 or spacing is not positive.
PhantomVolume make_phantom(const std::vector<Structure>& structures, const VolumeDims& dims,
                           const Vec3& spacing, std::uint64_t seed,
                           const SpeckleSpec& speckle = {});

/// Tubes and ellipsoids loosely resembling vessels and muscle bellies. Tubes
/// run along the scan axis with a consistent lateral lean.
std::vector<Structure> anatomy_structures(const VolumeDims& dims, const Vec3& spacing,
                                          std::uint64_t seed);

enum class ScanStyle { kLinear, kCurved, kFastAndSlow, kLoop };

std::string_view to_string(ScanStyle style);
std::optional<ScanStyle> parse_style(std::string_view name);

struct TrajectorySpec {
  ScanStyle style = ScanStyle::kLinear;
  double length = 30.0;  // mm of path
  int frame_count = 32;
  double dt = 0.05;  // s
  double arc_deg = 30.0;          // curved: total heading change
  double tilt_deg = 10.0;         // curved: roll about the scan axis
  double speed_modulation = 0.6;  // fast_and_slow
  std::uint64_t seed = 0;         // curved: picks the bend and tilt directions
  Pose start;
};

/// Throws kBadSpec when frame_count < 4, length <= 0 or dt <= 0.
GroundTruth make_trajectory(const TrajectorySpec& spec);

/// Samples the volume on each frame's image plane (x lateral, y axial,
/// centred on the pose). Throws kOutOfVolume naming the first bad frame.
FrameStack extract_slices(const PhantomVolume& volume, const GroundTruth& gt, int height,
                          int width, double pixel_spacing);

/// Image plane corner points of a frame, in world coordinates.
std::array<Vec3, 4> frame_corners(const Pose& pose, int height, int width, double pixel_spacing);

struct ScanSpec {
  TrajectorySpec trajectory;
  int image_height = 64;
  int image_width = 64;
  double pixel_spacing = 0.3;
  NoiseSpec noise;
  double placement_jitter = 2.0;  // mm, random shift after centring
  std::uint64_t seed = 0;
};

/// Centres the trajectory in the volume, slices images, synthesizes IMU.
ScanSequence generate_scan(const PhantomVolume& phantom, const ScanSpec& spec);

/// A family of scans: styles are cycled, lengths drawn uniformly, and each
/// scan is placed in one of a small pool of phantoms.
struct DatasetSpec {
  std::vector<ScanStyle> styles{ScanStyle::kLinear, ScanStyle::kCurved, ScanStyle::kFastAndSlow,
                                ScanStyle::kLoop};
  double length_min = 15.0;  // mm
  double length_max = 40.0;  // mm
  double modulation_min = 0.6;  // fast_and_slow speed modulation range
  double modulation_max = 0.6;
  ScanSpec scan;  // trajectory style, length, modulation and seeds are overridden
  VolumeDims dims;
  double voxel_spacing = 0.3;
  SpeckleSpec speckle;
  int phantom_pool = 4;

  /// Throws kBadSpec.
  void check() const;
};

/// Deterministic seed schedule: scan k of a dataset seeded s gets a distinct
/// seed derived from (s, k); phantoms are keyed by (s, k mod pool).
std::uint64_t scan_seed(std::uint64_t dataset_seed, int index);
std::uint64_t phantom_seed(std::uint64_t dataset_seed, int pool_index);

/// ScanSpec for scan `index` of the dataset.
ScanSpec dataset_scan_spec(const DatasetSpec& spec, std::uint64_t dataset_seed, int index);

/// Generates `count` scans; `on_scan` (if set) receives each scan as it is
/// produced and the returned vector is then left empty.
std::vector<ScanSequence> generate_dataset(
    const DatasetSpec& spec, int count, std::uint64_t dataset_seed,
    const std::function<void(int, ScanSequence&&)>& on_scan = {});

}  // namespace sonotrack
