#include "sonotrack/simulator.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "sonotrack/error.hpp"

namespace sonotrack {
namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// In-place separable smoothing along one axis with clamped borders.
void smooth_axis(std::vector<double>& data, const VolumeDims& d, int axis, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  if (radius == 0) return;
  const int len = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(d.nx)
                                                       : static_cast<std::size_t>(d.nx) * d.ny;
  const int outer_a = axis == 0 ? d.ny : d.nx;
  const int outer_b = axis == 2 ? d.ny : d.nz;
  std::vector<double> line(len), out(len);
  for (int b = 0; b < outer_b; ++b) {
    for (int a = 0; a < outer_a; ++a) {
      std::size_t base = 0;
      if (axis == 0) base = (static_cast<std::size_t>(b) * d.ny + a) * d.nx;
      if (axis == 1) base = static_cast<std::size_t>(b) * d.nx * d.ny + a;
      if (axis == 2) base = static_cast<std::size_t>(b) * d.nx + a;
      for (int i = 0; i < len; ++i) line[i] = data[base + i * stride];
      for (int i = 0; i < len; ++i) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          acc += kernel[j + radius] * line[std::clamp(i + j, 0, len - 1)];
        }
        out[i] = acc;
      }
      for (int i = 0; i < len; ++i) data[base + i * stride] = out[i];
    }
  }
}

// Arc length along the path at each frame, for styles moving along one axis.
std::vector<double> fast_and_slow_profile(const TrajectorySpec& spec) {
  const int n = spec.frame_count;
  const double total_time = (n - 1) * spec.dt;
  const double m = spec.speed_modulation;
  const double mean_speed = spec.length / (total_time * std::sqrt(1.0 - m * m));
  auto speed = [&](double s) {
    return mean_speed * (1.0 + m * std::sin(2.0 * kPi * s / spec.length));
  };
  constexpr int kSubsteps = 256;
  const double h = spec.dt / kSubsteps;
  std::vector<double> out(n, 0.0);
  double s = 0.0;
  for (int k = 1; k < n; ++k) {
    for (int j = 0; j < kSubsteps; ++j) {
      const double k1 = speed(s);
      const double k2 = speed(s + 0.5 * h * k1);
      const double k3 = speed(s + 0.5 * h * k2);
      const double k4 = speed(s + h * k3);
      s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    out[k] = s;
  }
  return out;
}

Mat3 axis_rotation(const Vec3& axis, double rad) {
  return Eigen::AngleAxisd(rad, axis).toRotationMatrix();
}

}  // namespace

bool Structure::contains(const Vec3& p) const {
  if (kind == Kind::kEllipsoid) {
    return ((p - center).array() / radii.array()).square().sum() < 1.0;
  }
  const Vec3 dir = axis.normalized();
  const Vec3 d = p - center;
  return (d - d.dot(dir) * dir).squaredNorm() < radius * radius;
}

bool PhantomVolume::contains(const Vec3& world) const {
  const Vec3 e = extent();
  return (world.array() >= 0.0).all() && (world.array() <= e.array()).all();
}

double PhantomVolume::sample(const Vec3& world) const {
  const Vec3 g = world.cwiseQuotient(spacing);
  const int i0 = std::clamp(static_cast<int>(std::floor(g.x())), 0, dims.nx - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(g.y())), 0, dims.ny - 2);
  const int k0 = std::clamp(static_cast<int>(std::floor(g.z())), 0, dims.nz - 2);
  const double fx = g.x() - i0, fy = g.y() - j0, fz = g.z() - k0;
  const double c00 = at(i0, j0, k0) * (1 - fx) + at(i0 + 1, j0, k0) * fx;
  const double c10 = at(i0, j0 + 1, k0) * (1 - fx) + at(i0 + 1, j0 + 1, k0) * fx;
  const double c01 = at(i0, j0, k0 + 1) * (1 - fx) + at(i0 + 1, j0, k0 + 1) * fx;
  const double c11 = at(i0, j0 + 1, k0 + 1) * (1 - fx) + at(i0 + 1, j0 + 1, k0 + 1) * fx;
  const double c0 = c00 * (1 - fy) + c10 * fy;
  const double c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

PhantomVolume make_phantom(const std::vector<Structure>& structures, const VolumeDims& dims,
                           const Vec3& spacing, std::uint64_t seed, const SpeckleSpec& speckle) {
  if (dims.nx < 32 || dims.ny < 32 || dims.nz < 32) {
    throw Error(ErrorCode::kBadDims, "phantom dims must be at least 32^3");
  }
  if (!(spacing.array() > 0.0).all()) {
    throw Error(ErrorCode::kBadDims, "phantom spacing must be positive");
  }
  const std::size_t total = static_cast<std::size_t>(dims.nx) * dims.ny * dims.nz;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> noise(total);
  for (auto& v : noise) v = unit(rng);
  for (int axis = 0; axis < 3; ++axis) {
    smooth_axis(noise, dims, axis, speckle.correlation_mm[axis] / spacing[axis]);
  }
  double mean = 0.0, sq = 0.0;
  for (double v : noise) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(total);
  const double stddev = std::sqrt(std::max(sq / static_cast<double>(total) - mean * mean, 1e-300));

  PhantomVolume vol;
  vol.dims = dims;
  vol.spacing = spacing;
  vol.structures = structures;
  vol.voxels.resize(total);
  std::size_t idx = 0;
  for (int k = 0; k < dims.nz; ++k) {
    for (int j = 0; j < dims.ny; ++j) {
      for (int i = 0; i < dims.nx; ++i, ++idx) {
        const Vec3 p(i * spacing.x(), j * spacing.y(), k * spacing.z());
        double base = speckle.background;
        for (const auto& s : structures) {
          if (s.contains(p)) base = s.intensity;
        }
        const double texture = (noise[idx] - mean) / stddev;
        vol.voxels[idx] =
            static_cast<float>(std::clamp(base * (1.0 + speckle.contrast * texture), 0.0, 1.0));
      }
    }
  }
  return vol;
}

std::vector<Structure> anatomy_structures(const VolumeDims& dims, const Vec3& spacing,
                                          std::uint64_t seed) {
  const Vec3 e((dims.nx - 1) * spacing.x(), (dims.ny - 1) * spacing.y(),
               (dims.nz - 1) * spacing.z());
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  std::vector<Structure> out;
  for (int t = 0; t < 5; ++t) {
    Structure s;
    s.kind = Structure::Kind::kTube;
    s.center = Vec3(between(0.25, 0.75) * e.x(), between(0.3, 0.7) * e.y(), 0.5 * e.z());
    s.axis = Vec3(between(0.2, 0.5), between(-0.1, 0.1), 1.0).normalized();
    s.radius = between(1.0, 3.0);
    s.intensity = (t % 2 == 0) ? between(0.12, 0.3) : between(0.75, 0.9);
    out.push_back(s);
  }
  for (int t = 0; t < 3; ++t) {
    Structure s;
    s.kind = Structure::Kind::kEllipsoid;
    s.center = Vec3(between(0.2, 0.8) * e.x(), between(0.3, 0.7) * e.y(), between(0.2, 0.8) * e.z());
    s.radii = Vec3(between(2.0, 5.0), between(2.0, 4.0), between(3.0, 6.0));
    s.intensity = between(0.3, 0.8);
    out.push_back(s);
  }
  return out;
}

std::string_view to_string(ScanStyle style) {
  switch (style) {
    case ScanStyle::kLinear: return "linear";
    case ScanStyle::kCurved: return "curved";
    case ScanStyle::kFastAndSlow: return "fast_and_slow";
    case ScanStyle::kLoop: return "loop";
  }
  return "linear";
}

std::optional<ScanStyle> parse_style(std::string_view name) {
  if (name == "linear") return ScanStyle::kLinear;
  if (name == "curved") return ScanStyle::kCurved;
  if (name == "fast_and_slow") return ScanStyle::kFastAndSlow;
  if (name == "loop") return ScanStyle::kLoop;
  return std::nullopt;
}

GroundTruth make_trajectory(const TrajectorySpec& spec) {
  if (spec.frame_count < 4) throw Error(ErrorCode::kBadSpec, "frame_count must be >= 4");
  if (!(spec.length > 0.0)) throw Error(ErrorCode::kBadSpec, "length must be positive");
  if (!(spec.dt > 0.0)) throw Error(ErrorCode::kBadSpec, "dt must be positive");
  if (spec.style == ScanStyle::kFastAndSlow &&
      !(spec.speed_modulation >= 0.0 && spec.speed_modulation < 1.0)) {
    throw Error(ErrorCode::kBadSpec, "speed_modulation must be in [0, 1)");
  }
  if (spec.style == ScanStyle::kCurved && !(std::abs(spec.arc_deg) > 0.0)) {
    throw Error(ErrorCode::kBadSpec, "curved scans need a nonzero arc_deg");
  }

  const int n = spec.frame_count;
  std::vector<Pose> local(n);
  switch (spec.style) {
    case ScanStyle::kLinear:
      for (int k = 0; k < n; ++k) {
        local[k] = Pose::from_translation(Vec3(0, 0, spec.length * k / (n - 1)));
      }
      break;
    case ScanStyle::kFastAndSlow: {
      const auto s = fast_and_slow_profile(spec);
      for (int k = 0; k < n; ++k) local[k] = Pose::from_translation(Vec3(0, 0, s[k]));
      break;
    }
    case ScanStyle::kLoop:
      for (int k = 0; k < n; ++k) {
        const double u = static_cast<double>(k) / (n - 1);
        local[k] = Pose::from_translation(Vec3(0, 0, 0.5 * spec.length * std::sin(kPi * u)));
      }
      break;
    case ScanStyle::kCurved: {
      std::mt19937_64 rng(spec.seed);
      const double bend = (rng() & 1) ? 1.0 : -1.0;
      const double roll = (rng() & 1) ? 1.0 : -1.0;
      const double arc = std::abs(spec.arc_deg) * kPi / 180.0;
      const double radius = spec.length / arc;
      for (int k = 0; k < n; ++k) {
        const double frac = static_cast<double>(k) / (n - 1);
        const double beta = arc * frac;
        const Vec3 p(bend * radius * (1.0 - std::cos(beta)), 0.0, radius * std::sin(beta));
        const Mat3 r = axis_rotation(Vec3::UnitY(), bend * beta) *
                       axis_rotation(Vec3::UnitZ(), roll * spec.tilt_deg * kPi / 180.0 * frac);
        local[k] = Pose{r, p};
      }
      break;
    }
  }

  GroundTruth gt;
  gt.poses.reserve(n);
  for (const auto& p : local) gt.poses.push_back(compose(spec.start, p));
  return gt;
}

std::array<Vec3, 4> frame_corners(const Pose& pose, int height, int width, double pixel_spacing) {
  const double hx = 0.5 * (width - 1) * pixel_spacing;
  const double hy = 0.5 * (height - 1) * pixel_spacing;
  return {pose.apply(Vec3(-hx, -hy, 0)), pose.apply(Vec3(hx, -hy, 0)),
          pose.apply(Vec3(hx, hy, 0)), pose.apply(Vec3(-hx, hy, 0))};
}

FrameStack extract_slices(const PhantomVolume& volume, const GroundTruth& gt, int height,
                          int width, double pixel_spacing) {
  if (height <= 0 || width <= 0 || !(pixel_spacing > 0.0)) {
    throw Error(ErrorCode::kBadDims, "image dims and pixel spacing must be positive");
  }
  FrameStack frames(static_cast<int>(gt.size()), height, width);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  for (int f = 0; f < frames.count; ++f) {
    const Pose& pose = gt.poses[f];
    for (const auto& c : frame_corners(pose, height, width, pixel_spacing)) {
      if (!volume.contains(c)) {
        throw Error(ErrorCode::kOutOfVolume,
                    "frame " + std::to_string(f) + " leaves the phantom volume");
      }
    }
    auto out = frames.frame(f);
    const Vec3 ex = pose.rotation.col(0) * pixel_spacing;
    const Vec3 ey = pose.rotation.col(1) * pixel_spacing;
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        const Vec3 p = pose.translation + (u - cx) * ex + (v - cy) * ey;
        out[static_cast<std::size_t>(v) * width + u] =
            static_cast<float>(std::clamp(volume.sample(p), 0.0, 1.0));
      }
    }
  }
  return frames;
}

ScanSequence generate_scan(const PhantomVolume& phantom, const ScanSpec& spec) {
  TrajectorySpec traj_spec = spec.trajectory;
  traj_spec.start = Pose::identity();
  GroundTruth gt = make_trajectory(traj_spec);

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : gt.poses) {
    for (const auto& c : frame_corners(p, spec.image_height, spec.image_width, spec.pixel_spacing)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  const Vec3 extent = phantom.extent();
  Vec3 shift = 0.5 * extent - 0.5 * (lo + hi);
  if (spec.placement_jitter > 0.0) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int a = 0; a < 3; ++a) {
      const double slack = std::max(0.0, 0.5 * (extent[a] - (hi[a] - lo[a])) - 0.1);
      shift[a] += std::min(slack, spec.placement_jitter) * u(rng);
    }
  }
  for (auto& p : gt.poses) p.translation += shift;

  ScanSequence scan;
  scan.frames = extract_slices(phantom, gt, spec.image_height, spec.image_width, spec.pixel_spacing);
  scan.imu = synthesize_imu(gt.poses, traj_spec.dt, spec.noise, spec.seed);
  scan.gt = std::move(gt);
  scan.meta.dt = traj_spec.dt;
  scan.meta.pixel_spacing = spec.pixel_spacing;
  scan.meta.style = std::string(to_string(traj_spec.style));
  scan.meta.seed = spec.seed;
  scan.meta.noise = spec.noise;
  return scan;
}

void DatasetSpec::check() const {
  if (styles.empty()) throw Error(ErrorCode::kBadSpec, "dataset needs at least one style");
  if (!(length_min > 0.0) || length_max < length_min) {
    throw Error(ErrorCode::kBadSpec, "dataset length range must satisfy 0 < min <= max");
  }
  if (modulation_min < 0.0 || modulation_max < modulation_min || modulation_max >= 1.0) {
    throw Error(ErrorCode::kBadSpec, "speed modulation range must lie in [0, 1)");
  }
  if (phantom_pool < 1) throw Error(ErrorCode::kBadSpec, "phantom pool must be at least 1");
}

std::uint64_t scan_seed(std::uint64_t dataset_seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed), static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5ca9u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::uint64_t phantom_seed(std::uint64_t dataset_seed, int pool_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed), static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(pool_index), 0x9a47u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

ScanSpec dataset_scan_spec(const DatasetSpec& spec, std::uint64_t dataset_seed, int index) {
  const std::uint64_t seed = scan_seed(dataset_seed, index);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScanSpec out = spec.scan;
  out.seed = seed;
  out.trajectory.seed = seed;
  out.trajectory.style = spec.styles[static_cast<std::size_t>(index) % spec.styles.size()];
  out.trajectory.length = spec.length_min + (spec.length_max - spec.length_min) * u(rng);
  out.trajectory.speed_modulation =
      spec.modulation_min + (spec.modulation_max - spec.modulation_min) * u(rng);
  return out;
}

std::vector<ScanSequence> generate_dataset(const DatasetSpec& spec, int count,
                                           std::uint64_t dataset_seed,
                                           const std::function<void(int, ScanSequence&&)>& on_scan) {
  spec.check();
  if (count < 0) throw Error(ErrorCode::kBadSpec, "scan count must be non-negative");
  const Vec3 spacing = Vec3::Constant(spec.voxel_spacing);
  std::vector<std::optional<PhantomVolume>> pool(static_cast<std::size_t>(spec.phantom_pool));
  std::vector<ScanSequence> out;
  for (int k = 0; k < count; ++k) {
    const int p = k % spec.phantom_pool;
    if (!pool[p]) {
      const std::uint64_t ps = phantom_seed(dataset_seed, p);
      pool[p] = make_phantom(anatomy_structures(spec.dims, spacing, ps), spec.dims, spacing, ps,
                             spec.speckle);
    }
    ScanSequence scan = generate_scan(*pool[p], dataset_scan_spec(spec, dataset_seed, k));
    if (on_scan) {
      on_scan(k, std::move(scan));
    } else {
      out.push_back(std::move(scan));
    }
  }
  return out;
}

}  // namespace sonotrack
