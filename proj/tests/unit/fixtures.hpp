#pragma once

#include "sonotrack/estimator.hpp"
#include "sonotrack/simulator.hpp"

namespace sonotrack::testing {

inline const PhantomVolume& small_phantom() {
  static const PhantomVolume p = [] {
    const VolumeDims d{48, 48, 96};
    const Vec3 sp = Vec3::Constant(0.3);
    return make_phantom(anatomy_structures(d, sp, 3), d, sp, 3);
  }();
  return p;
}

/// Short scan with tiny images, for gradient checks and fast model tests.
inline ScanSequence tiny_scan(ScanStyle style = ScanStyle::kCurved, int frames = 6, int size = 8,
                              std::uint64_t seed = 5) {
  ScanSpec spec;
  spec.trajectory.style = style;
  spec.trajectory.frame_count = frames;
  spec.trajectory.length = 0.8 * (frames - 1);
  spec.image_height = spec.image_width = size;
  spec.seed = seed;
  return generate_scan(small_phantom(), spec);
}

/// Reduced network for 8x8 images.
inline ModelConfig tiny_config(std::uint64_t seed = 7) {
  ModelConfig c;
  c.image_height = c.image_width = 8;
  c.channels = {3, 4};
  c.feature_height = c.feature_width = 2;
  c.hidden = 5;
  c.accel_widths = {4};
  c.euler_widths = {3};
  c.seed = seed;
  return c;
}

/// Moves parameters off their initial values (zero biases, zero residual
/// convolutions) so every code path carries a gradient.
inline void perturb(MotionEstimator& model, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  nn::Vector v = model.params().values;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += n(rng);
  model.set_parameters(v);
}

}  // namespace sonotrack::testing
