#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sonotrack/geometry.hpp"

namespace sonotrack {

/// Standard gravity in the east-north-up world frame, mm/s^2.
inline const Vec3 kGravityWorld{0.0, 0.0, -9806.65};

/// One IMU sample. Orientation is absolute (world referenced, degrees);
/// acceleration is in the sensor frame, mm/s^2, gravity included.
struct ImuRecord {
  EulerAngles orientation;
  Vec3 acceleration = Vec3::Zero();
};

struct NoiseSpec {
  double accel_sigma = 50.0;       // mm/s^2, white per axis
  double accel_bias = 20.0;        // mm/s^2, constant per scan
  double orientation_sigma = 0.5;  // degrees, per axis

  static NoiseSpec none() { return NoiseSpec{0.0, 0.0, 0.0}; }
};

struct ProcessedImu {
  std::vector<EulerAngles> relative_euler;  // N-1 entries
  std::vector<Vec3> acceleration;           // N entries, gravity-free, zero mean
};

/// Relative rotation between consecutive orientations, as Euler angles.
/// Throws kTooShort for fewer than two samples.
std::vector<EulerAngles> relative_euler(std::span<const EulerAngles> orientations);

/// Gravity direction in the sensor frame for a world-referenced orientation.
Vec3 gravity_in_sensor(const EulerAngles& orientation);

/// Removes gravity (rotated into each sensor frame) and the per-axis mean.
std::vector<Vec3> preprocess_acceleration(std::span<const ImuRecord> records);

ProcessedImu preprocess(std::span<const ImuRecord> records);

/// Second difference of frame centroids divided by dt^2, expressed in each
/// frame's own axes. Interior frames use central differences; the two end
/// frames reuse the nearest interior triple.
std::vector<Vec3> kinematic_acceleration(std::span<const Pose> poses, double dt);

/// Simulated IMU readings along a ground-truth trajectory. Deterministic given
/// seed. Throws kTooShort for fewer than three poses, kBadSpec for dt <= 0.
std::vector<ImuRecord> synthesize_imu(std::span<const Pose> trajectory, double dt,
                                      const NoiseSpec& noise, std::uint64_t seed);

}  // namespace sonotrack
