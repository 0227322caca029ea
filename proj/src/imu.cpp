#include "sonotrack/imu.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sonotrack/error.hpp"

namespace sonotrack {

std::vector<EulerAngles> relative_euler(std::span<const EulerAngles> orientations) {
  if (orientations.size() < 2) {
    throw Error(ErrorCode::kTooShort, "relative_euler needs at least 2 orientations");
  }
  std::vector<EulerAngles> out;
  out.reserve(orientations.size() - 1);
  Mat3 prev = euler_to_matrix(orientations[0]);
  for (std::size_t i = 1; i < orientations.size(); ++i) {
    const Mat3 next = euler_to_matrix(orientations[i]);
    out.push_back(matrix_to_euler(prev.transpose() * next).angles);
    prev = next;
  }
  return out;
}

Vec3 gravity_in_sensor(const EulerAngles& orientation) {
  return euler_to_matrix(orientation).transpose() * kGravityWorld;
}

std::vector<Vec3> preprocess_acceleration(std::span<const ImuRecord> records) {
  std::vector<Vec3> out;
  out.reserve(records.size());
  if (records.empty()) return out;
  Vec3 mean = Vec3::Zero();
  for (const auto& r : records) {
    out.push_back(r.acceleration - gravity_in_sensor(r.orientation));
    mean += out.back();
  }
  mean /= static_cast<double>(records.size());
  for (auto& a : out) a -= mean;
  return out;
}

ProcessedImu preprocess(std::span<const ImuRecord> records) {
  std::vector<EulerAngles> orientations;
  orientations.reserve(records.size());
  for (const auto& r : records) orientations.push_back(r.orientation);
  return ProcessedImu{relative_euler(orientations), preprocess_acceleration(records)};
}

std::vector<Vec3> kinematic_acceleration(std::span<const Pose> poses, double dt) {
  if (poses.size() < 3) {
    throw Error(ErrorCode::kTooShort, "need at least 3 poses for a second difference");
  }
  const std::size_t n = poses.size();
  std::vector<Vec3> out(n);
  const double inv_dt2 = 1.0 / (dt * dt);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = std::clamp<std::size_t>(i, 1, n - 2);
    const Vec3 world = (poses[c + 1].translation - 2.0 * poses[c].translation +
                        poses[c - 1].translation) * inv_dt2;
    out[i] = poses[i].rotation.transpose() * world;
  }
  return out;
}

std::vector<ImuRecord> synthesize_imu(std::span<const Pose> trajectory, double dt,
                                      const NoiseSpec& noise, std::uint64_t seed) {
  if (trajectory.size() < 3) {
    throw Error(ErrorCode::kTooShort, "synthesize_imu needs at least 3 poses");
  }
  if (!(dt > 0.0)) throw Error(ErrorCode::kBadSpec, "dt must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  Vec3 bias = Vec3::Zero();
  if (noise.accel_bias > 0.0) {
    Vec3 dir(unit(rng), unit(rng), unit(rng));
    bias = noise.accel_bias * dir.normalized();
  }

  const std::vector<Vec3> kinematic = kinematic_acceleration(trajectory, dt);
  std::vector<ImuRecord> out;
  out.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const Mat3& r = trajectory[i].rotation;
    ImuRecord rec;
    Vec3 o = matrix_to_euler(r).angles.degrees;
    if (noise.orientation_sigma > 0.0) {
      for (int k = 0; k < 3; ++k) o[k] = wrap_degrees(o[k] + noise.orientation_sigma * unit(rng));
    }
    rec.orientation = EulerAngles(o);
    rec.acceleration = kinematic[i] + r.transpose() * kGravityWorld + bias;
    if (noise.accel_sigma > 0.0) {
      for (int k = 0; k < 3; ++k) rec.acceleration[k] += noise.accel_sigma * unit(rng);
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace sonotrack
