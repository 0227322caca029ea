#pragma once

// Shared generators and reference implementations for the unit tests. The
// references deliberately avoid library helpers so they can act as oracles.

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "sonotrack/geometry.hpp"

namespace sonotrack::testing {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Rotation built from Eigen's angle-axis products, independent of euler_to_matrix.
inline Mat3 reference_rotation(double x_deg, double y_deg, double z_deg) {
  return (Eigen::AngleAxisd(deg2rad(z_deg), Vec3::UnitZ()) *
          Eigen::AngleAxisd(deg2rad(y_deg), Vec3::UnitY()) *
          Eigen::AngleAxisd(deg2rad(x_deg), Vec3::UnitX()))
      .toRotationMatrix();
}

inline Eigen::Matrix4d homogeneous(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation;
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

inline double max_abs_diff(const Pose& a, const Pose& b) {
  return std::max((a.rotation - b.rotation).cwiseAbs().maxCoeff(),
                  (a.translation - b.translation).cwiseAbs().maxCoeff());
}

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng); }
  Vec3 vec(double scale) { return Vec3(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)); }
  Mat3 rotation() {
    Eigen::Quaterniond q(normal(), normal(), normal(), normal());
    q.normalize();
    return q.toRotationMatrix();
  }
  Pose pose(double translation_scale = 50.0) { return Pose{rotation(), vec(translation_scale)}; }
  MotionParams step(double t_scale, double deg_scale) {
    MotionParams m;
    m.t = vec(t_scale);
    m.phi = EulerAngles(vec(deg_scale));
    return m;
  }
};

}  // namespace sonotrack::testing
