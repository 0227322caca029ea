#include "sonotrack/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "sonotrack/error.hpp"

namespace sonotrack {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Mat3 rot_x(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rot_y(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

// d/d(angle) of the elementary rotations, per radian.
Mat3 drot_x(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}

Mat3 drot_y(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}

Mat3 drot_z(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  Mat3 r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

}  // namespace

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

Mat3 euler_to_matrix(const EulerAngles& phi) {
  const Vec3 rad = phi.degrees * kDegToRad;
  return rot_z(rad.z()) * rot_y(rad.y()) * rot_x(rad.x());
}

std::array<Mat3, 3> euler_to_matrix_jacobian(const EulerAngles& phi) {
  const Vec3 rad = phi.degrees * kDegToRad;
  const Mat3 rx = rot_x(rad.x()), ry = rot_y(rad.y()), rz = rot_z(rad.z());
  return {rz * ry * drot_x(rad.x()) * kDegToRad, rz * drot_y(rad.y()) * rx * kDegToRad,
          drot_z(rad.z()) * ry * rx * kDegToRad};
}

bool is_rotation(const Mat3& rotation, double tolerance) {
  if (!rotation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  return ortho < tolerance && rotation.determinant() > 0.0;
}

EulerResult matrix_to_euler(const Mat3& r) {
  if (!is_rotation(r)) {
    throw Error(ErrorCode::kNotARotation, "matrix is not orthonormal with det +1");
  }
  EulerResult out;
  const double cy = std::hypot(r(0, 0), r(1, 0));
  const double y = std::atan2(-r(2, 0), cy);
  double x = 0.0, z = 0.0;
  if (std::abs(std::abs(y * kRadToDeg) - 90.0) < 1e-6) {
    out.gimbal_lock = true;
    z = std::atan2(-r(0, 1), r(1, 1));
  } else {
    x = std::atan2(r(2, 1), r(2, 2));
    z = std::atan2(r(1, 0), r(0, 0));
  }
  out.angles = EulerAngles(wrap_degrees(x * kRadToDeg), wrap_degrees(y * kRadToDeg),
                           wrap_degrees(z * kRadToDeg));
  return out;
}

double rotation_angle_deg(const Mat3& r) {
  const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = 0.5 * axis.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c) * kRadToDeg;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) {
  const Mat3 rt = p.rotation.transpose();
  return Pose{rt, -(rt * p.translation)};
}

Pose to_pose(const MotionParams& m) { return Pose{euler_to_matrix(m.phi), m.t}; }

MotionParams from_pose(const Pose& p) {
  return MotionParams{p.translation, matrix_to_euler(p.rotation).angles};
}

std::vector<Vec3> TrajectoryEstimate::centroids() const {
  std::vector<Vec3> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p.translation);
  return out;
}

TrajectoryEstimate chain_trajectory(const Pose& start, std::span<const MotionParams> steps) {
  TrajectoryEstimate traj;
  traj.poses.reserve(steps.size() + 1);
  traj.poses.push_back(start);
  for (const auto& step : steps) {
    traj.poses.push_back(compose(traj.poses.back(), to_pose(step)));
  }
  return traj;
}

std::vector<MotionParams> relative_steps(std::span<const Pose> poses) {
  std::vector<MotionParams> out;
  if (poses.size() < 2) return out;
  out.reserve(poses.size() - 1);
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    out.push_back(from_pose(compose(inverse(poses[i]), poses[i + 1])));
  }
  return out;
}

}  // namespace sonotrack
