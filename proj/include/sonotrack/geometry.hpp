#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace sonotrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Tag written into scan metadata and checkpoints so every consumer agrees
/// on how three angles map to a rotation matrix.
inline constexpr std::string_view kEulerConvention = "intrinsic-zyx-deg";

/// Euler angles in degrees, applied as R = Rz(z) * Ry(y) * Rx(x).
struct EulerAngles {
  Vec3 degrees = Vec3::Zero();

  EulerAngles() = default;
  explicit EulerAngles(const Vec3& deg) : degrees(deg) {}
  EulerAngles(double x, double y, double z) : degrees(x, y, z) {}
};

struct EulerResult {
  EulerAngles angles;
  // Middle angle within 1e-6 deg of +-90; the third angle was set to zero.
  bool gimbal_lock = false;
};

/// Rigid transform in SE(3). Translation is in millimetres.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  static Pose from_translation(const Vec3& t) { return Pose{Mat3::Identity(), t}; }

  Vec3 apply(const Vec3& point) const { return rotation * point + translation; }
};

/// One relative step: pose of frame i+1 expressed in frame i.
struct MotionParams {
  Vec3 t = Vec3::Zero();  // mm
  EulerAngles phi;        // degrees
};

/// Chained absolute poses, one per frame.
struct TrajectoryEstimate {
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
  std::vector<Vec3> centroids() const;
};

/// Wraps an angle in degrees into (-180, 180].
double wrap_degrees(double deg);

Mat3 euler_to_matrix(const EulerAngles& phi);

/// Partial derivatives of euler_to_matrix with respect to each angle, per degree.
std::array<Mat3, 3> euler_to_matrix_jacobian(const EulerAngles& phi);

/// Throws Error(kNotARotation) when R is not orthonormal within 1e-6 or has
/// negative determinant.
EulerResult matrix_to_euler(const Mat3& rotation);

bool is_rotation(const Mat3& rotation, double tolerance = 1e-6);

/// Geodesic angle of a rotation matrix, in degrees within [0, 180].
double rotation_angle_deg(const Mat3& rotation);

/// Applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

Pose to_pose(const MotionParams& m);
MotionParams from_pose(const Pose& p);

TrajectoryEstimate chain_trajectory(const Pose& start, std::span<const MotionParams> steps);

/// Relative steps between consecutive absolute poses.
std::vector<MotionParams> relative_steps(std::span<const Pose> poses);

}  // namespace sonotrack
