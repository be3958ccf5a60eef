#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <string_view>

namespace vloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

/// Local perturbation of a pose: [rho (m); phi (rad)].
using Tangent = Vec6;

/// Rigid-body transform with a Hamilton unit quaternion.
///
/// The stored quaternion is always unit norm (|q| - 1 < 1e-9) and carries the
/// canonical sign qw >= 0, so every rotation has exactly one representation.
class Pose {
 public:
  Pose() = default;
  Pose(const Vec3& t, const Quat& q);
  Pose(const Vec3& t, const Mat3& R);

  static Pose identity() { return {}; }
  static Pose translation_only(const Vec3& t) { return {t, Quat::Identity()}; }
  /// Planar pose: position (x, y, z) with heading `yaw` about +z.
  static Pose planar(double x, double y, double z, double yaw);

  const Vec3& translation() const { return t_; }
  const Quat& rotation() const { return q_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
  double yaw() const;

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

  bool operator==(const Pose& other) const;

 private:
  void canonicalize();

  Vec3 t_ = Vec3::Zero();
  Quat q_ = Quat::Identity();
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

/// Relative pose a^-1 * b, the odometry measurement model.
inline Pose between(const Pose& a, const Pose& b) { return a.inverse() * b; }

Mat3 skew(const Vec3& v);

Quat so3_exp(const Vec3& phi);
/// Rotation vector of q; angle in [0, pi].
Vec3 so3_log(const Quat& q);
/// Inverse right Jacobian of SO(3).
Mat3 so3_right_jacobian_inv(const Vec3& phi);

/// Retraction with split tangent: exp([rho; phi]) = (rho, Exp(phi)), so that
/// x * exp(delta) moves the translation by R * rho and the rotation by
/// Exp(phi) on the right.
Pose exp_map(const Tangent& delta);
/// Inverse of exp_map. Throws NearSingularRotation if the angle is within
/// 1e-6 of pi.
Tangent log_map(const Pose& pose);

/// Geodesic angle between two rotations (radians, in [0, pi]).
double rotation_angle(const Quat& a, const Quat& b);

/// Fixed transform from the optical camera frame (z forward, x right, y down)
/// into the body frame (x forward, y left, z up). Poses everywhere in the
/// library are body-frame poses of the camera; projection works in the
/// optical frame.
const Pose& body_from_optical();

/// Converts a body-frame camera pose in the world to an optical-frame pose.
inline Pose to_optical(const Pose& body_pose) { return body_pose * body_from_optical(); }
inline Pose to_body(const Pose& optical_pose) {
  return optical_pose * body_from_optical().inverse();
}

struct CameraIntrinsics {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;

  /// Throws InvalidIntrinsics when fx, fy <= 0 or the principal point is
  /// outside the image.
  void validate() const;
  bool contains(const Vec2& uv) const {
    return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() < width && uv.y() < height;
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Valid sensor depth interval (exclusive bounds), meters.
struct DepthRange {
  double min = 0.05;
  double max = 20.0;
  bool contains(double d) const { return d > min && d < max; }
};

constexpr double kProjectionZMin = 1e-6;

/// Pinhole projection; nullopt when behind the camera or outside the image.
std::optional<Vec2> project(const CameraIntrinsics& K, const Vec3& p_cam,
                            double z_min = kProjectionZMin);
/// Pinhole projection without the image-bounds test.
std::optional<Vec2> project_unbounded(const CameraIntrinsics& K, const Vec3& p_cam,
                                      double z_min = kProjectionZMin);

/// Lifts a pixel to the optical camera frame. Throws InvalidDepth outside
/// `range`.
Vec3 unproject(const CameraIntrinsics& K, const Vec2& uv, double depth,
               const DepthRange& range = {});

/// `x y z qw qx qy qz`, 17 significant digits.
std::string format_pose(const Pose& pose);
/// Parses the format_pose layout. Throws FormatError.
Pose parse_pose(std::string_view text);

/// "%.17g" formatting for doubles; used by every text writer.
std::string format_double(double v, int significant_digits = 17);

}  // namespace vloc
