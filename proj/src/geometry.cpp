#include "vloc/geometry.hpp"

#include "vloc/errors.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace vloc {

namespace {

// Renormalize only when the squared norm has drifted measurably; a second
// pass over an already normalized quaternion leaves its bits untouched.
constexpr double kNormDriftTol = 1e-14;

}  // namespace

Pose::Pose(const Vec3& t, const Quat& q) : t_(t), q_(q) { canonicalize(); }

Pose::Pose(const Vec3& t, const Mat3& R) : t_(t), q_(Quat(R)) { canonicalize(); }

Pose Pose::planar(double x, double y, double z, double yaw) {
  return {Vec3(x, y, z), Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()))};
}

double Pose::yaw() const {
  const Mat3 R = rotation_matrix();
  return std::atan2(R(1, 0), R(0, 0));
}

void Pose::canonicalize() {
  const double n2 = q_.squaredNorm();
  if (!(n2 > 0.0) || !std::isfinite(n2)) {
    throw std::invalid_argument("Pose: quaternion must be finite and non-zero");
  }
  if (std::abs(n2 - 1.0) > kNormDriftTol) {
    q_.coeffs() /= std::sqrt(n2);
  }
  bool flip = q_.w() < 0.0;
  if (q_.w() == 0.0) {
    // 180 degree rotations: first non-zero vector component positive.
    for (int i = 0; i < 3; ++i) {
      if (q_.vec()[i] != 0.0) {
        flip = q_.vec()[i] < 0.0;
        break;
      }
    }
  }
  if (flip) q_.coeffs() = -q_.coeffs();
}

Pose Pose::inverse() const {
  const Quat qi = q_.conjugate();
  return {-(qi * t_), qi};
}

Pose Pose::operator*(const Pose& other) const {
  return {t_ + q_ * other.t_, q_ * other.q_};
}

bool Pose::operator==(const Pose& other) const {
  return t_ == other.t_ && q_.coeffs() == other.q_.coeffs();
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

Quat so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  double half_sinc;  // sin(theta / 2) / theta
  if (theta < 1e-6) {
    half_sinc = 0.5 - theta * theta / 48.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
  }
  Quat q(std::cos(0.5 * theta), half_sinc * phi.x(), half_sinc * phi.y(),
         half_sinc * phi.z());
  return q.normalized();
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  if (vn < 1e-10) {
    return 2.0 * q.vec() / q.w();
  }
  const double theta = 2.0 * std::atan2(vn, q.w());
  return theta / vn * q.vec();
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 W = skew(phi);
  if (theta < 1e-5) {
    return Mat3::Identity() + 0.5 * W + W * W / 12.0;
  }
  const double c = 1.0 / (theta * theta) -
                   (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

Pose exp_map(const Tangent& delta) {
  return {delta.head<3>(), so3_exp(delta.tail<3>())};
}

Tangent log_map(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation());
  if (phi.norm() >= std::numbers::pi - 1e-6) {
    throw NearSingularRotation("log_map: rotation angle too close to pi");
  }
  Tangent out;
  out << pose.translation(), phi;
  return out;
}

double rotation_angle(const Quat& a, const Quat& b) {
  // Fixed operand order makes the result bitwise symmetric in (a, b).
  const bool swap = std::lexicographical_compare(
      b.coeffs().data(), b.coeffs().data() + 4, a.coeffs().data(), a.coeffs().data() + 4);
  const Quat& lo = swap ? b : a;
  const Quat& hi = swap ? a : b;
  // 2 * acos(|w|) loses precision near zero; atan2 of the vector part does not.
  const Quat rel = lo.conjugate() * hi;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

const Pose& body_from_optical() {
  static const Pose kPose = [] {
    Mat3 R;
    // columns: optical x, y, z expressed in the body frame
    // clang-format off
    R <<  0.0,  0.0, 1.0,
         -1.0,  0.0, 0.0,
          0.0, -1.0, 0.0;
    // clang-format on
    return Pose(Vec3::Zero(), R);
  }();
  return kPose;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidIntrinsics("focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw InvalidIntrinsics("image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw InvalidIntrinsics("principal point outside the image");
  }
}

std::optional<Vec2> project_unbounded(const CameraIntrinsics& K, const Vec3& p_cam,
                                      double z_min) {
  if (!(p_cam.z() > z_min)) return std::nullopt;
  return Vec2(K.fx * p_cam.x() / p_cam.z() + K.cx, K.fy * p_cam.y() / p_cam.z() + K.cy);
}

std::optional<Vec2> project(const CameraIntrinsics& K, const Vec3& p_cam, double z_min) {
  auto uv = project_unbounded(K, p_cam, z_min);
  if (!uv || !K.contains(*uv)) return std::nullopt;
  return uv;
}

Vec3 unproject(const CameraIntrinsics& K, const Vec2& uv, double depth,
               const DepthRange& range) {
  if (!range.contains(depth)) {
    throw InvalidDepth("depth " + format_double(depth, 6) + " outside valid range");
  }
  return {(uv.x() - K.cx) / K.fx * depth, (uv.y() - K.cy) / K.fy * depth, depth};
}

std::string format_double(double v, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, v);
  return buf;
}

std::string format_pose(const Pose& pose) {
  const Vec3& t = pose.translation();
  const Quat& q = pose.rotation();
  std::string out;
  for (double v : {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()}) {
    if (!out.empty()) out += ' ';
    out += format_double(v);
  }
  return out;
}

Pose parse_pose(std::string_view text) {
  std::istringstream in{std::string(text)};
  double v[7];
  for (double& x : v) {
    if (!(in >> x)) throw FormatError("pose: expected 7 numbers in '" + std::string(text) + "'");
  }
  std::string extra;
  if (in >> extra) throw FormatError("pose: trailing data in '" + std::string(text) + "'");
  return {Vec3(v[0], v[1], v[2]), Quat(v[3], v[4], v[5], v[6])};
}

}  // namespace vloc
