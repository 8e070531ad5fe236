#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace dslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Minimum camera-frame depth for a valid projection.
inline constexpr double kMinProjectionDepth = 1e-6;

/// Rigid transform mapping world coordinates into the camera frame,
/// X_cam = R * X_world + t.
///
/// The rotation is a unit quaternion; Eigen keeps its coefficients in
/// (x, y, z, w) order, which is the scalar-last layout used everywhere in
/// this library (TUM files, bindings, serialized poses).
///
/// Tangent vectors are ordered (translation, rotation) and act on the left:
/// retract(T, delta) = exp(delta) * T.
class Se3Pose {
 public:
  Se3Pose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}
  Se3Pose(const Eigen::Quaterniond& rotation, const Vec3& translation);

  static Se3Pose Identity() { return {}; }
  /// Builds from scalar-last quaternion coefficients (qx, qy, qz, qw).
  static Se3Pose FromCoeffs(const Eigen::Vector4d& xyzw, const Vec3& translation);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Se3Pose inverse() const;
  /// (*this) applied after `rhs`.
  Se3Pose operator*(const Se3Pose& rhs) const;
  Vec3 operator*(const Vec3& point) const { return rotation_ * point + translation_; }

  /// Rotation angle of this transform in radians, in [0, pi].
  double angle() const;

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

/// Rotation angle and translation distance between two poses.
struct PoseDistance {
  double angle = 0.0;
  double translation = 0.0;
};
PoseDistance pose_distance(const Se3Pose& a, const Se3Pose& b);

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws DomainError when the invariants fx, fy > 0 and the principal
  /// point inside the image do not hold.
  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  Vec2 vec() const { return {u, v}; }
};

Vec3 backproject(const CameraIntrinsics& intr, const Pixel& px, double inv_depth);

/// Throws BehindCameraError when point.z() <= kMinProjectionDepth.
Pixel project(const CameraIntrinsics& intr, const Vec3& point);
std::optional<Pixel> try_project(const CameraIntrinsics& intr, const Vec3& point);

/// pi(T_j * T_i^-1 * pi^-1(px, inv_depth)).
Pixel reproject(const Se3Pose& pose_i, const Se3Pose& pose_j,
                const CameraIntrinsics& intr, const Pixel& px, double inv_depth);

/// Reprojection together with its derivatives. The pose Jacobians are taken
/// w.r.t. left perturbations exp(delta) * T of the respective pose.
struct ReprojectionJacobians {
  Pixel pixel;
  /// Depth of the point in camera j.
  double depth_j = 0.0;
  Mat26 d_pose_i;
  Mat26 d_pose_j;
  Vec2 d_inv_depth;
};

/// Returns nullopt when the point lands behind camera j.
std::optional<ReprojectionJacobians> reproject_with_jacobians(
    const Se3Pose& pose_i, const Se3Pose& pose_j, const CameraIntrinsics& intr,
    const Pixel& px, double inv_depth);

/// SE(3) exponential of a (translation, rotation) tangent vector.
Se3Pose se3_exp(const Vec6& delta);
/// Inverse of se3_exp for rotation angles below pi.
Vec6 se3_log(const Se3Pose& pose);

/// Left-multiplicative update exp(delta) * pose.
Se3Pose se3_retract(const Se3Pose& pose, const Vec6& delta);

Mat3 skew(const Vec3& v);

}  // namespace dslam
