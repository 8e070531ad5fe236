#include "dslam/geometry.hpp"

#include <cmath>
#include <string>

#include "dslam/errors.hpp"

namespace dslam {

namespace {

Eigen::Quaterniond normalized(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond out = q.normalized();
  // Canonical hemisphere keeps serialized poses unique.
  if (out.w() < 0.0) out.coeffs() *= -1.0;
  return out;
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Se3Pose::Se3Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(normalized(rotation)), translation_(translation) {}

Se3Pose Se3Pose::FromCoeffs(const Eigen::Vector4d& xyzw, const Vec3& translation) {
  Eigen::Quaterniond q;
  q.coeffs() = xyzw;
  return Se3Pose(q, translation);
}

Se3Pose Se3Pose::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Se3Pose(inv, -(inv * translation_));
}

Se3Pose Se3Pose::operator*(const Se3Pose& rhs) const {
  return Se3Pose(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
}

double Se3Pose::angle() const {
  const double vec_norm = rotation_.vec().norm();
  return 2.0 * std::atan2(vec_norm, std::abs(rotation_.w()));
}

PoseDistance pose_distance(const Se3Pose& a, const Se3Pose& b) {
  const Se3Pose rel = a.inverse() * b;
  return {rel.angle(), (a.translation() - b.translation()).norm()};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DomainError("image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw DomainError("principal point outside the image");
  }
}

Vec3 backproject(const CameraIntrinsics& intr, const Pixel& px, double inv_depth) {
  if (!(inv_depth > 0.0)) {
    throw DomainError("inverse depth must be positive, got " + std::to_string(inv_depth));
  }
  return Vec3((px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0) / inv_depth;
}

std::optional<Pixel> try_project(const CameraIntrinsics& intr, const Vec3& point) {
  if (!(point.z() > kMinProjectionDepth)) return std::nullopt;
  return Pixel{intr.fx * point.x() / point.z() + intr.cx,
               intr.fy * point.y() / point.z() + intr.cy};
}

Pixel project(const CameraIntrinsics& intr, const Vec3& point) {
  auto px = try_project(intr, point);
  if (!px) throw BehindCameraError("point depth " + std::to_string(point.z()) + " behind camera");
  return *px;
}

Pixel reproject(const Se3Pose& pose_i, const Se3Pose& pose_j,
                const CameraIntrinsics& intr, const Pixel& px, double inv_depth) {
  const Vec3 point_i = backproject(intr, px, inv_depth);
  return project(intr, pose_j * (pose_i.inverse() * point_i));
}

std::optional<ReprojectionJacobians> reproject_with_jacobians(
    const Se3Pose& pose_i, const Se3Pose& pose_j, const CameraIntrinsics& intr,
    const Pixel& px, double inv_depth) {
  if (!(inv_depth > 0.0)) {
    throw DomainError("inverse depth must be positive, got " + std::to_string(inv_depth));
  }
  const Vec3 ray((px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0);
  const Vec3 point_i = ray / inv_depth;

  const Mat3 r_i = pose_i.rotation_matrix();
  const Mat3 r_j = pose_j.rotation_matrix();
  const Mat3 r_ij = r_j * r_i.transpose();
  const Vec3 t_ij = pose_j.translation() - r_ij * pose_i.translation();
  const Vec3 point_j = r_ij * point_i + t_ij;

  const double z = point_j.z();
  if (!(z > kMinProjectionDepth)) return std::nullopt;

  ReprojectionJacobians out;
  out.depth_j = z;
  out.pixel = {intr.fx * point_j.x() / z + intr.cx, intr.fy * point_j.y() / z + intr.cy};

  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << intr.fx / z, 0.0, -intr.fx * point_j.x() / (z * z),
            0.0, intr.fy / z, -intr.fy * point_j.y() / (z * z);

  Mat36 d_point_j;
  d_point_j.leftCols<3>().setIdentity();
  d_point_j.rightCols<3>() = -skew(point_j);
  out.d_pose_j = d_proj * d_point_j;

  Mat36 d_point_i;
  d_point_i.leftCols<3>() = -r_ij;
  d_point_i.rightCols<3>() = r_ij * skew(point_i);
  out.d_pose_i = d_proj * d_point_i;

  out.d_inv_depth = d_proj * (r_ij * (-ray / (inv_depth * inv_depth)));
  return out;
}

Se3Pose se3_exp(const Vec6& delta) {
  const Vec3 rho = delta.head<3>();
  const Vec3 phi = delta.tail<3>();
  const double theta = phi.norm();
  const Mat3 phi_hat = skew(phi);

  Mat3 v;
  Eigen::Quaterniond q;
  if (theta < 1e-8) {
    v = Mat3::Identity() + 0.5 * phi_hat;
    q = Eigen::Quaterniond(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
  } else {
    const double theta2 = theta * theta;
    v = Mat3::Identity() + (1.0 - std::cos(theta)) / theta2 * phi_hat +
        (theta - std::sin(theta)) / (theta2 * theta) * phi_hat * phi_hat;
    q = Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
  }
  return Se3Pose(q, v * rho);
}

Vec6 se3_log(const Se3Pose& pose) {
  const Eigen::AngleAxisd aa(pose.rotation());
  double theta = aa.angle();
  Vec3 axis = aa.axis();
  if (theta > M_PI) {
    theta = 2.0 * M_PI - theta;
    axis = -axis;
  }
  const Vec3 phi = theta * axis;
  const Mat3 phi_hat = skew(phi);
  Mat3 v_inv;
  if (theta < 1e-8) {
    v_inv = Mat3::Identity() - 0.5 * phi_hat;
  } else {
    const double half = 0.5 * theta;
    v_inv = Mat3::Identity() - 0.5 * phi_hat +
            (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta) * phi_hat * phi_hat;
  }
  Vec6 out;
  out.head<3>() = v_inv * pose.translation();
  out.tail<3>() = phi;
  return out;
}

Se3Pose se3_retract(const Se3Pose& pose, const Vec6& delta) {
  return se3_exp(delta) * pose;
}

}  // namespace dslam
