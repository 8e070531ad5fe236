#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dslam/geometry.hpp"
#include "dslam/raster.hpp"
#include "dslam/tum.hpp"

namespace dslam {

enum class AlignMode { Sim3, SE3, None };

/// Throws ParseError for anything but "sim3", "se3" or "none".
AlignMode align_mode_from_string(const std::string& name);

/// Similarity x -> scale * R x + t taking estimate positions onto ground truth.
struct Similarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Pairs (estimate index, ground-truth index) whose timestamps differ by at
/// most `tolerance`, each ground-truth pose used once, in estimate order.
/// Throws AssociationError when fewer than two pairs are found.
std::vector<std::pair<std::size_t, std::size_t>> associate(std::span<const StampedPose> est,
                                                           std::span<const StampedPose> gt,
                                                           double tolerance = 0.02);

/// Camera centers of world -> camera poses.
std::vector<Vec3> camera_centers(std::span<const Se3Pose> poses);

/// Closed-form least-squares alignment of `src` onto `dst` (Umeyama). SE3
/// fixes the scale to 1; None returns the identity.
Similarity align_points(std::span<const Vec3> src, std::span<const Vec3> dst, AlignMode mode);

struct AteResult {
  double rmse = 0.0;
  Similarity alignment;
};

/// RMSE of camera-center residuals after alignment. Inputs are matched
/// world -> camera poses of equal length >= 2 (AssociationError otherwise).
AteResult ate_rmse(std::span<const Se3Pose> est, std::span<const Se3Pose> gt,
                   AlignMode mode = AlignMode::Sim3);

struct RpeResult {
  double rte = 0.0;  // scene units
  double rre = 0.0;  // degrees
};

/// Mean translation norm and rotation angle of (gt_rel)^-1 est_rel over
/// consecutive pairs, rel being the camera-to-world motion between them. In
/// Sim3 mode estimate translations are scaled by the ATE alignment scale.
RpeResult rpe(std::span<const Se3Pose> est, std::span<const Se3Pose> gt,
              AlignMode mode = AlignMode::Sim3);

struct DepthMetrics {
  double abs_rel = 0.0;
  double delta1 = 0.0;  // fraction with max(p/g, g/p) < 1.25
  double scale = 1.0;   // factor applied to predictions
  std::size_t pixels = 0;
};

/// Metrics over pixels valid (> 0) in both rasters of each pair. With
/// `per_sequence_scale` predictions are multiplied by the median of gt/pred
/// over all those pixels. Throws DomainError on shape mismatch and
/// AssociationError when no pixel overlaps.
DepthMetrics depth_metrics(std::span<const Raster> pred, std::span<const Raster> gt,
                           bool per_sequence_scale);

}  // namespace dslam
