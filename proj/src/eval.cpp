#include "dslam/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dslam/errors.hpp"

namespace dslam {

AlignMode align_mode_from_string(const std::string& name) {
  if (name == "sim3") return AlignMode::Sim3;
  if (name == "se3") return AlignMode::SE3;
  if (name == "none") return AlignMode::None;
  throw ParseError("unknown alignment mode '" + name + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> associate(std::span<const StampedPose> est,
                                                           std::span<const StampedPose> gt,
                                                           double tolerance) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(gt.size(), false);
  for (std::size_t i = 0; i < est.size(); ++i) {
    std::size_t best = gt.size();
    double best_dt = tolerance;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double dt = std::abs(est[i].timestamp - gt[j].timestamp);
      if (!used[j] && dt <= best_dt) {
        if (best == gt.size() || dt < best_dt) {
          best = j;
          best_dt = dt;
        }
      }
    }
    if (best != gt.size()) {
      used[best] = true;
      pairs.emplace_back(i, best);
    }
  }
  if (pairs.size() < 2) {
    throw AssociationError("only " + std::to_string(pairs.size()) +
                           " poses associated within the timestamp tolerance");
  }
  return pairs;
}

std::vector<Vec3> camera_centers(std::span<const Se3Pose> poses) {
  std::vector<Vec3> out;
  out.reserve(poses.size());
  for (const Se3Pose& p : poses) out.push_back(p.inverse().translation());
  return out;
}

Similarity align_points(std::span<const Vec3> src, std::span<const Vec3> dst, AlignMode mode) {
  if (src.size() != dst.size()) throw DomainError("alignment needs equally many points");
  Similarity sim;
  if (mode == AlignMode::None) return sim;
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix3Xd a(3, n);
  Eigen::Matrix3Xd b(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    a.col(k) = src[static_cast<std::size_t>(k)];
    b.col(k) = dst[static_cast<std::size_t>(k)];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, mode == AlignMode::Sim3);
  const Mat3 sr = t.topLeftCorner<3, 3>();
  sim.scale = mode == AlignMode::Sim3 ? std::cbrt(sr.determinant()) : 1.0;
  sim.rotation = sr / sim.scale;
  sim.translation = t.topRightCorner<3, 1>();
  return sim;
}

namespace {

void check_matched(std::size_t est, std::size_t gt) {
  if (est != gt) throw DomainError("estimate and ground truth differ in length");
  if (est < 2) throw AssociationError("at least two matched poses are required");
}

}  // namespace

AteResult ate_rmse(std::span<const Se3Pose> est, std::span<const Se3Pose> gt, AlignMode mode) {
  check_matched(est.size(), gt.size());
  const auto pe = camera_centers(est);
  const auto pg = camera_centers(gt);
  AteResult out;
  out.alignment = align_points(pe, pg, mode);
  double sum = 0.0;
  for (std::size_t k = 0; k < pe.size(); ++k) {
    sum += (out.alignment.apply(pe[k]) - pg[k]).squaredNorm();
  }
  out.rmse = std::sqrt(sum / static_cast<double>(pe.size()));
  return out;
}

RpeResult rpe(std::span<const Se3Pose> est, std::span<const Se3Pose> gt, AlignMode mode) {
  check_matched(est.size(), gt.size());
  const double scale = mode == AlignMode::Sim3 ? ate_rmse(est, gt, mode).alignment.scale : 1.0;
  RpeResult out;
  for (std::size_t k = 0; k + 1 < est.size(); ++k) {
    // w2c poses: T_k^-1 T_{k+1} in camera-to-world form equals T_k T_{k+1}^-1.
    const Se3Pose gt_rel = gt[k] * gt[k + 1].inverse();
    const Se3Pose est_raw = est[k] * est[k + 1].inverse();
    const Se3Pose est_rel(est_raw.rotation(), scale * est_raw.translation());
    const Se3Pose e = gt_rel.inverse() * est_rel;
    out.rte += e.translation().norm();
    out.rre += e.angle() * 180.0 / std::numbers::pi;
  }
  const auto pairs = static_cast<double>(est.size() - 1);
  out.rte /= pairs;
  out.rre /= pairs;
  return out;
}

DepthMetrics depth_metrics(std::span<const Raster> pred, std::span<const Raster> gt,
                           bool per_sequence_scale) {
  if (pred.size() != gt.size()) throw DomainError("prediction and ground truth counts differ");
  std::vector<std::pair<double, double>> px;  // (pred, gt)
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (!pred[f].same_shape(gt[f])) throw DomainError("depth raster shapes differ");
    for (std::size_t i = 0; i < pred[f].size(); ++i) {
      const double p = pred[f][i];
      const double g = gt[f][i];
      if (p > 0.0 && g > 0.0 && std::isfinite(p) && std::isfinite(g)) px.emplace_back(p, g);
    }
  }
  if (px.empty()) throw AssociationError("no pixel is valid in both depth sets");

  DepthMetrics out;
  out.pixels = px.size();
  if (per_sequence_scale) {
    std::vector<double> ratios;
    ratios.reserve(px.size());
    for (const auto& [p, g] : px) ratios.push_back(g / p);
    std::sort(ratios.begin(), ratios.end());
    const std::size_t n = ratios.size();
    out.scale = n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
  }
  double abs_rel = 0.0;
  std::size_t within = 0;
  for (const auto& [p0, g] : px) {
    const double p = out.scale * p0;
    abs_rel += std::abs(p - g) / g;
    if (std::max(p / g, g / p) < 1.25) ++within;
  }
  out.abs_rel = abs_rel / static_cast<double>(px.size());
  out.delta1 = static_cast<double>(within) / static_cast<double>(px.size());
  return out;
}

}  // namespace dslam
