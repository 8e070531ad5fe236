#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dslam/geometry.hpp"
#include "dslam/provider.hpp"
#include "dslam/raster.hpp"

namespace dslam {

enum class CameraPath { Orbit, Forward, RotationDominant, RandomWalk };

std::string to_string(CameraPath path);
/// Throws ParseError on an unknown name.
CameraPath camera_path_from_string(const std::string& name);

struct SceneNoise {
  double sigma_flow = 0.0;      // px, isotropic Gaussian on correspondences
  double sigma_depth = 0.0;     // log-space std of per-pixel depth noise
  double depth_tilt = 0.0;      // std of a per-frame planar log-depth distortion
  double p_outlier = 0.0;       // probability of a uniform in-image correspondence
  double mask_error_rate = 0.0; // probability of flipping a motion label
  double batch_scale_min = 0.25;
  double batch_scale_max = 4.0;
  /// Batch 0 answers in ground-truth scale; later batches stay random.
  bool anchor_first_batch = false;
};

struct SceneSpec {
  int n_frames = 40;
  CameraIntrinsics intrinsics{100.0, 100.0, 64.0, 48.0, 128, 96};
  double dt = 1.0 / 30.0;

  int n_static_points = 1500;
  std::array<double, 3> static_box_min{-0.75, -0.55, 0.5};
  std::array<double, 3> static_box_max{0.75, 0.55, 1.5};

  int n_moving_objects = 0;
  int points_per_object = 300;
  double object_radius = 0.125;
  double object_depth_min = 0.5;
  double object_depth_max = 0.875;
  double object_speed_min = 0.0025;  // units/frame
  double object_speed_max = 0.0075;
  double object_angular_speed = 0.0;  // rad/frame

  CameraPath path = CameraPath::Forward;
  double path_speed = 0.005;    // translation per frame
  double path_rotation = 0.05;  // rotation amplitude (rad)
  double path_period = 40.0;    // frames per oscillation

  /// Recompute masks from actual scene motion rather than object ownership.
  bool mask_by_motion = false;
  /// Correspondences exist only between frames at most this far apart.
  int flow_max_gap = 24;

  SceneNoise noise;
  std::uint64_t seed = 0;

  /// Throws DomainError for negative counts or noise, bad scale range or no points.
  void validate() const;
};

inline constexpr double kMotionEpsilon = 1e-6;

struct GroundTruth {
  std::vector<Se3Pose> poses;        // world -> camera per frame
  std::vector<double> timestamps;
  std::vector<Raster> depth;         // splatted nearest depth, 0 where no point
  std::vector<Raster> motion_mask;   // 1 on moving pixels, else 0
  /// Index of the point that won each pixel, -1 when empty.
  std::vector<std::vector<std::int32_t>> owner;

  std::vector<Vec3> static_points;
  /// Body-frame coordinates and owning object of every moving point.
  std::vector<Vec3> object_points;
  std::vector<int> object_of_point;
  /// Object body -> world per object per frame.
  std::vector<std::vector<Se3Pose>> object_poses;

  /// Scale factor of each prior request, indexed by batch id.
  std::vector<double> batch_scales;

  int num_points() const {
    return static_cast<int>(static_points.size() + object_points.size());
  }
  /// World position of point `index` at `frame` (static points first).
  Vec3 point_world(int index, int frame) const;
  /// Object id of point `index`, -1 for static points.
  int object_id(int index) const;
};

/// Deterministic dynamic scene; also answers as a prior provider.
class SyntheticScene final : public PriorProvider {
 public:
  /// Throws DomainError on a degenerate spec (no points).
  explicit SyntheticScene(const SceneSpec& spec);

  const SceneSpec& spec() const { return spec_; }
  const GroundTruth& ground_truth() const { return gt_; }

  CameraIntrinsics intrinsics() const override { return spec_.intrinsics; }
  int num_frames() const override { return spec_.n_frames; }
  double timestamp(int frame_id) const override;

  PriorBatchResponse request_priors(std::span<const int> frame_ids) override;
  std::vector<FlowObservation> track_patches(std::span<const Patch> patches,
                                             int target_frame) override;

  /// Prior rasters before the batch scale is applied (depth noise included).
  PriorFrameData base_prior(int frame_id) const;

  /// Correspondences of all valid pixels of `source` in `target`; nullopt
  /// when the frames are further apart than flow_max_gap.
  std::optional<FlowTable> flow_table(int source, int target) const;

  /// Rewinds the batch counter so a second run sees the same scales.
  void reset_batches() { next_batch_ = 0; }

 private:
  void check_frame(int frame_id) const;

  SceneSpec spec_;
  GroundTruth gt_;
  int next_batch_ = 0;
  mutable std::map<std::pair<int, int>, std::optional<FlowTable>> flow_cache_;
  mutable std::map<int, PriorFrameData> prior_cache_;
};

/// Writes the sequence directory read by FileProvider plus ground truth:
/// gt_traj.tum, scales.txt and gt/<id>/depth.dpr, gt/<id>/mask.prb.
void export_sequence(const SyntheticScene& scene, const std::filesystem::path& dir);

}  // namespace dslam
