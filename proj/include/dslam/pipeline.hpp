#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "dslam/ba.hpp"
#include "dslam/provider.hpp"
#include "dslam/raster.hpp"
#include "dslam/tum.hpp"

namespace dslam {

struct PipelineConfig {
  int K = 96;            // patches per keyframe
  int F_window = 10;     // keyframes in the optimization window
  int N_batch = 6;       // frames per prior request (historical + current)
  double s_d = 0.5;      // motion probability threshold for static sampling
  double t_sigma = 0.5;  // rel. depth std gate for scale samples
  double alpha = 10.0;
  double beta = 0.2;
  double huber_px = 2.0;
  double retire_factor = 4.0;  // retire patches with mean residual above factor * huber_px
  int min_patches = 8;         // fewest patches a keyframe may spawn
  int min_scale_samples = 10;

  double kf_flow_px = 8.0;
  int kf_max_gap = 5;
  double bootstrap_px = 4.0;
  int max_bootstrap_frames = 30;

  bool use_mask = true;
  bool use_prior = true;
  bool use_uncertainty = true;
  double fixed_weight = 1.0;
  /// Global factor on the prior loss, converting inverse-depth residuals to
  /// the pixel units of the flow loss; frame weights multiply it.
  double prior_scale = 1000.0;

  double lambda0 = 1e-4;
  double lm_down = 0.5;
  double lm_up = 4.0;
  int max_iters = 50;
  double eps_cost = 1e-8;
  double eps_step = 1e-8;
  double d_min = 1e-6;
  double cov_damping = 1e-6;

  std::uint64_t seed = 0;

  /// Throws DomainError when a field leaves its documented range.
  void validate() const;
  LmConfig lm_config() const;
};

/// Per-keyframe record, also written as the diagnostics log.
struct KeyframeDiagnostics {
  int frame_id = -1;
  int batch_id = -1;
  double s_star = 1.0;
  /// False when alignment fell back to an earlier scale or to 1.
  bool scale_estimated = false;
  /// Samples inside the final Huber band of the scale fit.
  int scale_inliers = 0;
  /// Prior of this keyframe excluded from BA (no usable scale).
  bool unscaled = false;
  std::optional<double> sigma_med;
  double w_f = 0.0;
  int n_patches = 0;
  int n_retired = 0;
  /// Fewer static candidates than K were available.
  bool low_confidence = false;
  int lm_iterations = 0;
};

struct PipelineResult {
  std::vector<StampedPose> trajectory;
  std::vector<KeyframeDiagnostics> keyframes;
  bool initialized = false;
  /// Scale-aligned prior depth of each keyframe at its insertion.
  std::map<int, Raster> keyframe_depth;
  std::size_t max_live_patches = 0;
  std::size_t max_live_observations = 0;
};

/// Online loop over one provider: bootstrap, keyframe selection, prior
/// batches with scale alignment, sliding-window BA, pose-only tracking of
/// non-keyframes.
class Pipeline {
 public:
  Pipeline(PriorProvider& provider, PipelineConfig config);

  /// Frames must arrive in increasing order.
  void process_frame(int frame_id);
  bool initialized() const { return initialized_; }
  /// True once max_bootstrap_frames passed without initialization.
  bool bootstrap_failed() const;

  /// Trajectory of every processed frame using the latest pose estimates.
  std::vector<StampedPose> trajectory() const;
  PipelineResult result() const;

  /// Current optimization window (for inspection).
  const Window& window() const { return window_; }

 private:
  struct FrameRecord {
    int frame_id = -1;
    double timestamp = 0.0;
    bool keyframe = false;
    int reference = -1;  // keyframe the relative pose is expressed against
    Se3Pose relative;    // T_frame * T_reference^-1
    Se3Pose final_pose;  // keyframes leaving the window
    bool finalized = false;
  };

  const FrameRecord& record(int frame_id) const;
  void start(int frame_id);
  Se3Pose predict_pose() const;
  Se3Pose current_pose(const FrameRecord& rec) const;
  /// Pose-only fit of `frame_id` against every live patch.
  Se3Pose track(int frame_id, const Se3Pose& init, std::vector<FlowObservation>& obs) const;
  double median_flow(int keyframe_id, const std::vector<FlowObservation>& obs) const;
  void insert_keyframe(int frame_id, const Se3Pose& pose, std::vector<FlowObservation> obs);
  double align_scale(const PriorBatchResponse& batch, KeyframeDiagnostics& diag);
  std::vector<Patch> spawn_patches(const PriorFrameData& prior, KeyframeDiagnostics& diag);
  void trim_window();
  void set_gauge();
  int retire_patches();
  void retrack_bootstrap_frames();
  void note_sizes();

  PriorProvider& provider_;
  PipelineConfig config_;
  CameraIntrinsics intrinsics_;
  std::mt19937_64 rng_;

  Window window_;
  CovarianceReport last_report_;
  std::map<int, double> patch_rel_std_;  // by patch id, from the last report
  std::vector<FrameRecord> frames_;
  std::vector<int> keyframe_ids_;
  std::vector<KeyframeDiagnostics> diagnostics_;
  std::map<int, Raster> keyframe_depth_;
  std::optional<double> last_s_star_;
  int next_patch_id_ = 0;
  bool initialized_ = false;
  std::size_t max_live_patches_ = 0;
  std::size_t max_live_observations_ = 0;
};

/// Runs every provider frame (or the first `n_frames`) through a pipeline.
PipelineResult run_pipeline(PriorProvider& provider, const PipelineConfig& config,
                            int n_frames = -1);

}  // namespace dslam
