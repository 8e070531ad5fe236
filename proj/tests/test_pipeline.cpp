#include <gtest/gtest.h>

#include <algorithm>

#include "dslam/eval.hpp"
#include "dslam/pipeline.hpp"
#include "dslam/sim.hpp"

namespace dslam {
namespace {

std::vector<Se3Pose> gt_for(const SyntheticScene& scene, const std::vector<StampedPose>& traj) {
  std::vector<Se3Pose> out;
  for (const auto& p : traj) out.push_back(scene.ground_truth().poses[p.frame_id]);
  return out;
}

std::vector<Se3Pose> poses(const std::vector<StampedPose>& traj) {
  std::vector<Se3Pose> out;
  for (const auto& p : traj) out.push_back(p.pose);
  return out;
}

TEST(Pipeline, NoiseFreeStaticConverges) {
  SceneSpec spec;
  spec.n_frames = 40;
  spec.seed = 2;
  SyntheticScene scene(spec);
  const PipelineResult r = run_pipeline(scene, PipelineConfig{});
  ASSERT_TRUE(r.initialized);
  EXPECT_EQ(r.trajectory.size(), 40u);
  EXPECT_LT(ate_rmse(poses(r.trajectory), gt_for(scene, r.trajectory)).rmse, 1e-5);
}

TEST(Pipeline, FirstBatchDefinesScale) {
  SceneSpec spec;
  spec.n_frames = 30;
  spec.seed = 3;
  SyntheticScene scene(spec);
  const PipelineResult r = run_pipeline(scene, PipelineConfig{});
  const double b0 = scene.ground_truth().batch_scales[0];
  const AteResult a = ate_rmse(poses(r.trajectory), gt_for(scene, r.trajectory));
  EXPECT_NEAR(1.0 / a.alignment.scale, b0, 1e-6 * b0);
}

TEST(Pipeline, Deterministic) {
  SceneSpec spec;
  spec.n_frames = 30;
  spec.n_moving_objects = 2;
  spec.noise.sigma_flow = 0.5;
  spec.noise.sigma_depth = 0.05;
  spec.seed = 4;
  SyntheticScene scene(spec);
  PipelineConfig cfg;
  cfg.seed = 9;
  const std::string a = format_tum(run_pipeline(scene, cfg).trajectory);
  scene.reset_batches();
  const std::string b = format_tum(run_pipeline(scene, cfg).trajectory);
  EXPECT_EQ(a, b);
}

TEST(Pipeline, WindowBounded) {
  SceneSpec spec;
  spec.n_frames = 80;
  spec.path_speed = 0.01;
  spec.seed = 5;
  SyntheticScene scene(spec);
  PipelineConfig cfg;
  cfg.F_window = 4;
  Pipeline p(scene, cfg);
  for (int t = 0; t < spec.n_frames; ++t) {
    p.process_frame(t);
    EXPECT_LE(p.window().frames.size(), 4u);
  }
  EXPECT_GT(p.result().keyframes.size(), 4u);
}

TEST(Pipeline, NoParallaxNeverInitializes) {
  SceneSpec spec;
  spec.n_frames = 35;
  spec.path_speed = 0.0;
  spec.path_rotation = 0.0;
  SyntheticScene scene(spec);
  PipelineConfig cfg;
  cfg.max_bootstrap_frames = 30;
  Pipeline p(scene, cfg);
  for (int t = 0; t < spec.n_frames; ++t) p.process_frame(t);
  EXPECT_FALSE(p.initialized());
  EXPECT_TRUE(p.bootstrap_failed());
}

TEST(Pipeline, FastMotionMakesEveryFrameKeyframe) {
  SceneSpec spec;
  spec.n_frames = 20;
  spec.path_speed = 0.08;
  spec.seed = 6;
  SyntheticScene scene(spec);
  PipelineConfig cfg;
  cfg.kf_flow_px = 2.0;
  const PipelineResult r = run_pipeline(scene, cfg);
  ASSERT_GE(r.keyframes.size(), 4u);
  for (std::size_t k = 2; k < r.keyframes.size(); ++k) {
    EXPECT_EQ(r.keyframes[k].frame_id, r.keyframes[k - 1].frame_id + 1);
  }
}

TEST(Pipeline, StationaryGapRule) {
  PipelineConfig cfg;
  cfg.kf_flow_px = 1e9;
  cfg.kf_max_gap = 4;
  SceneSpec spec;
  spec.n_frames = 40;
  spec.seed = 7;
  SyntheticScene scene(spec);
  const PipelineResult r = run_pipeline(scene, cfg);
  ASSERT_GE(r.keyframes.size(), 4u);
  for (std::size_t k = 2; k < r.keyframes.size(); ++k) {
    EXPECT_EQ(r.keyframes[k].frame_id - r.keyframes[k - 1].frame_id, 4);
  }
}

TEST(Pipeline, NoPriorInvariantToDepthScale) {
  SceneSpec spec;
  spec.n_frames = 40;
  spec.seed = 8;
  PipelineConfig cfg;
  cfg.use_prior = false;
  cfg.use_uncertainty = false;
  SyntheticScene a(spec);
  spec.noise.batch_scale_min *= 3.0;
  spec.noise.batch_scale_max *= 3.0;
  SyntheticScene b(spec);
  const PipelineResult ra = run_pipeline(a, cfg);
  const PipelineResult rb = run_pipeline(b, cfg);
  ASSERT_EQ(ra.trajectory.size(), rb.trajectory.size());
  const double ate = ate_rmse(poses(rb.trajectory), poses(ra.trajectory)).rmse;
  EXPECT_LT(ate, 1e-9);
}

TEST(PipelineConfig, Validate) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.K = 0;
  EXPECT_ANY_THROW(cfg.validate());
  cfg = PipelineConfig{};
  cfg.s_d = 1.5;
  EXPECT_ANY_THROW(cfg.validate());
}

}  // namespace
}  // namespace dslam
