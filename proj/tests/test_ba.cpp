#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dslam/ba.hpp"
#include "dslam/errors.hpp"
#include "dslam/eval.hpp"
#include "dslam/robust.hpp"
#include "test_util.hpp"

namespace dslam {
namespace {

// One pose coordinate coupled to one depth: [[4,1],[1,2]] x = [1,1].
NormalSystem scalar_system() {
  NormalSystem sys;
  sys.B = 4.0 * Eigen::MatrixXd::Identity(6, 6);
  sys.C = Eigen::VectorXd::Constant(1, 2.0);
  sys.E = Eigen::MatrixXd::Zero(6, 1);
  sys.E(0, 0) = 1.0;
  sys.v = Eigen::VectorXd::Zero(6);
  sys.v[0] = 1.0;
  sys.w = Eigen::VectorXd::Constant(1, 1.0);
  sys.fixed_pose = {false};
  sys.fixed_depth = {false};
  return sys;
}

TEST(Schur, ScalarSystem) {
  const auto sol = solve_schur(scalar_system());
  ASSERT_TRUE(sol);
  EXPECT_NEAR(sol->delta_poses[0], 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(sol->delta_depths[0], 3.0 / 7.0, 1e-15);
  for (int k = 1; k < 6; ++k) EXPECT_EQ(sol->delta_poses[k], 0.0);
}

TEST(Schur, ScalarCovariance) {
  const NormalSystem sys = scalar_system();
  const auto cov = pose_covariance(sys);
  ASSERT_TRUE(cov);
  EXPECT_NEAR((*cov)(0, 0), 1.0 / 3.5, 1e-15);
  const Eigen::VectorXd var = depth_marginal_covariance(sys, *cov);
  EXPECT_NEAR(var[0], 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(var[0], sys.dense_hessian().inverse()(6, 6), 1e-15);
}

TEST(Schur, MatchesDenseSolve) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const NormalSystem sys = test::random_block_system(rng, 5, 50, 1e-3);
    const auto sol = solve_schur(sys);
    ASSERT_TRUE(sol);
    Eigen::VectorXd rhs(sys.v.size() + sys.w.size());
    rhs << sys.v, sys.w;
    const Eigen::VectorXd x = sys.dense_hessian().ldlt().solve(rhs);
    Eigen::VectorXd got(rhs.size());
    got << sol->delta_poses, sol->delta_depths;
    EXPECT_LE((got - x).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Schur, CovarianceMatchesDenseInverse) {
  std::mt19937_64 rng(43);
  const NormalSystem sys = test::random_block_system(rng, 6, 120, 1e-6);
  const auto cov = pose_covariance(sys);
  ASSERT_TRUE(cov);
  const Eigen::MatrixXd inv = sys.dense_hessian().inverse();
  const int np = 36;
  EXPECT_LE(((*cov) - inv.topLeftCorner(np, np)).cwiseAbs().maxCoeff() /
                inv.topLeftCorner(np, np).cwiseAbs().maxCoeff(),
            1e-6);
  const Eigen::VectorXd var = depth_marginal_covariance(sys, *cov);
  for (int p = 0; p < 120; ++p) {
    EXPECT_NEAR(var[p], inv(np + p, np + p), 1e-6 * inv(np + p, np + p));
  }
}

TEST(Schur, IndefiniteReturnsNullopt) {
  NormalSystem sys = scalar_system();
  sys.C[0] = -3.0;
  EXPECT_FALSE(solve_schur(sys).has_value());
}

// Residual of the single observation as a function of the 13 free variables.
Vec2 residual(const Window& w, const Vec6& di, const Vec6& dj, double dd) {
  const Patch& p = w.patches[0];
  const Pixel r = reproject(se3_retract(w.frames[0].pose, di), se3_retract(w.frames[1].pose, dj),
                            w.intrinsics, p.center, p.inv_depth + dd);
  return r.vec() - w.observations[0].observed.vec();
}

TEST(NormalEquations, MatchFiniteDifferenceGaussNewton) {
  std::mt19937_64 rng(9);
  Window w;
  w.intrinsics = {100, 100, 64, 48, 128, 96};
  w.frames = {{0, test::random_pose(rng, 0.1, 0.1), 1.0}, {1, test::random_pose(rng, 0.1, 0.1), 1.0}};
  Patch p;
  p.patch_id = 0;
  p.owner_frame = 0;
  p.center = {70, 40};
  p.inv_depth = 0.8;
  p.has_prior = false;
  w.patches = {p};
  FlowObservation o;
  o.patch_id = 0;
  o.source_frame = 0;
  o.target_frame = 1;
  o.observed = reproject(w.frames[0].pose, w.frames[1].pose, w.intrinsics, p.center, 0.8);
  o.observed.u += 0.3;
  o.valid = true;
  w.observations = {o};

  const NormalSystem sys = build_normal_system(w, 1e6, false);
  constexpr double h = 1e-6;
  Eigen::Matrix<double, 2, 13> j;
  for (int c = 0; c < 13; ++c) {
    Vec6 di = Vec6::Zero(), dj = Vec6::Zero();
    double dd = 0;
    if (c < 6) di[c] = h; else if (c < 12) dj[c - 6] = h; else dd = h;
    j.col(c) = (residual(w, di, dj, dd) - residual(w, -di, -dj, -dd)) / (2 * h);
  }
  const Eigen::Matrix<double, 13, 13> h_fd = j.transpose() * j;
  const double scale = h_fd.cwiseAbs().maxCoeff();
  EXPECT_LE((sys.B - h_fd.topLeftCorner(12, 12)).cwiseAbs().maxCoeff(), 1e-6 * scale);
  EXPECT_LE((sys.E - h_fd.topRightCorner(12, 1)).cwiseAbs().maxCoeff(), 1e-6 * scale);
  EXPECT_NEAR(sys.C[0], h_fd(12, 12), 1e-6 * scale);
}

TEST(NormalEquations, EmptyObservationsThrow) {
  Window w;
  w.intrinsics = {100, 100, 64, 48, 128, 96};
  w.frames = {{0, Se3Pose(), 1.0}};
  EXPECT_THROW(build_normal_system(w, 2.0, false), UnderconstrainedError);
}

double window_ate(const Window& est, const Window& truth) {
  std::vector<Se3Pose> a, b;
  for (std::size_t f = 0; f < est.frames.size(); ++f) {
    a.push_back(est.frames[f].pose);
    b.push_back(truth.frames[f].pose);
  }
  return ate_rmse(a, b).rmse;
}

TEST(LevenbergMarquardt, ConvergesOnNoiseFreeWindow) {
  SceneSpec spec;
  spec.n_frames = 30;
  spec.seed = 5;
  SyntheticScene scene(spec);
  test::SimWindowSpec ws;
  ws.n_frames = 6;
  ws.frame_stride = 4;
  const Window truth = test::sim_window(scene, ws);
  ws.pose_perturbation = 0.01;
  ws.depth_perturbation = 0.05;
  const Window start = test::sim_window(scene, ws);
  LmConfig cfg;
  cfg.compute_covariance = false;
  const LmResult r = lm_optimize(start, cfg);
  EXPECT_LE(r.stats.final_cost, r.stats.initial_cost);
  EXPECT_LE(r.stats.iterations, 50);
  EXPECT_LT(window_ate(r.window, truth), 1e-5);
}

TEST(LevenbergMarquardt, HuberBeatsQuadraticUnderOutliers) {
  std::vector<double> huber, quad;
  for (int seed = 0; seed < 10; ++seed) {
    SceneSpec spec;
    spec.n_frames = 30;
    spec.seed = 100 + seed;
    spec.noise.p_outlier = 0.2;
    SyntheticScene scene(spec);
    SceneSpec clean_spec = spec;
    clean_spec.noise.p_outlier = 0.0;
    SyntheticScene clean(clean_spec);
    test::SimWindowSpec ws;
    ws.n_frames = 6;
    ws.frame_stride = 4;
    ws.seed = seed;
    const Window truth = test::sim_window(clean, ws);
    ws.pose_perturbation = 0.01;
    const Window start = test::sim_window(scene, ws);
    LmConfig cfg;
    cfg.compute_covariance = false;
    huber.push_back(window_ate(lm_optimize(start, cfg).window, truth));
    cfg.huber_px = 1e9;
    quad.push_back(window_ate(lm_optimize(start, cfg).window, truth));
  }
  std::sort(huber.begin(), huber.end());
  std::sort(quad.begin(), quad.end());
  EXPECT_LT(huber[5], quad[5]);
}

TEST(Uncertainty, RelativeDepthStd) {
  Patch p;
  p.owner_frame = 3;
  p.inv_depth = 2.0;
  const std::vector<Patch> patches{p};
  const std::vector<double> var{0.25};
  const std::vector<int> frames{3};
  const RelativeDepthStd r = relative_depth_std(patches, var, frames);
  EXPECT_DOUBLE_EQ(r.per_patch[0], 0.25);
  EXPECT_DOUBLE_EQ(r.per_patch[0] * (1.0 / p.inv_depth), 0.125);
  ASSERT_TRUE(r.frame_median[0]);
  EXPECT_DOUBLE_EQ(*r.frame_median[0], 0.25);
}

TEST(Uncertainty, LowerMedian) {
  EXPECT_EQ(lower_median({3, 1, 2}), 2);
  EXPECT_EQ(lower_median({4, 1, 3, 2}), 2);
}

TEST(Uncertainty, FrameWeight) {
  EXPECT_NEAR(frame_weight(0.6, 2.0, 0.1), 0.7310585786300049, 1e-12);
  EXPECT_DOUBLE_EQ(frame_weight(std::nullopt, 2.0, 0.1), kUndefinedFrameWeight);
  EXPECT_DOUBLE_EQ(frame_weight(0.1, 2.0, 0.1), 0.5);
}

TEST(Robust, Huber) {
  EXPECT_DOUBLE_EQ(huber_cost(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(huber_cost(3.0, 2.0), 8.0);
  EXPECT_DOUBLE_EQ(huber_weight(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(huber_weight(4.0, 2.0), 0.5);
}

}  // namespace
}  // namespace dslam
