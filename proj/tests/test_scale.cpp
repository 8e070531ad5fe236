#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dslam/errors.hpp"
#include "dslam/scale.hpp"
#include "test_util.hpp"

namespace dslam {
namespace {

ScaleProblem ratios(const std::vector<double>& r, const std::vector<double>& c) {
  ScaleProblem p;
  for (std::size_t i = 0; i < r.size(); ++i) p.samples.push_back({r[i], 1.0, c[i], 0.0});
  return p;
}

TEST(ScaleGate, AllRetained) {
  ScaleProblem p = ratios(std::vector<double>(12, 2.0), std::vector<double>(12, 1.0));
  EXPECT_EQ(gate_samples(p).samples.size(), 12u);
}

TEST(ScaleGate, InfiniteStdRejected) {
  ScaleProblem p = ratios(std::vector<double>(12, 2.0), std::vector<double>(12, 1.0));
  for (auto& s : p.samples) s.rel_std = std::numeric_limits<double>::infinity();
  EXPECT_THROW(gate_samples(p), InsufficientSamplesError);
}

TEST(ScaleGate, KeepsExactlySubThreshold) {
  ScaleProblem p;
  p.t_sigma = 0.5;
  for (int i = 0; i < 30; ++i) p.samples.push_back({1.0 + i, 1.0, 1.0, 0.05 * i});
  const ScaleProblem g = gate_samples(p);
  ASSERT_EQ(g.samples.size(), 11u);  // rel_std 0.00 .. 0.50
  for (std::size_t i = 0; i < g.samples.size(); ++i) EXPECT_EQ(g.samples[i].d, 1.0 + i);
}

TEST(ScaleGate, InvalidDepthsDropped) {
  ScaleProblem p = ratios(std::vector<double>(14, 2.0), std::vector<double>(14, 1.0));
  p.samples[0].d_hat = 0.0;
  p.samples[1].d = -1.0;
  p.samples[2].d = std::nan("");
  EXPECT_EQ(gate_samples(p).samples.size(), 11u);
}

TEST(ScaleInit, ConstantRatios) {
  EXPECT_EQ(init_scale_weighted_median(ratios({2, 2, 2}, {0.1, 5, 1})), 2.0);
}

TEST(ScaleInit, WeightedMedian) {
  EXPECT_EQ(init_scale_weighted_median(ratios({1, 2, 3}, {0.2, 0.2, 0.6})), 3.0);
  EXPECT_EQ(init_scale_weighted_median(ratios({3, 1, 2}, {0.6, 0.2, 0.2})), 3.0);
}

TEST(ScaleInit, ZeroConfidenceUsesUnweightedMedian) {
  EXPECT_EQ(init_scale_weighted_median(ratios({5, 1, 3}, {0, 0, 0})), 3.0);
}

TEST(ScaleInit, RobustToOutliers) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const ScaleProblem p = test::synthetic_scale_problem(rng, 2.0, 1000, 0.3, 50.0);
    const double s = init_scale_weighted_median(p);
    EXPECT_GE(s, 1.8);
    EXPECT_LE(s, 2.2);
  }
}

TEST(ScaleIrls, ExactRatio) {
  ScaleProblem p;
  for (int i = 0; i < 20; ++i) p.samples.push_back({2.0 * (0.5 + 0.1 * i), 0.5 + 0.1 * i, 0.1 + i, 0});
  EXPECT_NEAR(estimate_scale_irls(p, 1.0).s_star, 2.0, 1e-12);
}

TEST(ScaleIrls, SingleSample) {
  ScaleProblem p;
  p.samples.push_back({3.0, 1.0, 1.0, 0.0});
  EXPECT_NEAR(estimate_scale_irls(p, 1.0).s_star, 3.0, 1e-12);
}

TEST(ScaleIrls, OutliersAndGridOracle) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const ScaleProblem p = test::synthetic_scale_problem(rng, 2.0, 300, 0.3, 100.0);
    const ScaleEstimate e = estimate_scale_irls(p, init_scale_weighted_median(p));
    EXPECT_NEAR(e.s_star, 2.0, 0.02);
    const double oracle = test::grid_search_scale(p, e.huber_delta);
    EXPECT_NEAR(e.s_star, oracle, 1e-3 * oracle);
  }
}

TEST(ScaleIrls, ObjectiveNotAboveInit) {
  std::mt19937_64 rng(3);
  const ScaleProblem p = test::synthetic_scale_problem(rng, 0.7, 200, 0.3, 100.0);
  const double init = init_scale_weighted_median(p);
  const ScaleEstimate e = estimate_scale_irls(p, init);
  EXPECT_LE(scale_objective(p, e.s_star, e.huber_delta), scale_objective(p, init, e.huber_delta));
}

TEST(ScaleIrls, LeastSquaresWithoutOutliers) {
  std::mt19937_64 rng(4);
  ScaleProblem p;
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double dh = u(rng);
    p.samples.push_back({1.5 * dh * (1.0 + 1e-3 * (u(rng) - 1.25)), dh, 1.0, 0.0});
  }
  // Tiny residuals stay inside the Huber band, so IRLS is plain least squares.
  double num = 0, den = 0;
  for (const auto& s : p.samples) {
    num += s.d * s.d_hat;
    den += s.d_hat * s.d_hat;
  }
  const ScaleEstimate e = estimate_scale_irls(p, 1.5);
  if (e.inlier_count == 50) EXPECT_NEAR(e.s_star, num / den, 1e-12);
}

TEST(ScaleIrls, EquivarianceInObservedDepth) {
  std::mt19937_64 rng(5);
  const ScaleProblem p = test::synthetic_scale_problem(rng, 2.0, 200, 0.3, 100.0);
  const double s = estimate_scale_irls(p, init_scale_weighted_median(p)).s_star;
  for (double gamma : {0.1, 3.0, 7.5}) {
    ScaleProblem q = p;
    for (auto& smp : q.samples) smp.d *= gamma;
    EXPECT_NEAR(estimate_scale_irls(q, init_scale_weighted_median(q)).s_star, gamma * s, 1e-9 * gamma * s);
  }
}

// Scaling the prior by gamma divides s*, since the model is d ~ s * d_hat.
TEST(ScaleIrls, EquivarianceInPriorDepth) {
  std::mt19937_64 rng(6);
  const ScaleProblem p = test::synthetic_scale_problem(rng, 2.0, 200, 0.3, 100.0);
  const double s = estimate_scale_irls(p, init_scale_weighted_median(p)).s_star;
  for (double gamma : {0.1, 3.0, 7.5}) {
    ScaleProblem q = p;
    for (auto& smp : q.samples) smp.d_hat *= gamma;
    EXPECT_NEAR(estimate_scale_irls(q, init_scale_weighted_median(q)).s_star, s / gamma, 1e-9 * s / gamma);
  }
}

TEST(ScaleIrls, RejectsNonPositiveInit) {
  ScaleProblem p;
  p.samples.push_back({3.0, 1.0, 1.0, 0.0});
  EXPECT_THROW(estimate_scale_irls(p, 0.0), Error);
}

PriorFrameData small_prior() {
  PriorFrameData p;
  p.frame_id = 0;
  p.depth = Raster(4, 3, 4.0f);
  p.depth.at(0, 0) = 0.0f;
  p.confidence = Raster(4, 3, 1.0f);
  p.motion_prob = Raster(4, 3, 0.0f);
  return p;
}

TEST(ApplyScale, IdentityAndHalving) {
  const PriorFrameData p = small_prior();
  EXPECT_EQ(apply_scale(p, 1.0).aligned_depth_raster(), p.depth);
  const PriorFrameData q = apply_scale(p, 2.0);
  EXPECT_EQ(q.aligned_depth(q.depth.index(1, 1)), 2.0);
  EXPECT_EQ(q.aligned_depth(q.depth.index(0, 0)), 0.0);
}

TEST(ApplyScale, RoundTrip) {
  const PriorFrameData p = small_prior();
  const PriorFrameData q = apply_scale(apply_scale(p, 3.7), 1.0 / 3.7);
  for (std::size_t i = 0; i < p.depth.size(); ++i) {
    EXPECT_NEAR(q.aligned_depth(i), p.aligned_depth(i), 1e-12);
  }
}

TEST(ApplyScale, RejectsNonPositive) {
  EXPECT_THROW(apply_scale(small_prior(), 0.0), DomainError);
}

}  // namespace
}  // namespace dslam
