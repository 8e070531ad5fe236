#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <random>
#include <vector>

#include "dslam/ba.hpp"
#include "dslam/geometry.hpp"
#include "dslam/scale.hpp"
#include "dslam/sim.hpp"

namespace dslam::test {

Se3Pose random_pose(std::mt19937_64& rng, double max_angle, double max_translation);

struct JacobianCheck {
  double max_rel_error = 0.0;
};

/// Random intrinsics, pose pair, pixel and inverse depth with the point in
/// front of both cameras; analytic vs central-difference Jacobians (h = 1e-6),
/// relative error per block in the Frobenius norm.
JacobianCheck check_reprojection_jacobians(std::mt19937_64& rng);

/// Random solvable block system with a positive definite full Hessian.
NormalSystem random_block_system(std::mt19937_64& rng, int frames, int patches, double lambda);

struct SimWindowSpec {
  int n_frames = 6;
  int frame_stride = 3;
  int patches_per_frame = 20;
  double pose_perturbation = 0.0;   // max rotation (rad) and translation
  double depth_perturbation = 0.0;  // relative
  std::uint64_t seed = 0;
};

/// Window with ground-truth poses and inverse depths from a noise-free scene,
/// first frame and one patch fixed; optionally perturbed.
Window sim_window(SyntheticScene& scene, const SimWindowSpec& spec);

/// Scale samples of true ratio `s` with a fraction of gross outliers at
/// ratio `outlier_ratio` and log-normal noise of std sigma * m, where the
/// confidence is 1/m.
ScaleProblem synthetic_scale_problem(std::mt19937_64& rng, double s, int n,
                                     double outlier_fraction, double outlier_ratio,
                                     double sigma = 0.005);

/// Minimizer of the scale objective at `delta` by log-spaced grid search
/// over [lo, hi] followed by golden-section refinement.
double grid_search_scale(const ScaleProblem& problem, double huber_delta, double lo = 0.01,
                         double hi = 100.0);

}  // namespace dslam::test
