#pragma once

#include <Eigen/Core>

#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "dslam/geometry.hpp"
#include "dslam/provider.hpp"
#include "dslam/robust.hpp"

namespace dslam {

struct WindowFrame {
  int frame_id = -1;
  Se3Pose pose;
  /// Weight w_f of the depth-prior term of patches owned by this frame.
  double prior_weight = 1.0;
};

/// Sliding optimization window: poses, patch inverse depths and the flow
/// edges between them.
struct Window {
  std::vector<WindowFrame> frames;
  std::vector<Patch> patches;
  std::vector<FlowObservation> observations;
  CameraIntrinsics intrinsics;
  /// Frame ids whose poses stay constant (gauge).
  std::set<int> fixed_frames;
  /// Patch ids whose inverse depths stay constant.
  std::set<int> fixed_patches;

  /// Throws DomainError when an observation references an unknown frame or
  /// patch, or a patch has a non-positive inverse depth.
  void validate() const;
  int frame_index(int frame_id) const;
  int patch_index(int patch_id) const;
  bool empty() const { return frames.empty(); }
};

/// Block normal equations [B E; E^T C] [dxi; dd] = [v; w]. B and C are
/// stored undamped; `lambda` is added to both diagonals when solving.
/// Fixed poses and depths appear as identity blocks with zero coupling and
/// zero gradient.
struct NormalSystem {
  Eigen::MatrixXd B;  // 6F x 6F
  Eigen::VectorXd C;  // P (diagonal)
  Eigen::MatrixXd E;  // 6F x P
  Eigen::VectorXd v;  // 6F
  Eigen::VectorXd w;  // P
  double lambda = 0.0;
  std::vector<bool> fixed_pose;   // per frame
  std::vector<bool> fixed_depth;  // per patch

  int num_frames() const { return static_cast<int>(B.rows() / 6); }
  int num_patches() const { return static_cast<int>(C.size()); }
  /// Full damped Hessian, for small systems only.
  Eigen::MatrixXd dense_hessian() const;
};

struct SchurSolution {
  Eigen::VectorXd delta_poses;   // 6F
  Eigen::VectorXd delta_depths;  // P
};

/// Accumulates J^T W J and J^T W r over the valid flow residuals (Huber on
/// the residual norm) plus, when `prior_enabled`, the terms
/// w_f * (d - d_prior)^2 of every patch that carries a prior. Residuals that
/// land behind the camera contribute nothing.
///
/// Throws UnderconstrainedError on an empty observation set.
NormalSystem build_normal_system(const Window& window, double huber_px, bool prior_enabled,
                                 double lambda = 0.0);

/// Robustified total cost of the window (flow plus weighted prior terms).
double total_cost(const Window& window, double huber_px, bool prior_enabled);

/// Schur-complement solve of the damped system. Returns nullopt when the
/// damped C has a non-positive entry or the reduced pose system is not
/// positive definite.
std::optional<SchurSolution> solve_schur(const NormalSystem& sys);

/// Sigma_T = (B - E C^-1 E^T)^-1 of the damped system via Cholesky; blocks of
/// fixed frames are zero. nullopt when the Schur complement is indefinite.
std::optional<Eigen::MatrixXd> pose_covariance(const NormalSystem& sys);

/// diag(C^-1 + C^-1 E^T Sigma_T E C^-1) evaluated patch by patch; zero for
/// fixed depths.
Eigen::VectorXd depth_marginal_covariance(const NormalSystem& sys,
                                          const Eigen::MatrixXd& pose_cov);

struct RelativeDepthStd {
  std::vector<double> per_patch;  // sigma_d / d
  /// Lower median of each frame's patches; nullopt for frames without patches.
  std::vector<std::optional<double>> frame_median;
};

/// sigma_z^rel = sqrt(var)/d per patch and its per-frame lower median, in the
/// order of `frame_ids`. Throws DomainError on d <= 0 or negative variance.
RelativeDepthStd relative_depth_std(std::span<const Patch> patches,
                                    std::span<const double> depth_var,
                                    std::span<const int> frame_ids);

/// Median; for an even count the smaller of the two middle elements.
double lower_median(std::vector<double> values);

inline constexpr double kUndefinedFrameWeight = 0.99;

/// w_f = 1 / (1 + exp(-alpha (sigma_med - beta))); an undefined frame
/// statistic maps to `undefined_weight`.
double frame_weight(std::optional<double> sigma_med, double alpha, double beta,
                    double undefined_weight = kUndefinedFrameWeight);

struct LmConfig {
  double huber_px = 2.0;
  bool prior_enabled = false;
  double lambda0 = 1e-4;
  double lm_down = 0.5;
  double lm_up = 4.0;
  int max_iters = 50;
  double eps_cost = 1e-8;
  double eps_step = 1e-8;
  double d_min = 1e-6;
  /// Damping of the system the covariance report is computed from.
  double cov_damping = 1e-6;
  /// Skip the covariance report (pose-only tracking does not need it).
  bool compute_covariance = true;
};

struct CovarianceReport {
  bool valid = false;
  Eigen::MatrixXd pose_cov;
  Eigen::VectorXd depth_var;
  std::vector<double> rel_depth_std;  // per patch, window order
  std::vector<int> frame_ids;
  std::vector<std::optional<double>> frame_median_rel_std;
};

struct LmStats {
  int iterations = 0;
  int accepted_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double final_lambda = 0.0;
  bool converged = false;
};

struct LmResult {
  Window window;
  CovarianceReport covariance;
  LmStats stats;
};

/// Levenberg-Marquardt over the window's free poses and depths. Accepted
/// steps strictly decrease total_cost; a run without an accepted step or
/// convergence is returned flagged non-converged.
LmResult lm_optimize(Window window, const LmConfig& config);

/// Covariance report at the window's current state.
CovarianceReport covariance_report(const Window& window, const LmConfig& config);

/// Mean reprojection residual norm per patch (window order); NaN for patches
/// without a usable observation.
std::vector<double> patch_mean_residuals(const Window& window);

}  // namespace dslam
