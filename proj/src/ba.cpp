#include "dslam/ba.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dslam/errors.hpp"

namespace dslam {

namespace {

struct WindowIndex {
  std::unordered_map<int, int> frame;
  std::unordered_map<int, int> patch;

  explicit WindowIndex(const Window& window) {
    for (std::size_t i = 0; i < window.frames.size(); ++i) {
      frame.emplace(window.frames[i].frame_id, static_cast<int>(i));
    }
    for (std::size_t k = 0; k < window.patches.size(); ++k) {
      patch.emplace(window.patches[k].patch_id, static_cast<int>(k));
    }
  }
};

int lookup(const std::unordered_map<int, int>& map, int key) {
  auto it = map.find(key);
  return it == map.end() ? -1 : it->second;
}

/// Weight of the prior term of each patch; 0 when it has none.
std::vector<double> prior_weights(const Window& window, const WindowIndex& index,
                                  bool prior_enabled) {
  std::vector<double> out(window.patches.size(), 0.0);
  if (!prior_enabled) return out;
  for (std::size_t k = 0; k < window.patches.size(); ++k) {
    const Patch& patch = window.patches[k];
    const int f = lookup(index.frame, patch.owner_frame);
    if (f < 0 || !patch.has_prior) continue;
    out[k] = window.frames[static_cast<std::size_t>(f)].prior_weight;
  }
  return out;
}

}  // namespace

void Window::validate() const {
  const WindowIndex index(*this);
  if (index.frame.size() != frames.size()) throw DomainError("duplicate frame id in window");
  if (index.patch.size() != patches.size()) throw DomainError("duplicate patch id in window");
  for (const Patch& patch : patches) {
    if (!(patch.inv_depth > 0.0)) {
      throw DomainError("patch " + std::to_string(patch.patch_id) + " has non-positive inverse depth");
    }
    if (lookup(index.frame, patch.owner_frame) < 0) {
      throw DomainError("patch " + std::to_string(patch.patch_id) + " owned by a frame outside the window");
    }
  }
  for (const FlowObservation& obs : observations) {
    const int k = lookup(index.patch, obs.patch_id);
    if (k < 0) throw DomainError("observation of unknown patch " + std::to_string(obs.patch_id));
    if (lookup(index.frame, obs.target_frame) < 0) {
      throw DomainError("observation into frame " + std::to_string(obs.target_frame) +
                        " outside the window");
    }
    if (obs.source_frame != patches[static_cast<std::size_t>(k)].owner_frame ||
        obs.source_frame == obs.target_frame) {
      throw DomainError("observation of patch " + std::to_string(obs.patch_id) +
                        " has inconsistent frames");
    }
  }
}

int Window::frame_index(int frame_id) const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].frame_id == frame_id) return static_cast<int>(i);
  }
  return -1;
}

int Window::patch_index(int patch_id) const {
  for (std::size_t k = 0; k < patches.size(); ++k) {
    if (patches[k].patch_id == patch_id) return static_cast<int>(k);
  }
  return -1;
}

Eigen::MatrixXd NormalSystem::dense_hessian() const {
  const Eigen::Index np = B.rows();
  const Eigen::Index nd = C.size();
  Eigen::MatrixXd h(np + nd, np + nd);
  h.topLeftCorner(np, np) = B;
  h.topLeftCorner(np, np).diagonal().array() += lambda;
  h.topRightCorner(np, nd) = E;
  h.bottomLeftCorner(nd, np) = E.transpose();
  h.bottomRightCorner(nd, nd).setZero();
  h.bottomRightCorner(nd, nd).diagonal() = C.array() + lambda;
  return h;
}

NormalSystem build_normal_system(const Window& window, double huber_px, bool prior_enabled,
                                 double lambda) {
  if (window.empty()) throw DomainError("empty window");
  if (window.observations.empty()) throw UnderconstrainedError("window has no observations");

  const WindowIndex index(window);
  const auto n_frames = static_cast<Eigen::Index>(window.frames.size());
  const auto n_patches = static_cast<Eigen::Index>(window.patches.size());

  NormalSystem sys;
  sys.lambda = lambda;
  sys.B = Eigen::MatrixXd::Zero(6 * n_frames, 6 * n_frames);
  sys.C = Eigen::VectorXd::Zero(n_patches);
  sys.E = Eigen::MatrixXd::Zero(6 * n_frames, n_patches);
  sys.v = Eigen::VectorXd::Zero(6 * n_frames);
  sys.w = Eigen::VectorXd::Zero(n_patches);
  sys.fixed_pose.resize(static_cast<std::size_t>(n_frames));
  sys.fixed_depth.resize(static_cast<std::size_t>(n_patches));
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    sys.fixed_pose[static_cast<std::size_t>(f)] =
        window.fixed_frames.count(window.frames[static_cast<std::size_t>(f)].frame_id) > 0;
  }
  for (Eigen::Index k = 0; k < n_patches; ++k) {
    sys.fixed_depth[static_cast<std::size_t>(k)] =
        window.fixed_patches.count(window.patches[static_cast<std::size_t>(k)].patch_id) > 0;
  }

  for (const FlowObservation& obs : window.observations) {
    if (!obs.valid) continue;
    const int k = lookup(index.patch, obs.patch_id);
    const int i = lookup(index.frame, obs.source_frame);
    const int j = lookup(index.frame, obs.target_frame);
    if (k < 0 || i < 0 || j < 0) throw DomainError("observation references data outside the window");
    const Patch& patch = window.patches[static_cast<std::size_t>(k)];
    const auto jac = reproject_with_jacobians(window.frames[static_cast<std::size_t>(i)].pose,
                                              window.frames[static_cast<std::size_t>(j)].pose,
                                              window.intrinsics, patch.center, patch.inv_depth);
    if (!jac) continue;

    const Vec2 r = obs.observed.vec() - jac->pixel.vec();
    const double weight = huber_weight(r.norm(), huber_px);
    const bool free_i = !sys.fixed_pose[static_cast<std::size_t>(i)];
    const bool free_j = !sys.fixed_pose[static_cast<std::size_t>(j)];
    const bool free_d = !sys.fixed_depth[static_cast<std::size_t>(k)];
    const Eigen::Index oi = 6 * i;
    const Eigen::Index oj = 6 * j;

    if (free_i) {
      sys.B.block<6, 6>(oi, oi).noalias() += weight * jac->d_pose_i.transpose() * jac->d_pose_i;
      sys.v.segment<6>(oi).noalias() += weight * jac->d_pose_i.transpose() * r;
      if (free_d) sys.E.block<6, 1>(oi, k).noalias() += weight * jac->d_pose_i.transpose() * jac->d_inv_depth;
    }
    if (free_j) {
      sys.B.block<6, 6>(oj, oj).noalias() += weight * jac->d_pose_j.transpose() * jac->d_pose_j;
      sys.v.segment<6>(oj).noalias() += weight * jac->d_pose_j.transpose() * r;
      if (free_d) sys.E.block<6, 1>(oj, k).noalias() += weight * jac->d_pose_j.transpose() * jac->d_inv_depth;
    }
    if (free_i && free_j) {
      const Eigen::Matrix<double, 6, 6> cross = weight * jac->d_pose_i.transpose() * jac->d_pose_j;
      sys.B.block<6, 6>(oi, oj) += cross;
      sys.B.block<6, 6>(oj, oi) += cross.transpose();
    }
    if (free_d) {
      sys.C[k] += weight * jac->d_inv_depth.squaredNorm();
      sys.w[k] += weight * jac->d_inv_depth.dot(r);
    }
  }

  const std::vector<double> prior_w = prior_weights(window, index, prior_enabled);
  for (Eigen::Index k = 0; k < n_patches; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (sys.fixed_depth[uk]) {
      sys.C[k] = 1.0;
      continue;
    }
    if (prior_w[uk] > 0.0) {
      const Patch& patch = window.patches[uk];
      sys.C[k] += prior_w[uk];
      sys.w[k] += prior_w[uk] * (patch.prior_inv_depth - patch.inv_depth);
    }
  }
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    if (sys.fixed_pose[static_cast<std::size_t>(f)]) {
      sys.B.block<6, 6>(6 * f, 6 * f).setIdentity();
    }
  }
  return sys;
}

double total_cost(const Window& window, double huber_px, bool prior_enabled) {
  const WindowIndex index(window);
  double cost = 0.0;
  for (const FlowObservation& obs : window.observations) {
    if (!obs.valid) continue;
    const int k = lookup(index.patch, obs.patch_id);
    const int i = lookup(index.frame, obs.source_frame);
    const int j = lookup(index.frame, obs.target_frame);
    if (k < 0 || i < 0 || j < 0) continue;
    const Patch& patch = window.patches[static_cast<std::size_t>(k)];
    const Vec3 point_i = backproject(window.intrinsics, patch.center, patch.inv_depth);
    const Se3Pose rel = window.frames[static_cast<std::size_t>(j)].pose *
                        window.frames[static_cast<std::size_t>(i)].pose.inverse();
    const auto px = try_project(window.intrinsics, rel * point_i);
    if (!px) continue;
    cost += huber_cost((obs.observed.vec() - px->vec()).norm(), huber_px);
  }
  const std::vector<double> prior_w = prior_weights(window, index, prior_enabled);
  for (std::size_t k = 0; k < window.patches.size(); ++k) {
    if (prior_w[k] <= 0.0 || window.fixed_patches.count(window.patches[k].patch_id)) continue;
    const double e = window.patches[k].inv_depth - window.patches[k].prior_inv_depth;
    cost += prior_w[k] * e * e;
  }
  return cost;
}

namespace {

/// Damped Schur complement S = (B + lambda I) - E C^-1 E^T and C^-1.
bool reduce(const NormalSystem& sys, Eigen::MatrixXd& schur, Eigen::VectorXd& c_inv) {
  const Eigen::VectorXd c_damped = sys.C.array() + sys.lambda;
  if ((c_damped.array() <= 0.0).any()) return false;
  c_inv = c_damped.cwiseInverse();
  schur = sys.B;
  schur.diagonal().array() += sys.lambda;
  if (sys.E.size() > 0) schur.noalias() -= sys.E * c_inv.asDiagonal() * sys.E.transpose();
  return true;
}

}  // namespace

std::optional<SchurSolution> solve_schur(const NormalSystem& sys) {
  Eigen::MatrixXd schur;
  Eigen::VectorXd c_inv;
  if (!reduce(sys, schur, c_inv)) return std::nullopt;

  SchurSolution out;
  if (schur.rows() > 0) {
    const Eigen::LLT<Eigen::MatrixXd> llt(schur);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd rhs = sys.v - sys.E * c_inv.cwiseProduct(sys.w);
    out.delta_poses = llt.solve(rhs);
    if (!out.delta_poses.allFinite()) return std::nullopt;
  } else {
    out.delta_poses.resize(0);
  }
  out.delta_depths = c_inv.cwiseProduct(sys.w - sys.E.transpose() * out.delta_poses);
  return out;
}

std::optional<Eigen::MatrixXd> pose_covariance(const NormalSystem& sys) {
  Eigen::MatrixXd schur;
  Eigen::VectorXd c_inv;
  if (!reduce(sys, schur, c_inv)) return std::nullopt;
  if (schur.rows() == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::LLT<Eigen::MatrixXd> llt(schur);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(schur.rows(), schur.cols()));
  for (std::size_t f = 0; f < sys.fixed_pose.size(); ++f) {
    if (!sys.fixed_pose[f]) continue;
    const auto o = static_cast<Eigen::Index>(6 * f);
    cov.middleRows(o, 6).setZero();
    cov.middleCols(o, 6).setZero();
  }
  return cov;
}

Eigen::VectorXd depth_marginal_covariance(const NormalSystem& sys,
                                          const Eigen::MatrixXd& pose_cov) {
  const Eigen::Index n = sys.C.size();
  Eigen::VectorXd var(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k < static_cast<Eigen::Index>(sys.fixed_depth.size()) &&
        sys.fixed_depth[static_cast<std::size_t>(k)]) {
      var[k] = 0.0;
      continue;
    }
    const double c_inv = 1.0 / (sys.C[k] + sys.lambda);
    double coupled = 0.0;
    if (pose_cov.size() > 0) {
      const auto e = sys.E.col(k);
      coupled = e.dot(pose_cov * e);
    }
    var[k] = c_inv + c_inv * c_inv * coupled;
  }
  return var;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

RelativeDepthStd relative_depth_std(std::span<const Patch> patches,
                                    std::span<const double> depth_var,
                                    std::span<const int> frame_ids) {
  if (patches.size() != depth_var.size()) throw DomainError("one variance per patch required");
  RelativeDepthStd out;
  out.per_patch.reserve(patches.size());
  for (std::size_t k = 0; k < patches.size(); ++k) {
    if (!(patches[k].inv_depth > 0.0)) throw DomainError("inverse depth must be positive");
    if (!(depth_var[k] >= 0.0)) throw DomainError("depth variance must be non-negative");
    out.per_patch.push_back(std::sqrt(depth_var[k]) / patches[k].inv_depth);
  }
  for (int frame_id : frame_ids) {
    std::vector<double> values;
    for (std::size_t k = 0; k < patches.size(); ++k) {
      if (patches[k].owner_frame == frame_id) values.push_back(out.per_patch[k]);
    }
    if (values.empty()) {
      out.frame_median.emplace_back(std::nullopt);
    } else {
      out.frame_median.emplace_back(lower_median(std::move(values)));
    }
  }
  return out;
}

double frame_weight(std::optional<double> sigma_med, double alpha, double beta,
                    double undefined_weight) {
  if (!(alpha > 0.0)) throw DomainError("sigmoid steepness must be positive");
  if (!sigma_med || std::isnan(*sigma_med)) return undefined_weight;
  return 1.0 / (1.0 + std::exp(-alpha * (*sigma_med - beta)));
}

CovarianceReport covariance_report(const Window& window, const LmConfig& config) {
  CovarianceReport report;
  for (const auto& f : window.frames) report.frame_ids.push_back(f.frame_id);
  report.frame_median_rel_std.assign(window.frames.size(), std::nullopt);
  report.rel_depth_std.assign(window.patches.size(), std::numeric_limits<double>::infinity());
  if (window.observations.empty()) return report;

  const NormalSystem sys =
      build_normal_system(window, config.huber_px, config.prior_enabled, config.cov_damping);
  const auto pose_cov = pose_covariance(sys);
  if (!pose_cov) return report;
  report.valid = true;
  report.pose_cov = *pose_cov;
  report.depth_var = depth_marginal_covariance(sys, *pose_cov);
  const std::vector<double> var(report.depth_var.data(),
                                report.depth_var.data() + report.depth_var.size());
  RelativeDepthStd rel = relative_depth_std(window.patches, var, report.frame_ids);
  report.rel_depth_std = std::move(rel.per_patch);
  report.frame_median_rel_std = std::move(rel.frame_median);
  return report;
}

namespace {

Window apply_step(const Window& window, const NormalSystem& sys, const SchurSolution& step,
                  double d_min) {
  Window out = window;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    if (sys.fixed_pose[f]) continue;
    const Vec6 delta = step.delta_poses.segment<6>(static_cast<Eigen::Index>(6 * f));
    out.frames[f].pose = se3_retract(out.frames[f].pose, delta);
  }
  for (std::size_t k = 0; k < out.patches.size(); ++k) {
    if (sys.fixed_depth[k]) continue;
    const double d = out.patches[k].inv_depth + step.delta_depths[static_cast<Eigen::Index>(k)];
    out.patches[k].inv_depth = std::max(d, d_min);
  }
  return out;
}

double max_abs(const SchurSolution& step) {
  double m = 0.0;
  if (step.delta_poses.size() > 0) m = step.delta_poses.cwiseAbs().maxCoeff();
  if (step.delta_depths.size() > 0) m = std::max(m, step.delta_depths.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

LmResult lm_optimize(Window window, const LmConfig& config) {
  window.validate();
  LmResult result;
  LmStats& stats = result.stats;

  double lambda = config.lambda0;
  double cost = total_cost(window, config.huber_px, config.prior_enabled);
  stats.initial_cost = cost;

  bool converged = false;
  while (stats.iterations < config.max_iters) {
    ++stats.iterations;
    const NormalSystem sys = build_normal_system(window, config.huber_px, config.prior_enabled, lambda);
    const auto step = solve_schur(sys);
    if (!step) {
      lambda *= config.lm_up;
      continue;
    }
    if (max_abs(*step) < config.eps_step) {
      converged = true;
      break;
    }
    Window candidate = apply_step(window, sys, *step, config.d_min);
    const double new_cost = total_cost(candidate, config.huber_px, config.prior_enabled);
    if (new_cost < cost) {
      const double decrease = (cost - new_cost) / std::max(cost, std::numeric_limits<double>::min());
      window = std::move(candidate);
      cost = new_cost;
      ++stats.accepted_steps;
      lambda *= config.lm_down;
      if (decrease < config.eps_cost) {
        converged = true;
        break;
      }
    } else {
      lambda *= config.lm_up;
    }
  }

  stats.final_cost = cost;
  stats.final_lambda = lambda;
  stats.converged = converged;
  if (config.compute_covariance) result.covariance = covariance_report(window, config);
  result.window = std::move(window);
  return result;
}

std::vector<double> patch_mean_residuals(const Window& window) {
  const WindowIndex index(window);
  std::vector<double> sum(window.patches.size(), 0.0);
  std::vector<int> count(window.patches.size(), 0);
  for (const FlowObservation& obs : window.observations) {
    if (!obs.valid) continue;
    const int k = lookup(index.patch, obs.patch_id);
    const int i = lookup(index.frame, obs.source_frame);
    const int j = lookup(index.frame, obs.target_frame);
    if (k < 0 || i < 0 || j < 0) continue;
    const Patch& patch = window.patches[static_cast<std::size_t>(k)];
    const Se3Pose rel = window.frames[static_cast<std::size_t>(j)].pose *
                        window.frames[static_cast<std::size_t>(i)].pose.inverse();
    const auto px = try_project(window.intrinsics,
                                rel * backproject(window.intrinsics, patch.center, patch.inv_depth));
    if (!px) continue;
    sum[static_cast<std::size_t>(k)] += (obs.observed.vec() - px->vec()).norm();
    ++count[static_cast<std::size_t>(k)];
  }
  std::vector<double> out(window.patches.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (count[k] > 0) out[k] = sum[k] / count[k];
  }
  return out;
}

}  // namespace dslam
