#include "dslam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "dslam/errors.hpp"
#include "dslam/scale.hpp"

namespace dslam {

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid pipeline config: ") + what);
  };
  require(K >= 8, "K must be at least 8");
  require(F_window >= 3, "F_window must be at least 3");
  require(N_batch >= 2, "N_batch must be at least 2");
  require(s_d >= 0.0 && s_d <= 1.0, "s_d must lie in [0,1]");
  require(t_sigma > 0.0, "t_sigma must be positive");
  require(alpha > 0.0, "alpha must be positive");
  require(std::isfinite(beta), "beta must be finite");
  require(huber_px > 0.0, "huber_px must be positive");
  require(retire_factor > 0.0, "retire_factor must be positive");
  require(min_patches >= 1, "min_patches must be at least 1");
  require(min_scale_samples >= 1, "min_scale_samples must be at least 1");
  require(kf_flow_px > 0.0, "kf_flow_px must be positive");
  require(kf_max_gap >= 1, "kf_max_gap must be at least 1");
  require(bootstrap_px >= 0.0, "bootstrap_px must be non-negative");
  require(max_bootstrap_frames >= 1, "max_bootstrap_frames must be at least 1");
  require(fixed_weight >= 0.0, "fixed_weight must be non-negative");
  require(prior_scale > 0.0, "prior_scale must be positive");
  require(lambda0 > 0.0 && lm_down > 0.0 && lm_down < 1.0 && lm_up > 1.0,
          "LM damping schedule out of range");
  require(max_iters >= 1, "max_iters must be at least 1");
  require(eps_cost >= 0.0 && eps_step >= 0.0 && d_min > 0.0 && cov_damping >= 0.0,
          "LM tolerances out of range");
}

LmConfig PipelineConfig::lm_config() const {
  LmConfig c;
  c.huber_px = huber_px;
  c.prior_enabled = use_prior;
  c.lambda0 = lambda0;
  c.lm_down = lm_down;
  c.lm_up = lm_up;
  c.max_iters = max_iters;
  c.eps_cost = eps_cost;
  c.eps_step = eps_step;
  c.d_min = d_min;
  c.cov_damping = cov_damping;
  return c;
}

Pipeline::Pipeline(PriorProvider& provider, PipelineConfig config)
    : provider_(provider), config_(config), intrinsics_(provider.intrinsics()), rng_(config.seed) {
  config_.validate();
  window_.intrinsics = intrinsics_;
}

bool Pipeline::bootstrap_failed() const {
  return !initialized_ && static_cast<int>(frames_.size()) > config_.max_bootstrap_frames;
}

namespace {

std::uint32_t pixel_index(const Patch& patch, int width) {
  return static_cast<std::uint32_t>(patch.center.v) * static_cast<std::uint32_t>(width) +
         static_cast<std::uint32_t>(patch.center.u);
}

int count_valid(const std::vector<FlowObservation>& obs) {
  return static_cast<int>(std::count_if(obs.begin(), obs.end(), [](const auto& o) { return o.valid; }));
}

}  // namespace

const Pipeline::FrameRecord& Pipeline::record(int frame_id) const {
  auto it = std::lower_bound(frames_.begin(), frames_.end(), frame_id,
                             [](const FrameRecord& r, int id) { return r.frame_id < id; });
  if (it == frames_.end() || it->frame_id != frame_id) {
    throw LookupError("frame " + std::to_string(frame_id) + " was not processed");
  }
  return *it;
}

Se3Pose Pipeline::current_pose(const FrameRecord& rec) const {
  if (rec.keyframe) {
    if (rec.finalized) return rec.final_pose;
    const int f = window_.frame_index(rec.frame_id);
    return window_.frames[static_cast<std::size_t>(f)].pose;
  }
  return rec.relative * current_pose(record(rec.reference));
}

Se3Pose Pipeline::predict_pose() const {
  const Se3Pose last = current_pose(frames_.back());
  if (frames_.size() < 2) return last;
  const Se3Pose before = current_pose(frames_[frames_.size() - 2]);
  return (last * before.inverse()) * last;
}

Se3Pose Pipeline::track(int frame_id, const Se3Pose& init,
                        std::vector<FlowObservation>& obs) const {
  obs = provider_.track_patches(window_.patches, frame_id);
  if (count_valid(obs) < 6) return init;

  Window w;
  w.intrinsics = intrinsics_;
  w.frames = window_.frames;
  w.patches = window_.patches;
  for (const auto& f : w.frames) w.fixed_frames.insert(f.frame_id);
  for (const auto& p : w.patches) w.fixed_patches.insert(p.patch_id);
  w.frames.push_back({frame_id, init, 0.0});
  w.observations = obs;

  LmConfig cfg = config_.lm_config();
  cfg.prior_enabled = false;
  cfg.compute_covariance = false;
  const LmResult res = lm_optimize(std::move(w), cfg);
  return res.window.frames.back().pose;
}

double Pipeline::median_flow(int keyframe_id, const std::vector<FlowObservation>& obs) const {
  std::unordered_map<int, Vec2> centers;
  for (const Patch& p : window_.patches) {
    if (p.owner_frame == keyframe_id) centers.emplace(p.patch_id, p.center.vec());
  }
  std::vector<double> flow;
  for (const FlowObservation& o : obs) {
    if (!o.valid || o.source_frame != keyframe_id) continue;
    auto it = centers.find(o.patch_id);
    if (it != centers.end()) flow.push_back((o.observed.vec() - it->second).norm());
  }
  if (flow.empty()) return std::numeric_limits<double>::infinity();
  return lower_median(std::move(flow));
}

std::vector<Patch> Pipeline::spawn_patches(const PriorFrameData& prior, KeyframeDiagnostics& diag) {
  auto draw = [&](int count) {
    return config_.use_mask ? sample_static_patches(prior, config_.s_d, count, rng_)
                            : sample_uniform_patches(prior, count, rng_);
  };
  std::vector<Patch> patches;
  try {
    patches = draw(config_.K);
  } catch (const NoStaticRegionError& e) {
    diag.low_confidence = true;
    if (static_cast<int>(e.available()) >= config_.min_patches) {
      patches = draw(static_cast<int>(e.available()));
    }
  }
  for (Patch& p : patches) {
    p.patch_id = next_patch_id_++;
    p.has_prior = !diag.unscaled;
  }
  return patches;
}

void Pipeline::start(int frame_id) {
  const int ids[] = {frame_id};
  PriorBatchResponse batch = provider_.request_priors(ids);
  KeyframeDiagnostics diag;
  diag.frame_id = frame_id;
  diag.batch_id = batch.batch_id;
  diag.s_star = 1.0;
  diag.scale_estimated = true;  // the first batch defines the system scale
  const PriorFrameData& prior = batch.frames.front();
  keyframe_depth_[frame_id] = prior.aligned_depth_raster();

  std::vector<Patch> patches = spawn_patches(prior, diag);
  if (patches.empty()) throw UnderconstrainedError("first frame offers no patches");
  window_.frames.push_back({frame_id, Se3Pose::Identity(), 1.0});
  window_.patches = std::move(patches);
  window_.fixed_frames = {frame_id};

  FrameRecord rec;
  rec.frame_id = frame_id;
  rec.timestamp = provider_.timestamp(frame_id);
  rec.keyframe = true;
  frames_.push_back(rec);
  keyframe_ids_.push_back(frame_id);

  diag.w_f = config_.use_uncertainty ? kUndefinedFrameWeight : config_.fixed_weight;
  diag.n_patches = static_cast<int>(window_.patches.size());
  diagnostics_.push_back(diag);
  note_sizes();
}

void Pipeline::process_frame(int frame_id) {
  if (!frames_.empty() && frame_id <= frames_.back().frame_id) {
    throw DomainError("frames must arrive in increasing order");
  }
  if (frames_.empty()) {
    start(frame_id);
    return;
  }

  std::vector<FlowObservation> obs;
  const Se3Pose pose = track(frame_id, predict_pose(), obs);
  const int ref = keyframe_ids_.back();
  const double flow = median_flow(ref, obs);
  const bool keyframe = initialized_ ? (flow > config_.kf_flow_px ||
                                        frame_id - ref >= config_.kf_max_gap)
                                     : std::isfinite(flow) && flow > config_.bootstrap_px;
  if (keyframe) {
    insert_keyframe(frame_id, pose, std::move(obs));
    if (!initialized_) {
      initialized_ = true;
      retrack_bootstrap_frames();
    }
    return;
  }

  FrameRecord rec;
  rec.frame_id = frame_id;
  rec.timestamp = provider_.timestamp(frame_id);
  rec.reference = ref;
  rec.relative = pose * current_pose(record(ref)).inverse();
  frames_.push_back(rec);
}

double Pipeline::align_scale(const PriorBatchResponse& batch, KeyframeDiagnostics& diag) {
  ScaleProblem problem;
  problem.t_sigma = config_.t_sigma;
  problem.min_samples = static_cast<std::size_t>(config_.min_scale_samples);
  for (const PriorFrameData& prior : batch.frames) {
    if (prior.frame_id == diag.frame_id) continue;
    for (const Patch& p : window_.patches) {
      if (p.owner_frame != prior.frame_id) continue;
      const std::uint32_t idx = pixel_index(p, prior.depth.width());
      const double z = prior.depth[idx];
      if (!(z > 0.0)) continue;
      ScaleSample s;
      s.d = p.inv_depth;
      s.d_hat = 1.0 / z;
      s.confidence = prior.confidence[idx];
      auto it = patch_rel_std_.find(p.patch_id);
      s.rel_std = it == patch_rel_std_.end() ? 0.0 : it->second;
      problem.samples.push_back(s);
    }
  }
  auto estimate = [&](const ScaleProblem& p) -> std::optional<ScaleEstimate> {
    try {
      const ScaleProblem gated = gate_samples(p);
      return estimate_scale_irls(gated, init_scale_weighted_median(gated));
    } catch (const InsufficientSamplesError&) {
    } catch (const EstimateFailedError&) {
    }
    return std::nullopt;
  };
  std::optional<ScaleEstimate> s = estimate(problem);
  if (!s) {
    // Every batch has its own scale, so an ungated fit beats reusing an old one.
    problem.t_sigma = std::numeric_limits<double>::infinity();
    s = estimate(problem);
  }
  if (s) {
    diag.scale_estimated = true;
    diag.scale_inliers = s->inlier_count;
    last_s_star_ = s->s_star;
    return s->s_star;
  }
  if (last_s_star_) return *last_s_star_;
  diag.unscaled = true;
  return 1.0;
}

void Pipeline::insert_keyframe(int frame_id, const Se3Pose& pose,
                               std::vector<FlowObservation> obs) {
  KeyframeDiagnostics diag;
  diag.frame_id = frame_id;

  std::vector<int> ids;
  const std::size_t hist = std::min(keyframe_ids_.size(), static_cast<std::size_t>(config_.N_batch - 1));
  ids.assign(keyframe_ids_.end() - static_cast<std::ptrdiff_t>(hist), keyframe_ids_.end());
  ids.push_back(frame_id);
  const PriorBatchResponse batch = provider_.request_priors(ids);
  diag.batch_id = batch.batch_id;
  diag.s_star = align_scale(batch, diag);

  const PriorFrameData prior = apply_scale(batch.frames.back(), diag.s_star);
  keyframe_depth_[frame_id] = prior.aligned_depth_raster();
  std::vector<Patch> patches = spawn_patches(prior, diag);

  std::vector<int> others;
  for (const auto& f : window_.frames) others.push_back(f.frame_id);
  window_.frames.push_back({frame_id, pose, 1.0});
  window_.observations.insert(window_.observations.end(), obs.begin(), obs.end());
  if (!patches.empty()) {
    for (int j : others) {
      auto fwd = provider_.track_patches(patches, j);
      window_.observations.insert(window_.observations.end(), fwd.begin(), fwd.end());
    }
  }
  window_.patches.insert(window_.patches.end(), patches.begin(), patches.end());

  FrameRecord rec;
  rec.frame_id = frame_id;
  rec.timestamp = provider_.timestamp(frame_id);
  rec.keyframe = true;
  frames_.push_back(rec);
  keyframe_ids_.push_back(frame_id);

  trim_window();

  double new_weight = 0.0;
  for (auto& f : window_.frames) {
    double w = config_.fixed_weight;
    if (config_.use_uncertainty) {
      std::optional<double> sigma;
      for (std::size_t k = 0; k < last_report_.frame_ids.size(); ++k) {
        if (last_report_.frame_ids[k] == f.frame_id) sigma = last_report_.frame_median_rel_std[k];
      }
      w = frame_weight(sigma, config_.alpha, config_.beta);
    }
    f.prior_weight = config_.prior_scale * w;
    if (f.frame_id == frame_id) new_weight = w;
  }
  set_gauge();

  if (count_valid(window_.observations) == 0) {
    // Nothing to optimize against (e.g. the scene left the view); keep the prediction.
    last_report_ = CovarianceReport{};
    patch_rel_std_.clear();
    diagnostics_.push_back(diag);
    note_sizes();
    return;
  }
  LmResult res = lm_optimize(window_, config_.lm_config());
  window_ = std::move(res.window);
  last_report_ = std::move(res.covariance);
  patch_rel_std_.clear();
  for (std::size_t k = 0; k < window_.patches.size() && k < last_report_.rel_depth_std.size(); ++k) {
    patch_rel_std_[window_.patches[k].patch_id] = last_report_.rel_depth_std[k];
  }
  diag.lm_iterations = res.stats.iterations;
  diag.n_retired = retire_patches();

  for (std::size_t k = 0; k < last_report_.frame_ids.size(); ++k) {
    if (last_report_.frame_ids[k] == frame_id) diag.sigma_med = last_report_.frame_median_rel_std[k];
  }
  diag.w_f = new_weight;
  diag.n_patches = static_cast<int>(std::count_if(
      window_.patches.begin(), window_.patches.end(),
      [&](const Patch& p) { return p.owner_frame == frame_id; }));
  diagnostics_.push_back(diag);
  note_sizes();
}

void Pipeline::trim_window() {
  while (static_cast<int>(window_.frames.size()) > config_.F_window) {
    const WindowFrame oldest = window_.frames.front();
    for (FrameRecord& rec : frames_) {
      if (rec.frame_id == oldest.frame_id) {
        rec.final_pose = oldest.pose;
        rec.finalized = true;
      }
    }
    window_.frames.erase(window_.frames.begin());
    std::unordered_set<int> dropped;
    std::erase_if(window_.patches, [&](const Patch& p) {
      if (p.owner_frame != oldest.frame_id) return false;
      dropped.insert(p.patch_id);
      return true;
    });
    std::erase_if(window_.observations, [&](const FlowObservation& o) {
      return o.source_frame == oldest.frame_id || o.target_frame == oldest.frame_id ||
             dropped.count(o.patch_id) > 0;
    });
  }
}

void Pipeline::set_gauge() {
  const int oldest = window_.frames.front().frame_id;
  window_.fixed_frames = {oldest};
  window_.fixed_patches.clear();

  bool prior_active = false;
  if (config_.use_prior) {
    std::unordered_map<int, double> weight;
    for (const auto& f : window_.frames) weight[f.frame_id] = f.prior_weight;
    for (const Patch& p : window_.patches) {
      if (p.has_prior && weight[p.owner_frame] > 0.0) prior_active = true;
    }
  }
  if (prior_active) return;

  // Without a prior the scale is free; pin one observed depth of the oldest frame.
  std::unordered_set<int> observed;
  for (const auto& o : window_.observations) {
    if (o.valid) observed.insert(o.patch_id);
  }
  const Patch* anchor = nullptr;
  for (const Patch& p : window_.patches) {
    if (!observed.count(p.patch_id)) continue;
    if (p.owner_frame == oldest) {
      anchor = &p;
      break;
    }
    if (anchor == nullptr) anchor = &p;
  }
  if (anchor != nullptr) window_.fixed_patches.insert(anchor->patch_id);
}

int Pipeline::retire_patches() {
  const std::vector<double> residual = patch_mean_residuals(window_);
  const double limit = config_.retire_factor * config_.huber_px;
  std::unordered_set<int> retired;
  for (std::size_t k = 0; k < residual.size(); ++k) {
    if (residual[k] > limit) retired.insert(window_.patches[k].patch_id);
  }
  if (retired.empty()) return 0;
  std::erase_if(window_.patches, [&](const Patch& p) { return retired.count(p.patch_id) > 0; });
  std::erase_if(window_.observations,
                [&](const FlowObservation& o) { return retired.count(o.patch_id) > 0; });
  for (int id : retired) window_.fixed_patches.erase(id);
  return static_cast<int>(retired.size());
}

void Pipeline::retrack_bootstrap_frames() {
  for (FrameRecord& rec : frames_) {
    if (rec.keyframe) continue;
    const Se3Pose ref_pose = current_pose(record(rec.reference));
    std::vector<FlowObservation> obs;
    const Se3Pose pose = track(rec.frame_id, current_pose(rec), obs);
    rec.relative = pose * ref_pose.inverse();
  }
}

void Pipeline::note_sizes() {
  max_live_patches_ = std::max(max_live_patches_, window_.patches.size());
  max_live_observations_ = std::max(max_live_observations_, window_.observations.size());
}

std::vector<StampedPose> Pipeline::trajectory() const {
  std::vector<StampedPose> out;
  out.reserve(frames_.size());
  for (const FrameRecord& rec : frames_) out.push_back({rec.frame_id, rec.timestamp, current_pose(rec)});
  return out;
}

PipelineResult Pipeline::result() const {
  PipelineResult r;
  r.trajectory = trajectory();
  r.keyframes = diagnostics_;
  r.initialized = initialized_;
  r.keyframe_depth = keyframe_depth_;
  r.max_live_patches = max_live_patches_;
  r.max_live_observations = max_live_observations_;
  return r;
}

PipelineResult run_pipeline(PriorProvider& provider, const PipelineConfig& config, int n_frames) {
  Pipeline pipeline(provider, config);
  const int total = n_frames < 0 ? provider.num_frames() : std::min(n_frames, provider.num_frames());
  for (int t = 0; t < total; ++t) pipeline.process_frame(t);
  return pipeline.result();
}

}  // namespace dslam
