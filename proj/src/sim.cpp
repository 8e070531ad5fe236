#include "dslam/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dslam/errors.hpp"
#include "dslam/tum.hpp"

namespace dslam {

namespace fs = std::filesystem;

namespace {

// Stream tags keep the per-purpose random streams independent.
constexpr std::uint32_t kTagScene = 0x5343454e;
constexpr std::uint32_t kTagPrior = 0x5052494f;
constexpr std::uint32_t kTagFlow = 0x464c4f57;
constexpr std::uint32_t kTagScale = 0x5343414c;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t tag, std::uint32_t a = 0,
                         std::uint32_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), tag, a, b};
  return std::mt19937_64(seq);
}

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

/// Camera-to-world pose at every frame.
std::vector<Se3Pose> camera_path(const SceneSpec& spec) {
  std::vector<Se3Pose> out;
  out.reserve(static_cast<std::size_t>(spec.n_frames));
  const double omega = 2.0 * M_PI / spec.path_period;
  const double speed = spec.path_speed;
  const double rot = spec.path_rotation;

  switch (spec.path) {
    case CameraPath::Forward:
      for (int t = 0; t < spec.n_frames; ++t) {
        const Vec3 p(0.3 * speed / omega * std::sin(omega * t), 0.0, speed * t);
        const Mat3 r = rot_y(rot * std::sin(omega * t)) * rot_x(0.3 * rot * std::sin(0.7 * omega * t));
        out.emplace_back(Eigen::Quaterniond(r), p);
      }
      break;
    case CameraPath::Orbit: {
      const double radius = 0.5 * (spec.static_box_min[2] + spec.static_box_max[2]);
      const Vec3 pivot(0.0, 0.0, radius);
      for (int t = 0; t < spec.n_frames; ++t) {
        const double theta = speed * t / radius;
        const Vec3 p = pivot + radius * Vec3(-std::sin(theta), 0.0, -std::cos(theta));
        const Mat3 r = rot_y(theta) * rot_x(rot * std::sin(omega * t));
        out.emplace_back(Eigen::Quaterniond(r), p);
      }
      break;
    }
    case CameraPath::RotationDominant: {
      // Translation comes in short bursts (speed profile sin^4 with mean
      // `speed`), so long stretches of nearly pure rotation alternate with
      // usable parallax.
      double s = 0.0;
      for (int t = 0; t < spec.n_frames; ++t) {
        if (t > 0) s += speed * (8.0 / 3.0) * std::pow(std::sin(0.5 * omega * (t - 0.5)), 4);
        const Vec3 p = s * Vec3(1.0, 0.0, 0.3).normalized();
        const Mat3 r = rot_y(rot * std::sin(omega * t)) * rot_x(0.4 * rot * std::sin(0.5 * omega * t));
        out.emplace_back(Eigen::Quaterniond(r), p);
      }
      break;
    }
    case CameraPath::RandomWalk: {
      auto rng = make_rng(spec.seed, kTagScene, 1);
      std::normal_distribution<double> normal(0.0, 1.0);
      Vec3 p = Vec3::Zero();
      Vec3 vel(0.0, 0.0, speed);
      Vec3 ang = Vec3::Zero();
      Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
      for (int t = 0; t < spec.n_frames; ++t) {
        out.emplace_back(q, p);
        for (int k = 0; k < 3; ++k) {
          vel[k] = 0.9 * vel[k] + 0.3 * speed * normal(rng);
          ang[k] = 0.9 * ang[k] + 0.3 * rot / spec.path_period * normal(rng);
        }
        p += vel;
        q = Eigen::Quaterniond(Eigen::AngleAxisd(ang.norm(), ang.norm() > 0 ? Vec3(ang.normalized()) : Vec3::UnitZ())) * q;
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::string to_string(CameraPath path) {
  switch (path) {
    case CameraPath::Orbit: return "orbit";
    case CameraPath::Forward: return "forward";
    case CameraPath::RotationDominant: return "rotation-dominant";
    case CameraPath::RandomWalk: return "random-walk";
  }
  return "forward";
}

CameraPath camera_path_from_string(const std::string& name) {
  if (name == "orbit") return CameraPath::Orbit;
  if (name == "forward") return CameraPath::Forward;
  if (name == "rotation-dominant") return CameraPath::RotationDominant;
  if (name == "random-walk") return CameraPath::RandomWalk;
  throw ParseError("unknown camera path '" + name + "'");
}

void SceneSpec::validate() const {
  intrinsics.validate();
  if (n_frames < 2) throw DomainError("scene needs at least two frames");
  if (n_static_points < 0 || n_moving_objects < 0 || points_per_object < 0) {
    throw DomainError("point counts must be non-negative");
  }
  if (n_static_points + n_moving_objects * points_per_object == 0) {
    throw DomainError("degenerate scene: no points");
  }
  for (int k = 0; k < 3; ++k) {
    if (!(static_box_min[static_cast<std::size_t>(k)] < static_box_max[static_cast<std::size_t>(k)])) {
      throw DomainError("static box must have positive extent");
    }
  }
  if (!(dt > 0.0) || !(path_period > 0.0)) throw DomainError("dt and path_period must be positive");
  if (object_radius < 0.0 || object_speed_min < 0.0 || object_speed_max < object_speed_min ||
      object_depth_max < object_depth_min || object_angular_speed < 0.0) {
    throw DomainError("invalid moving-object parameters");
  }
  if (noise.sigma_flow < 0.0 || noise.sigma_depth < 0.0 || noise.depth_tilt < 0.0 ||
      noise.p_outlier < 0.0 || noise.p_outlier > 1.0 || noise.mask_error_rate < 0.0 ||
      noise.mask_error_rate > 1.0) {
    throw DomainError("noise parameters must be non-negative probabilities/scales");
  }
  if (!(noise.batch_scale_min > 0.0) || noise.batch_scale_max < noise.batch_scale_min) {
    throw DomainError("batch scale range must be positive and ordered");
  }
  if (flow_max_gap < 1) throw DomainError("flow_max_gap must be at least 1");
}

Vec3 GroundTruth::point_world(int index, int frame) const {
  const auto n_static = static_cast<int>(static_points.size());
  if (index < n_static) return static_points[static_cast<std::size_t>(index)];
  const auto k = static_cast<std::size_t>(index - n_static);
  const int obj = object_of_point[k];
  return object_poses[static_cast<std::size_t>(obj)][static_cast<std::size_t>(frame)] *
         object_points[k];
}

int GroundTruth::object_id(int index) const {
  const auto n_static = static_cast<int>(static_points.size());
  if (index < n_static) return -1;
  return object_of_point[static_cast<std::size_t>(index - n_static)];
}

SyntheticScene::SyntheticScene(const SceneSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto n_frames = static_cast<std::size_t>(spec_.n_frames);
  const CameraIntrinsics& intr = spec_.intrinsics;

  const std::vector<Se3Pose> cam_to_world = camera_path(spec_);
  for (const auto& c2w : cam_to_world) gt_.poses.push_back(c2w.inverse());
  for (std::size_t t = 0; t < n_frames; ++t) gt_.timestamps.push_back(static_cast<double>(t) * spec_.dt);

  auto rng = make_rng(spec_.seed, kTagScene);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int k = 0; k < spec_.n_static_points; ++k) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      p[a] = spec_.static_box_min[ua] + unit(rng) * (spec_.static_box_max[ua] - spec_.static_box_min[ua]);
    }
    gt_.static_points.push_back(p);
  }

  for (int obj = 0; obj < spec_.n_moving_objects; ++obj) {
    const double z = spec_.object_depth_min + unit(rng) * (spec_.object_depth_max - spec_.object_depth_min);
    const double u = intr.width * (0.2 + 0.6 * unit(rng));
    const double v = intr.height * (0.2 + 0.6 * unit(rng));
    const Vec3 center_cam((u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z);
    const Vec3 center = cam_to_world[0] * center_cam;

    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const double speed = spec_.object_speed_min + unit(rng) * (spec_.object_speed_max - spec_.object_speed_min);
    Vec3 axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();

    std::vector<Se3Pose> poses;
    for (std::size_t t = 0; t < n_frames; ++t) {
      const double td = static_cast<double>(t);
      const Eigen::Quaterniond q(Eigen::AngleAxisd(spec_.object_angular_speed * td, axis));
      poses.emplace_back(q, center + speed * td * dir);
    }
    gt_.object_poses.push_back(std::move(poses));

    for (int k = 0; k < spec_.points_per_object; ++k) {
      // Uniform in a ball.
      Vec3 p;
      do {
        p = Vec3(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0);
      } while (p.squaredNorm() > 1.0);
      gt_.object_points.push_back(spec_.object_radius * p);
      gt_.object_of_point.push_back(obj);
    }
  }

  const int n_points = gt_.num_points();
  for (std::size_t t = 0; t < n_frames; ++t) {
    const int ti = static_cast<int>(t);
    Raster depth(intr.width, intr.height, 0.0f);
    std::vector<std::int32_t> owner(depth.size(), -1);
    for (int k = 0; k < n_points; ++k) {
      const Vec3 pc = gt_.poses[t] * gt_.point_world(k, ti);
      const auto px = try_project(intr, pc);
      if (!px) continue;
      const double fu = std::floor(px->u + 0.5);
      const double fv = std::floor(px->v + 0.5);
      if (fu < 0.0 || fv < 0.0 || fu >= intr.width || fv >= intr.height) continue;
      const int iu = static_cast<int>(fu);
      const int iv = static_cast<int>(fv);
      const auto z = static_cast<float>(pc.z());
      float& cell = depth.at(iu, iv);
      if (cell <= 0.0f || z < cell) {
        cell = z;
        owner[depth.index(iu, iv)] = k;
      }
    }

    Raster mask(intr.width, intr.height, 0.0f);
    for (std::size_t i = 0; i < owner.size(); ++i) {
      const int k = owner[i];
      if (k < 0) continue;
      bool moving = false;
      if (spec_.mask_by_motion) {
        const int other = t + 1 < n_frames ? ti + 1 : ti - 1;
        moving = (gt_.point_world(k, other) - gt_.point_world(k, ti)).norm() > kMotionEpsilon;
      } else {
        moving = gt_.object_id(k) >= 0;
      }
      mask[i] = moving ? 1.0f : 0.0f;
    }
    gt_.depth.push_back(std::move(depth));
    gt_.motion_mask.push_back(std::move(mask));
    gt_.owner.push_back(std::move(owner));
  }

  auto scale_rng = make_rng(spec_.seed, kTagScale);
  const double lo = std::log(spec_.noise.batch_scale_min);
  const double hi = std::log(spec_.noise.batch_scale_max);
  for (std::size_t b = 0; b <= n_frames; ++b) {
    const double s = std::exp(lo + unit(scale_rng) * (hi - lo));
    gt_.batch_scales.push_back(b == 0 && spec_.noise.anchor_first_batch ? 1.0 : s);
  }
}

void SyntheticScene::check_frame(int frame_id) const {
  if (frame_id < 0 || frame_id >= spec_.n_frames) {
    throw LookupError("unknown frame id " + std::to_string(frame_id));
  }
}

double SyntheticScene::timestamp(int frame_id) const {
  check_frame(frame_id);
  return gt_.timestamps[static_cast<std::size_t>(frame_id)];
}

PriorFrameData SyntheticScene::base_prior(int frame_id) const {
  check_frame(frame_id);
  if (auto it = prior_cache_.find(frame_id); it != prior_cache_.end()) return it->second;

  const auto t = static_cast<std::size_t>(frame_id);
  const CameraIntrinsics& intr = spec_.intrinsics;
  const SceneNoise& noise = spec_.noise;
  auto rng = make_rng(spec_.seed, kTagPrior, static_cast<std::uint32_t>(frame_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double tilt_u = noise.depth_tilt * normal(rng);
  const double tilt_v = noise.depth_tilt * normal(rng);

  PriorFrameData out;
  out.frame_id = frame_id;
  out.depth = Raster(intr.width, intr.height, 0.0f);
  out.confidence = Raster(intr.width, intr.height, 0.0f);
  out.motion_prob = Raster(intr.width, intr.height, 0.0f);
  const Raster& gt_depth = gt_.depth[t];
  const Raster& gt_mask = gt_.motion_mask[t];
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const std::size_t i = gt_depth.index(u, v);
      // Heteroscedastic noise: its per-pixel magnitude is what the
      // confidence raster reports (inverse).
      const double magnitude = 0.5 + 1.5 * unit(rng);
      const double n = normal(rng);
      const double flip = unit(rng);
      const double tilt = tilt_u * (u - intr.cx) / intr.width + tilt_v * (v - intr.cy) / intr.height;
      if (gt_depth[i] > 0.0f) {
        out.depth[i] = static_cast<float>(static_cast<double>(gt_depth[i]) *
                                          std::exp(noise.sigma_depth * magnitude * n + tilt));
      }
      out.confidence[i] = static_cast<float>(1.0 / magnitude);
      const float label = gt_mask[i];
      out.motion_prob[i] = flip < noise.mask_error_rate ? 1.0f - label : label;
    }
  }
  prior_cache_.emplace(frame_id, out);
  return out;
}

PriorBatchResponse SyntheticScene::request_priors(std::span<const int> frame_ids) {
  if (frame_ids.empty()) throw DomainError("empty prior request");
  for (int id : frame_ids) check_frame(id);
  if (next_batch_ >= static_cast<int>(gt_.batch_scales.size())) {
    throw LookupError("no scale recorded for batch " + std::to_string(next_batch_));
  }
  PriorBatchResponse response;
  response.batch_id = next_batch_++;
  const double scale = gt_.batch_scales[static_cast<std::size_t>(response.batch_id)];
  for (int id : frame_ids) {
    PriorFrameData frame = base_prior(id);
    frame.batch_id = response.batch_id;
    for (float& z : frame.depth.data()) {
      if (z > 0.0f) z = static_cast<float>(static_cast<double>(z) * scale);
    }
    response.frames.push_back(std::move(frame));
  }
  return response;
}

std::optional<FlowTable> SyntheticScene::flow_table(int source, int target) const {
  check_frame(source);
  check_frame(target);
  if (source == target || std::abs(source - target) > spec_.flow_max_gap) return std::nullopt;
  const auto key = std::make_pair(source, target);
  if (auto it = flow_cache_.find(key); it != flow_cache_.end()) return it->second;

  const CameraIntrinsics& intr = spec_.intrinsics;
  const SceneNoise& noise = spec_.noise;
  auto rng = make_rng(spec_.seed, kTagFlow, static_cast<std::uint32_t>(source),
                      static_cast<std::uint32_t>(target));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto si = static_cast<std::size_t>(source);
  const auto ti = static_cast<std::size_t>(target);
  const Raster& depth = gt_.depth[si];
  const Se3Pose world_from_i = gt_.poses[si].inverse();

  FlowTable table;
  for (std::size_t idx = 0; idx < depth.size(); ++idx) {
    if (!(depth[idx] > 0.0f)) continue;
    const double n1 = normal(rng);
    const double n2 = normal(rng);
    const double outlier = unit(rng);
    const double ou = unit(rng) * intr.width;
    const double ov = unit(rng) * intr.height;

    const int u = static_cast<int>(idx % static_cast<std::size_t>(intr.width));
    const int v = static_cast<int>(idx / static_cast<std::size_t>(intr.width));
    const Vec3 point_i = backproject(intr, {static_cast<double>(u), static_cast<double>(v)},
                                     1.0 / static_cast<double>(depth[idx]));
    Vec3 world = world_from_i * point_i;
    const int obj = gt_.object_id(gt_.owner[si][idx]);
    if (obj >= 0) {
      const auto& poses = gt_.object_poses[static_cast<std::size_t>(obj)];
      world = poses[ti] * (poses[si].inverse() * world);
    }

    FlowTable::Entry entry;
    entry.pixel = static_cast<std::uint32_t>(idx);
    entry.observed = {-1.0, -1.0};
    if (const auto px = try_project(intr, gt_.poses[ti] * world)) {
      Pixel obs{px->u + noise.sigma_flow * n1, px->v + noise.sigma_flow * n2};
      if (outlier < noise.p_outlier) obs = {ou, ov};
      entry.observed = obs;
      entry.valid = intr.contains(obs.u, obs.v);
    }
    table.entries.push_back(entry);
  }
  // Bounded cache: tables of frames far behind are rarely requested again.
  if (flow_cache_.size() > 512) flow_cache_.clear();
  flow_cache_.emplace(key, table);
  return table;
}

std::vector<FlowObservation> SyntheticScene::track_patches(std::span<const Patch> patches,
                                                           int target_frame) {
  check_frame(target_frame);
  const auto width = static_cast<std::uint32_t>(spec_.intrinsics.width);
  std::vector<FlowObservation> out;
  out.reserve(patches.size());
  std::map<int, std::optional<FlowTable>> tables;
  for (const Patch& patch : patches) {
    check_frame(patch.owner_frame);
    auto it = tables.find(patch.owner_frame);
    if (it == tables.end()) {
      it = tables.emplace(patch.owner_frame, flow_table(patch.owner_frame, target_frame)).first;
    }
    FlowObservation obs;
    obs.patch_id = patch.patch_id;
    obs.source_frame = patch.owner_frame;
    obs.target_frame = target_frame;
    if (it->second) {
      const auto pixel = static_cast<std::uint32_t>(patch.center.v) * width +
                         static_cast<std::uint32_t>(patch.center.u);
      const FlowTable::Entry* e = it->second->find(pixel);
      if (e == nullptr) {
        throw LookupError("no correspondence for pixel " + std::to_string(pixel) + " of frame " +
                          std::to_string(patch.owner_frame));
      }
      obs.observed = e->observed;
      obs.valid = e->valid;
    }
    out.push_back(obs);
  }
  return out;
}

void export_sequence(const SyntheticScene& scene, const fs::path& dir) {
  const SceneSpec& spec = scene.spec();
  const GroundTruth& gt = scene.ground_truth();
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  fs::create_directories(dir / "flows", ec);
  fs::create_directories(dir / "gt", ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error("cannot open " + p.string() + " for writing");
    return out;
  };
  char buf[256];
  {
    auto out = open(dir / "camera.txt");
    const auto& k = spec.intrinsics;
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %d %d\n", k.fx, k.fy, k.cx, k.cy,
                  k.width, k.height);
    out << buf;
  }
  {
    auto out = open(dir / "timestamps.txt");
    for (std::size_t t = 0; t < gt.timestamps.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%zu %.17g\n", t, gt.timestamps[t]);
      out << buf;
    }
  }
  {
    auto out = open(dir / "scales.txt");
    for (std::size_t b = 0; b < gt.batch_scales.size(); ++b) {
      std::snprintf(buf, sizeof(buf), "%zu %.17g\n", b, gt.batch_scales[b]);
      out << buf;
    }
  }

  std::vector<StampedPose> traj;
  for (int t = 0; t < spec.n_frames; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    traj.push_back({t, gt.timestamps[ut], gt.poses[ut]});

    const fs::path frame_dir = dir / "frames" / std::to_string(t);
    const fs::path gt_dir = dir / "gt" / std::to_string(t);
    fs::create_directories(frame_dir, ec);
    fs::create_directories(gt_dir, ec);
    if (ec) throw Error("cannot create " + frame_dir.string() + ": " + ec.message());
    const PriorFrameData prior = scene.base_prior(t);
    write_raster(frame_dir / "depth.dpr", prior.depth, RasterKind::Depth);
    write_raster(frame_dir / "confidence.prb", prior.confidence, RasterKind::Probability);
    write_raster(frame_dir / "motion.prb", prior.motion_prob, RasterKind::Probability);
    write_raster(gt_dir / "depth.dpr", gt.depth[ut], RasterKind::Depth);
    write_raster(gt_dir / "mask.prb", gt.motion_mask[ut], RasterKind::Probability);

    for (int j = 0; j < spec.n_frames; ++j) {
      if (auto table = scene.flow_table(t, j)) {
        write_flow_table(dir / "flows" / (std::to_string(t) + "_" + std::to_string(j) + ".txt"),
                         *table);
      }
    }
  }
  write_tum(dir / "gt_traj.tum", traj, {"ground truth"});
}

}  // namespace dslam
