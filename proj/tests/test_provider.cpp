#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "dslam/errors.hpp"
#include "dslam/provider.hpp"
#include "dslam/raster.hpp"
#include "dslam/sim.hpp"
#include "dslam/tum.hpp"

namespace dslam {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dslam_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PriorFrameData flat_prior(float motion) {
  PriorFrameData p;
  p.frame_id = 0;
  p.depth = Raster(64, 48, 2.0f);
  p.confidence = Raster(64, 48, 0.5f);
  p.motion_prob = Raster(64, 48, motion);
  return p;
}

TEST(Sampling, AllMovingThrows) {
  std::mt19937_64 rng(0);
  try {
    sample_static_patches(flat_prior(1.0f), 0.5, 10, rng);
    FAIL();
  } catch (const NoStaticRegionError& e) {
    EXPECT_EQ(e.available(), 0u);
  }
}

TEST(Sampling, DistinctInBounds) {
  std::mt19937_64 rng(0);
  const auto patches = sample_static_patches(flat_prior(0.0f), 0.5, 96, rng);
  ASSERT_EQ(patches.size(), 96u);
  std::set<std::pair<double, double>> seen;
  for (const Patch& p : patches) {
    EXPECT_GE(p.center.u, kDefaultBorderPx);
    EXPECT_LT(p.center.u, 64 - kDefaultBorderPx);
    EXPECT_GE(p.center.v, kDefaultBorderPx);
    EXPECT_LT(p.center.v, 48 - kDefaultBorderPx);
    EXPECT_DOUBLE_EQ(p.prior_inv_depth, 0.5);
    EXPECT_DOUBLE_EQ(p.prior_confidence, 0.5);
    seen.insert({p.center.u, p.center.v});
  }
  EXPECT_EQ(seen.size(), 96u);
}

TEST(Sampling, HalfMovingImage) {
  PriorFrameData prior = flat_prior(0.1f);
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 32; ++u) prior.motion_prob.at(u, v) = 0.9f;
  std::mt19937_64 rng(1);
  for (const Patch& p : sample_static_patches(prior, 0.5, 200, rng)) EXPECT_GE(p.center.u, 32);
  EXPECT_EQ(count_static_candidates(prior, 0.5), static_cast<std::size_t>((56 - 32) * (48 - 16)));
}

TEST(Sampling, AlignedPriorDepth) {
  std::mt19937_64 rng(2);
  PriorFrameData prior = flat_prior(0.0f);
  prior.applied_scale = 4.0;
  for (const Patch& p : sample_uniform_patches(prior, 5, rng)) EXPECT_DOUBLE_EQ(p.prior_inv_depth, 2.0);
}

SceneSpec small_scene() {
  SceneSpec s;
  s.n_frames = 12;
  s.n_moving_objects = 1;
  s.points_per_object = 200;
  s.seed = 17;
  return s;
}

TEST(Synthetic, NoiseFreePriorIsScaledGroundTruth) {
  SyntheticScene scene(small_scene());
  const std::vector<int> ids{0};
  const PriorBatchResponse r = scene.request_priors(ids);
  const double s = scene.ground_truth().batch_scales[r.batch_id];
  const Raster& gt = scene.ground_truth().depth[0];
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 0) EXPECT_FLOAT_EQ(r.frames[0].depth[i], static_cast<float>(gt[i] * s));
  }
}

TEST(Synthetic, RepeatedRequestsDifferByBatchRatio) {
  SyntheticScene scene(small_scene());
  const std::vector<int> ids{3, 4};
  const PriorBatchResponse a = scene.request_priors(ids);
  const PriorBatchResponse b = scene.request_priors(ids);
  EXPECT_NE(a.batch_id, b.batch_id);
  const auto& scales = scene.ground_truth().batch_scales;
  const double ratio = scales[b.batch_id] / scales[a.batch_id];
  const Raster& da = a.frames[0].depth;
  const Raster& db = b.frames[0].depth;
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (da[i] > 0) EXPECT_NEAR(db[i] / da[i], ratio, 1e-5 * ratio);
  }
}

TEST(Synthetic, UnknownFrameThrows) {
  SyntheticScene scene(small_scene());
  const std::vector<int> ids{99};
  EXPECT_THROW(scene.request_priors(ids), LookupError);
}

TEST(Synthetic, StaticTrackingMatchesReprojection) {
  SceneSpec spec = small_scene();
  spec.n_moving_objects = 0;
  SyntheticScene scene(spec);
  const GroundTruth& gt = scene.ground_truth();
  std::mt19937_64 rng(3);
  PriorFrameData prior = scene.base_prior(0);
  auto patches = sample_static_patches(prior, 0.5, 30, rng);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    patches[k].patch_id = static_cast<int>(k);
    patches[k].owner_frame = 0;
  }
  const auto obs = scene.track_patches(patches, 5);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (!obs[k].valid) continue;
    // The splatted depth is float, hence the loose tolerance.
    const Pixel p = reproject(gt.poses[0], gt.poses[5], scene.intrinsics(), patches[k].center,
                              patches[k].prior_inv_depth);
    EXPECT_NEAR(obs[k].observed.u, p.u, 1e-3);
    EXPECT_NEAR(obs[k].observed.v, p.v, 1e-3);
  }
}

TEST(Synthetic, MovingPatchFollowsObject) {
  SyntheticScene scene(small_scene());
  const GroundTruth& gt = scene.ground_truth();
  const CameraIntrinsics k = scene.intrinsics();
  int checked = 0;
  const auto& owner = gt.owner[0];
  for (int v = 8; v < k.height - 8 && checked < 20; v += 3) {
    for (int u = 8; u < k.width - 8 && checked < 20; u += 3) {
      const int pt = owner[v * k.width + u];
      if (pt < 0 || gt.object_id(pt) < 0) continue;
      Patch p;
      p.patch_id = 0;
      p.owner_frame = 0;
      p.center = {double(u), double(v)};
      const auto obs = scene.track_patches(std::span<const Patch>(&p, 1), 4);
      if (!obs[0].valid) continue;
      const Vec3 moved = gt.poses[4] * gt.point_world(pt, 4);
      const Pixel expected = project(k, moved);
      const Vec3 still = gt.poses[4] * gt.point_world(pt, 0);
      const Pixel naive = project(k, still);
      // Tracked pixel follows the object, not the static reprojection of its frame-0 position.
      const double follow = (obs[0].observed.vec() - expected.vec()).norm();
      const double stat = (obs[0].observed.vec() - naive.vec()).norm();
      EXPECT_LT(follow, 1.0);
      if ((expected.vec() - naive.vec()).norm() > 2.0) EXPECT_GT(stat, follow);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Synthetic, Deterministic) {
  SyntheticScene a(small_scene());
  SyntheticScene b(small_scene());
  EXPECT_EQ(a.ground_truth().depth[5], b.ground_truth().depth[5]);
  EXPECT_EQ(a.ground_truth().batch_scales, b.ground_truth().batch_scales);
}

TEST(FileProvider, MatchesSyntheticProvider) {
  SyntheticScene scene(small_scene());
  const fs::path dir = scratch_dir("equiv");
  export_sequence(scene, dir);
  FileProvider file(dir);
  EXPECT_EQ(file.num_frames(), scene.num_frames());
  EXPECT_EQ(file.timestamp(7), scene.timestamp(7));
  const std::vector<int> ids{2, 5, 7};
  const PriorBatchResponse a = scene.request_priors(ids);
  const PriorBatchResponse b = file.request_priors(ids);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    EXPECT_EQ(a.frames[k].depth, b.frames[k].depth);
    EXPECT_EQ(a.frames[k].confidence, b.frames[k].confidence);
    EXPECT_EQ(a.frames[k].motion_prob, b.frames[k].motion_prob);
  }
  std::mt19937_64 rng(4);
  auto patches = sample_static_patches(a.frames[0], 0.5, 40, rng);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    patches[k].patch_id = static_cast<int>(k);
    patches[k].owner_frame = 2;
  }
  const auto oa = scene.track_patches(patches, 6);
  const auto ob = file.track_patches(patches, 6);
  for (std::size_t k = 0; k < oa.size(); ++k) {
    EXPECT_EQ(oa[k].valid, ob[k].valid);
    EXPECT_EQ(oa[k].observed.u, ob[k].observed.u);
    EXPECT_EQ(oa[k].observed.v, ob[k].observed.v);
  }
  fs::remove_all(dir);
}

TEST(FileProvider, MissingRasterThrows) {
  SyntheticScene scene(small_scene());
  const fs::path dir = scratch_dir("missing");
  export_sequence(scene, dir);
  fs::remove(dir / "frames" / "3" / "depth.dpr");
  FileProvider file(dir);
  const std::vector<int> ids{3};
  EXPECT_THROW(file.request_priors(ids), LookupError);
  fs::remove_all(dir);
}

TEST(Raster, RoundTripAndMagic) {
  const fs::path dir = scratch_dir("raster");
  Raster r(7, 5);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.1f * static_cast<float>(i);
  write_raster(dir / "a.dpr", r, RasterKind::Depth);
  EXPECT_EQ(read_raster(dir / "a.dpr", RasterKind::Depth), r);
  EXPECT_THROW(read_raster(dir / "a.dpr", RasterKind::Probability), ParseError);
  EXPECT_THROW(read_raster(dir / "none.dpr", RasterKind::Depth), LookupError);
  fs::remove_all(dir);
}

TEST(Tum, RoundTrip) {
  const fs::path dir = scratch_dir("tum");
  std::mt19937_64 rng(8);
  std::vector<StampedPose> traj;
  for (int i = 0; i < 5; ++i) {
    const Eigen::Quaterniond q(Eigen::AngleAxisd(0.3 * i, Vec3(1, 2, 0.5).normalized()));
    traj.push_back({i, 0.5 * i, Se3Pose(q, Vec3(0.1 * i, -0.2, 1.0 / 3.0))});
  }
  write_tum(dir / "t.tum", traj, {"test"});
  const auto back = read_tum(dir / "t.tum");
  ASSERT_EQ(back.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(back[i].timestamp, traj[i].timestamp);
    const PoseDistance d = pose_distance(back[i].pose, traj[i].pose);
    EXPECT_LT(d.angle, 1e-8);
    EXPECT_LT(d.translation, 1e-8);
  }
  EXPECT_EQ(format_tum(back), format_tum(traj));
  fs::remove_all(dir);
}

TEST(Tum, MalformedLineThrows) {
  const fs::path dir = scratch_dir("tumbad");
  {
    std::ofstream out(dir / "bad.tum");
    out << "0 1 2 3 0 0 0 1\n1 2 3\n";
  }
  EXPECT_THROW(read_tum(dir / "bad.tum"), ParseError);
  EXPECT_THROW(read_tum(dir / "absent.tum"), LookupError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace dslam
