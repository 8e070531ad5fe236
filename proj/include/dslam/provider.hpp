#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "dslam/geometry.hpp"
#include "dslam/raster.hpp"

namespace dslam {

/// Per-frame output of the prior model. Depth is scale-ambiguous; all frames
/// answered by one request share a batch_id and therefore one scale.
struct PriorFrameData {
  int frame_id = -1;
  Raster depth;        // <= 0 marks an invalid pixel
  Raster confidence;   // relative weights, >= 0
  Raster motion_prob;  // [0, 1]
  int batch_id = -1;
  /// Inverse-depth scale s_f applied by scale alignment (1 until aligned).
  /// The depth raster stays as received; aligned depth is depth / s_f.
  double applied_scale = 1.0;

  /// Throws DomainError if the rasters disagree in shape or motion_prob leaves [0, 1].
  void validate() const;
  bool depth_valid(int u, int v) const { return depth.at(u, v) > 0.0f; }
  /// Aligned depth at a pixel; non-positive when invalid.
  double aligned_depth(std::size_t index) const {
    const double z = depth[index];
    return z > 0.0 ? z / applied_scale : z;
  }
  /// Depth raster with the applied scale baked in.
  Raster aligned_depth_raster() const;
};

struct PriorBatchResponse {
  int batch_id = -1;
  std::vector<PriorFrameData> frames;
};

/// Image-anchored landmark: center pixel in the owner frame plus one inverse depth.
struct Patch {
  int patch_id = -1;
  int owner_frame = -1;
  Pixel center;
  double inv_depth = 1.0;
  double prior_inv_depth = 1.0;
  double prior_confidence = 0.0;
  /// False when the owner frame's prior could not be scale-aligned; such a
  /// patch contributes no prior term.
  bool has_prior = true;
  double rel_depth_std = 0.0;
};

struct FlowObservation {
  int patch_id = -1;
  int source_frame = -1;
  int target_frame = -1;
  Pixel observed;
  bool valid = false;
};

/// Correspondences of every trackable source pixel of frame i in frame j,
/// sorted by source pixel index (v * width + u).
struct FlowTable {
  struct Entry {
    std::uint32_t pixel = 0;
    Pixel observed;
    bool valid = false;
  };
  std::vector<Entry> entries;

  /// nullptr when the pixel is not part of the table.
  const Entry* find(std::uint32_t pixel) const;
};

/// Writes `patch_id u v valid` lines, where patch_id is the source pixel index.
void write_flow_table(const std::filesystem::path& path, const FlowTable& table);
FlowTable read_flow_table(const std::filesystem::path& path);

/// Source of priors and correspondences standing in for the prior network and
/// the flow tracker. One request in flight at a time.
class PriorProvider {
 public:
  virtual ~PriorProvider() = default;

  virtual CameraIntrinsics intrinsics() const = 0;
  virtual int num_frames() const = 0;
  virtual double timestamp(int frame_id) const = 0;

  /// Response preserves request order and carries a fresh batch id.
  virtual PriorBatchResponse request_priors(std::span<const int> frame_ids) = 0;

  /// Tracks each patch center from its owner frame into `target_frame`.
  virtual std::vector<FlowObservation> track_patches(std::span<const Patch> patches,
                                                     int target_frame) = 0;
};

inline constexpr int kDefaultBorderPx = 8;

/// Draws `count` distinct pixels uniformly without replacement from
/// {motion_prob < s_d, depth valid} minus a `border_px` margin. The patches
/// carry prior_inv_depth = 1/aligned depth and prior_confidence = confidence at the
/// center; ids are left unassigned (-1).
///
/// Throws NoStaticRegionError(available) when fewer than `count` pixels qualify.
std::vector<Patch> sample_static_patches(const PriorFrameData& prior, double s_d, int count,
                                         std::mt19937_64& rng, int border_px = kDefaultBorderPx);

/// Same as sample_static_patches with the motion gate disabled.
std::vector<Patch> sample_uniform_patches(const PriorFrameData& prior, int count,
                                          std::mt19937_64& rng, int border_px = kDefaultBorderPx);

/// Number of pixels sample_static_patches could draw from.
std::size_t count_static_candidates(const PriorFrameData& prior, double s_d,
                                    int border_px = kDefaultBorderPx);

/// Reads a sequence directory:
///   camera.txt                 fx fy cx cy width height
///   timestamps.txt             frame_id timestamp (one per frame)
///   scales.txt                 batch_id scale (per-request scale factors)
///   frames/<id>/depth.dpr, confidence.prb, motion.prb
///   flows/<i>_<j>.txt          patch_id u v valid
/// Request b answers with the stored depth multiplied by scale b.
class FileProvider final : public PriorProvider {
 public:
  explicit FileProvider(std::filesystem::path root);

  CameraIntrinsics intrinsics() const override { return intrinsics_; }
  int num_frames() const override { return static_cast<int>(timestamps_.size()); }
  double timestamp(int frame_id) const override;

  PriorBatchResponse request_priors(std::span<const int> frame_ids) override;
  std::vector<FlowObservation> track_patches(std::span<const Patch> patches,
                                             int target_frame) override;

 private:
  void check_frame(int frame_id) const;
  const FlowTable* flow_table(int source, int target);

  std::filesystem::path root_;
  CameraIntrinsics intrinsics_;
  std::vector<double> timestamps_;
  std::vector<double> batch_scales_;
  int next_batch_ = 0;
  std::map<std::pair<int, int>, std::optional<FlowTable>> flow_cache_;
};

}  // namespace dslam
