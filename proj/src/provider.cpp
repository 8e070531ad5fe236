#include "dslam/provider.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "dslam/errors.hpp"

namespace dslam {

namespace fs = std::filesystem;

void PriorFrameData::validate() const {
  if (!depth.same_shape(confidence) || !depth.same_shape(motion_prob)) {
    throw DomainError("prior rasters of frame " + std::to_string(frame_id) + " differ in shape");
  }
  for (float p : motion_prob.data()) {
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw DomainError("motion probability outside [0,1] in frame " + std::to_string(frame_id));
    }
  }
}

Raster PriorFrameData::aligned_depth_raster() const {
  Raster out = depth;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0.0f) out[i] = static_cast<float>(aligned_depth(i));
  }
  return out;
}

const FlowTable::Entry* FlowTable::find(std::uint32_t pixel) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), pixel,
                             [](const Entry& e, std::uint32_t p) { return e.pixel < p; });
  if (it == entries.end() || it->pixel != pixel) return nullptr;
  return &*it;
}

void write_flow_table(const fs::path& path, const FlowTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  char line[96];
  for (const auto& e : table.entries) {
    const int n = std::snprintf(line, sizeof(line), "%u %.17g %.17g %d\n", e.pixel,
                                e.observed.u, e.observed.v, e.valid ? 1 : 0);
    out.write(line, n);
  }
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

template <typename T>
const char* parse_field(const char* first, const char* last, T& value) {
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc()) return nullptr;
  return ptr;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("missing file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool blank_or_comment(const std::string& line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

FlowTable read_flow_table(const fs::path& path) {
  FlowTable table;
  const auto lines = read_lines(path);
  table.entries.reserve(lines.size());
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (blank_or_comment(line)) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    FlowTable::Entry e;
    int valid = 0;
    if (!(p = parse_field(p, end, e.pixel)) || !(p = parse_field(p, end, e.observed.u)) ||
        !(p = parse_field(p, end, e.observed.v)) || !(p = parse_field(p, end, valid)) ||
        (valid != 0 && valid != 1)) {
      throw ParseError(path.string() + ":" + std::to_string(n + 1) + ": malformed flow line");
    }
    e.valid = valid == 1;
    table.entries.push_back(e);
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const auto& a, const auto& b) { return a.pixel < b.pixel; });
  return table;
}

namespace {

std::vector<std::uint32_t> candidate_pixels(const PriorFrameData& prior, double s_d,
                                            int border_px) {
  std::vector<std::uint32_t> out;
  const int w = prior.depth.width();
  const int h = prior.depth.height();
  for (int v = border_px; v < h - border_px; ++v) {
    for (int u = border_px; u < w - border_px; ++u) {
      if (prior.depth.at(u, v) > 0.0f && prior.motion_prob.at(u, v) < s_d) {
        out.push_back(static_cast<std::uint32_t>(prior.depth.index(u, v)));
      }
    }
  }
  return out;
}

std::vector<Patch> draw_patches(const PriorFrameData& prior, double s_d, int count,
                                std::mt19937_64& rng, int border_px) {
  if (count < 1) throw DomainError("patch count must be at least 1");
  std::vector<std::uint32_t> pool = candidate_pixels(prior, s_d, border_px);
  if (pool.size() < static_cast<std::size_t>(count)) throw NoStaticRegionError(pool.size());

  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
  }

  const int w = prior.depth.width();
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::uint32_t idx = pool[static_cast<std::size_t>(k)];
    Patch patch;
    patch.owner_frame = prior.frame_id;
    patch.center = {static_cast<double>(idx % static_cast<std::uint32_t>(w)),
                    static_cast<double>(idx / static_cast<std::uint32_t>(w))};
    patch.prior_inv_depth = 1.0 / prior.aligned_depth(idx);
    patch.inv_depth = patch.prior_inv_depth;
    patch.prior_confidence = static_cast<double>(prior.confidence[idx]);
    patches.push_back(patch);
  }
  return patches;
}

}  // namespace

std::vector<Patch> sample_static_patches(const PriorFrameData& prior, double s_d, int count,
                                         std::mt19937_64& rng, int border_px) {
  if (!(s_d >= 0.0 && s_d <= 1.0)) throw DomainError("motion threshold must lie in [0,1]");
  return draw_patches(prior, s_d, count, rng, border_px);
}

std::vector<Patch> sample_uniform_patches(const PriorFrameData& prior, int count,
                                          std::mt19937_64& rng, int border_px) {
  return draw_patches(prior, std::numeric_limits<double>::infinity(), count, rng, border_px);
}

std::size_t count_static_candidates(const PriorFrameData& prior, double s_d, int border_px) {
  return candidate_pixels(prior, s_d, border_px).size();
}

// --- FileProvider -----------------------------------------------------------

FileProvider::FileProvider(fs::path root) : root_(std::move(root)) {
  if (!fs::is_directory(root_)) throw LookupError("sequence directory not found: " + root_.string());

  {
    const auto lines = read_lines(root_ / "camera.txt");
    std::istringstream in;
    for (const auto& line : lines) {
      if (blank_or_comment(line)) continue;
      in.str(line);
      break;
    }
    if (!(in >> intrinsics_.fx >> intrinsics_.fy >> intrinsics_.cx >> intrinsics_.cy >>
          intrinsics_.width >> intrinsics_.height)) {
      throw ParseError((root_ / "camera.txt").string() + ": expected fx fy cx cy width height");
    }
    intrinsics_.validate();
  }

  const auto ts_lines = read_lines(root_ / "timestamps.txt");
  for (std::size_t n = 0; n < ts_lines.size(); ++n) {
    if (blank_or_comment(ts_lines[n])) continue;
    std::istringstream in(ts_lines[n]);
    int id = 0;
    double t = 0.0;
    if (!(in >> id >> t) || id != static_cast<int>(timestamps_.size())) {
      throw ParseError((root_ / "timestamps.txt").string() + ":" + std::to_string(n + 1) +
                       ": expected consecutive `frame_id timestamp`");
    }
    timestamps_.push_back(t);
  }

  const auto scale_lines = read_lines(root_ / "scales.txt");
  for (std::size_t n = 0; n < scale_lines.size(); ++n) {
    if (blank_or_comment(scale_lines[n])) continue;
    const std::string& line = scale_lines[n];
    const char* p = line.data();
    const char* end = p + line.size();
    int id = 0;
    double s = 0.0;
    if (!(p = parse_field(p, end, id)) || !(p = parse_field(p, end, s)) ||
        id != static_cast<int>(batch_scales_.size()) || !(s > 0.0)) {
      throw ParseError((root_ / "scales.txt").string() + ":" + std::to_string(n + 1) +
                       ": expected consecutive `batch_id scale`");
    }
    batch_scales_.push_back(s);
  }
}

void FileProvider::check_frame(int frame_id) const {
  if (frame_id < 0 || frame_id >= num_frames()) {
    throw LookupError("unknown frame id " + std::to_string(frame_id));
  }
}

double FileProvider::timestamp(int frame_id) const {
  check_frame(frame_id);
  return timestamps_[static_cast<std::size_t>(frame_id)];
}

PriorBatchResponse FileProvider::request_priors(std::span<const int> frame_ids) {
  if (frame_ids.empty()) throw DomainError("empty prior request");
  for (int id : frame_ids) check_frame(id);
  if (next_batch_ >= static_cast<int>(batch_scales_.size())) {
    throw LookupError("no scale recorded for batch " + std::to_string(next_batch_));
  }
  PriorBatchResponse response;
  response.batch_id = next_batch_++;
  const double scale = batch_scales_[static_cast<std::size_t>(response.batch_id)];
  for (int id : frame_ids) {
    const fs::path dir = root_ / "frames" / std::to_string(id);
    PriorFrameData frame;
    frame.frame_id = id;
    frame.batch_id = response.batch_id;
    frame.depth = read_raster(dir / "depth.dpr", RasterKind::Depth);
    frame.confidence = read_raster(dir / "confidence.prb", RasterKind::Probability);
    frame.motion_prob = read_raster(dir / "motion.prb", RasterKind::Probability);
    frame.validate();
    for (float& z : frame.depth.data()) {
      if (z > 0.0f) z = static_cast<float>(static_cast<double>(z) * scale);
    }
    response.frames.push_back(std::move(frame));
  }
  return response;
}

const FlowTable* FileProvider::flow_table(int source, int target) {
  const auto key = std::make_pair(source, target);
  auto it = flow_cache_.find(key);
  if (it == flow_cache_.end()) {
    if (flow_cache_.size() > 1024) flow_cache_.clear();
    const fs::path path =
        root_ / "flows" / (std::to_string(source) + "_" + std::to_string(target) + ".txt");
    std::optional<FlowTable> table;
    if (fs::exists(path)) table = read_flow_table(path);
    it = flow_cache_.emplace(key, std::move(table)).first;
  }
  return it->second ? &*it->second : nullptr;
}

std::vector<FlowObservation> FileProvider::track_patches(std::span<const Patch> patches,
                                                         int target_frame) {
  check_frame(target_frame);
  const auto width = static_cast<std::uint32_t>(intrinsics_.width);
  std::vector<FlowObservation> out;
  out.reserve(patches.size());
  for (const Patch& patch : patches) {
    check_frame(patch.owner_frame);
    FlowObservation obs;
    obs.patch_id = patch.patch_id;
    obs.source_frame = patch.owner_frame;
    obs.target_frame = target_frame;
    // Pairs beyond the exported tracking range carry no file and stay invalid.
    if (const FlowTable* table = flow_table(patch.owner_frame, target_frame)) {
      const auto pixel = static_cast<std::uint32_t>(patch.center.v) * width +
                         static_cast<std::uint32_t>(patch.center.u);
      const FlowTable::Entry* e = table->find(pixel);
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

}  // namespace dslam
