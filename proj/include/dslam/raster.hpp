#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dslam {

/// Dense row-major image of 32-bit floats, top-left origin.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, float fill = 0.0f)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int u, int v) { return data_[index(u, v)]; }
  float at(int u, int v) const { return data_[index(u, v)]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }
  bool same_shape(const Raster& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

enum class RasterKind {
  Depth,        // magic "DPR1"
  Probability,  // magic "PRB1", also used for confidence
};

/// Writes the self-describing little-endian container. Throws std::ios_base::failure
/// style errors as dslam::Error with the path in the message.
void write_raster(const std::filesystem::path& path, const Raster& raster, RasterKind kind);

/// Reads a raster and checks its magic against `kind`. Missing files raise
/// LookupError, malformed content ParseError.
Raster read_raster(const std::filesystem::path& path, RasterKind kind);

}  // namespace dslam
