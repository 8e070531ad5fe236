#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dslam/geometry.hpp"

namespace dslam {

struct StampedPose {
  int frame_id = -1;
  double timestamp = 0.0;
  Se3Pose pose;  // world -> camera
};

/// TUM trajectory text: `timestamp tx ty tz qx qy qz qw` per line, where
/// (t, q) is the camera-to-world transform. Values use 9 significant digits;
/// `header` lines are written after a leading '#'.
void write_tum(const std::filesystem::path& path, const std::vector<StampedPose>& trajectory,
               const std::vector<std::string>& header = {});
std::string format_tum(const std::vector<StampedPose>& trajectory,
                       const std::vector<std::string>& header = {});

/// Parses a TUM file; frame ids are assigned by line order. Throws LookupError
/// when the file is missing and ParseError naming the line on malformed input.
std::vector<StampedPose> read_tum(const std::filesystem::path& path);

}  // namespace dslam
