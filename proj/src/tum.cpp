#include "dslam/tum.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dslam/errors.hpp"

namespace dslam {

std::string format_tum(const std::vector<StampedPose>& trajectory,
                       const std::vector<std::string>& header) {
  std::string out;
  for (const auto& line : header) out += "# " + line + "\n";
  char buf[256];
  for (const auto& entry : trajectory) {
    const Se3Pose c2w = entry.pose.inverse();
    const Vec3& t = c2w.translation();
    const auto& q = c2w.rotation().coeffs();  // x y z w
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  entry.timestamp + 0.0, t.x() + 0.0, t.y() + 0.0, t.z() + 0.0, q.x() + 0.0,
                  q.y() + 0.0, q.z() + 0.0, q.w() + 0.0);  // + 0.0 folds -0 into 0
    out += buf;
  }
  return out;
}

void write_tum(const std::filesystem::path& path, const std::vector<StampedPose>& trajectory,
               const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << format_tum(trajectory, header);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<StampedPose> read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("missing trajectory file " + path.string());
  std::vector<StampedPose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double v[8];
    for (double& x : v) {
      if (!(fields >> x) || !std::isfinite(x)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected `timestamp tx ty tz qx qy qz qw`");
      }
    }
    std::string extra;
    if (fields >> extra) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": trailing fields");
    }
    const Eigen::Vector4d q(v[4], v[5], v[6], v[7]);
    if (q.norm() < 1e-6) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": zero quaternion");
    }
    StampedPose entry;
    entry.frame_id = static_cast<int>(out.size());
    entry.timestamp = v[0];
    entry.pose = Se3Pose::FromCoeffs(q, Vec3(v[1], v[2], v[3])).inverse();
    out.push_back(entry);
  }
  return out;
}

}  // namespace dslam
