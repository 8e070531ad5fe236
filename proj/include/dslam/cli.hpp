#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dslam::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,  // unparseable or invalid config / input file
  kIoError = 3,
  kPipelineError = 4,
  kAssociationError = 5,
};

struct SimulateArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct RunArgs {
  std::filesystem::path seq;
  std::filesystem::path out;  // trajectory (TUM)
  bool no_mask = false;
  bool no_prior = false;
  std::optional<double> fixed_weight;
  std::optional<std::filesystem::path> config;
  /// Directory receiving the aligned keyframe depth rasters as <id>.dpr.
  std::optional<std::filesystem::path> depth_out;
};

struct EvalArgs {
  std::filesystem::path est;
  std::filesystem::path gt;
  std::string mode = "ate";   // ate | rpe | depth
  std::string align = "sim3"; // sim3 | se3 | none
};

struct AblateArgs {
  std::filesystem::path seq;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
  std::vector<std::uint64_t> seeds;
};

/// Each command writes its payload to `out`, errors to `err`, and returns an
/// ExitCode.
int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err);

/// Worker count from DSLAM_THREADS (0 or unset = hardware concurrency).
unsigned thread_budget();

/// Paths of the files cmd_run writes next to the trajectory.
std::filesystem::path diagnostics_path(const std::filesystem::path& trajectory);
std::filesystem::path manifest_path(const std::filesystem::path& trajectory);

}  // namespace dslam::cli
