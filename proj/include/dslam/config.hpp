#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "dslam/pipeline.hpp"
#include "dslam/sim.hpp"

namespace dslam {

using Json = nlohmann::json;

/// Scene and pipeline settings of one experiment. Both sections are optional
/// in the document; missing keys keep their defaults, unknown keys are
/// rejected.
struct RunConfig {
  SceneSpec scene;
  PipelineConfig pipeline;
};

/// Throws ParseError naming the offending key path (e.g. `pipeline.K`).
RunConfig run_config_from_json(const Json& doc);
SceneSpec scene_from_json(const Json& doc, const SceneSpec& base = {});
PipelineConfig pipeline_from_json(const Json& doc, const PipelineConfig& base = {});

Json to_json(const SceneSpec& spec);
Json to_json(const PipelineConfig& config);
Json to_json(const RunConfig& config);

/// Reads a JSON document. LookupError when missing, ParseError on bad syntax.
Json read_json(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

/// Compact dump with sorted keys; identical settings give identical text.
std::string canonical_json(const Json& doc);
/// FNV-1a 64-bit digest of the canonical text, as 16 hex digits.
std::string config_hash(const Json& doc);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace dslam
