#include "dslam/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dslam/errors.hpp"

namespace dslam {

namespace {

/// Reader/writer pair for one key of a settings object.
struct Field {
  std::function<void(const Json&, const std::string&)> read;
  std::function<Json()> write;
};
using FieldMap = std::map<std::string, Field>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ParseError("config key '" + path + "': " + what);
}

Field int_field(int& v) {
  return {[&v](const Json& j, const std::string& path) {
            if (!j.is_number_integer()) fail(path, "expected an integer");
            const auto x = j.get<std::int64_t>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
              fail(path, "integer out of range");
            }
            v = static_cast<int>(x);
          },
          [&v] { return Json(v); }};
}

Field u64_field(std::uint64_t& v) {
  return {[&v](const Json& j, const std::string& path) {
            if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
              fail(path, "expected a non-negative integer");
            }
            v = j.get<std::uint64_t>();
          },
          [&v] { return Json(v); }};
}

Field double_field(double& v) {
  return {[&v](const Json& j, const std::string& path) {
            if (!j.is_number()) fail(path, "expected a number");
            v = j.get<double>();
          },
          [&v] { return Json(v); }};
}

Field bool_field(bool& v) {
  return {[&v](const Json& j, const std::string& path) {
            if (!j.is_boolean()) fail(path, "expected true or false");
            v = j.get<bool>();
          },
          [&v] { return Json(v); }};
}

Field vec3_field(std::array<double, 3>& v) {
  return {[&v](const Json& j, const std::string& path) {
            if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
            for (std::size_t k = 0; k < 3; ++k) {
              if (!j[k].is_number()) fail(path, "expected an array of 3 numbers");
              v[k] = j[k].get<double>();
            }
          },
          [&v] { return Json(v); }};
}

Field object_field(FieldMap fields);

void read_object(const FieldMap& fields, const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError("unknown config key '" + sub + "'");
    it->second.read(value, sub);
  }
}

Json write_object(const FieldMap& fields) {
  Json out = Json::object();
  for (const auto& [key, field] : fields) out[key] = field.write();
  return out;
}

Field object_field(FieldMap fields) {
  auto shared = std::make_shared<FieldMap>(std::move(fields));
  return {[shared](const Json& j, const std::string& path) { read_object(*shared, j, path); },
          [shared] { return write_object(*shared); }};
}

FieldMap intrinsics_fields(CameraIntrinsics& c) {
  return {{"fx", double_field(c.fx)}, {"fy", double_field(c.fy)},   {"cx", double_field(c.cx)},
          {"cy", double_field(c.cy)}, {"width", int_field(c.width)}, {"height", int_field(c.height)}};
}

FieldMap noise_fields(SceneNoise& n) {
  return {{"sigma_flow", double_field(n.sigma_flow)},
          {"sigma_depth", double_field(n.sigma_depth)},
          {"depth_tilt", double_field(n.depth_tilt)},
          {"p_outlier", double_field(n.p_outlier)},
          {"mask_error_rate", double_field(n.mask_error_rate)},
          {"batch_scale_min", double_field(n.batch_scale_min)},
          {"batch_scale_max", double_field(n.batch_scale_max)},
          {"anchor_first_batch", bool_field(n.anchor_first_batch)}};
}

FieldMap scene_fields(SceneSpec& s) {
  Field path{[&s](const Json& j, const std::string& p) {
               if (!j.is_string()) fail(p, "expected a string");
               try {
                 s.path = camera_path_from_string(j.get<std::string>());
               } catch (const ParseError& e) {
                 fail(p, e.what());
               }
             },
             [&s] { return Json(to_string(s.path)); }};
  return {{"n_frames", int_field(s.n_frames)},
          {"intrinsics", object_field(intrinsics_fields(s.intrinsics))},
          {"dt", double_field(s.dt)},
          {"n_static_points", int_field(s.n_static_points)},
          {"static_box_min", vec3_field(s.static_box_min)},
          {"static_box_max", vec3_field(s.static_box_max)},
          {"n_moving_objects", int_field(s.n_moving_objects)},
          {"points_per_object", int_field(s.points_per_object)},
          {"object_radius", double_field(s.object_radius)},
          {"object_depth_min", double_field(s.object_depth_min)},
          {"object_depth_max", double_field(s.object_depth_max)},
          {"object_speed_min", double_field(s.object_speed_min)},
          {"object_speed_max", double_field(s.object_speed_max)},
          {"object_angular_speed", double_field(s.object_angular_speed)},
          {"path", path},
          {"path_speed", double_field(s.path_speed)},
          {"path_rotation", double_field(s.path_rotation)},
          {"path_period", double_field(s.path_period)},
          {"mask_by_motion", bool_field(s.mask_by_motion)},
          {"flow_max_gap", int_field(s.flow_max_gap)},
          {"noise", object_field(noise_fields(s.noise))},
          {"seed", u64_field(s.seed)}};
}

FieldMap pipeline_fields(PipelineConfig& c) {
  return {{"K", int_field(c.K)},
          {"F_window", int_field(c.F_window)},
          {"N_batch", int_field(c.N_batch)},
          {"s_d", double_field(c.s_d)},
          {"t_sigma", double_field(c.t_sigma)},
          {"alpha", double_field(c.alpha)},
          {"beta", double_field(c.beta)},
          {"huber_px", double_field(c.huber_px)},
          {"retire_factor", double_field(c.retire_factor)},
          {"min_patches", int_field(c.min_patches)},
          {"min_scale_samples", int_field(c.min_scale_samples)},
          {"kf_flow_px", double_field(c.kf_flow_px)},
          {"kf_max_gap", int_field(c.kf_max_gap)},
          {"bootstrap_px", double_field(c.bootstrap_px)},
          {"max_bootstrap_frames", int_field(c.max_bootstrap_frames)},
          {"use_mask", bool_field(c.use_mask)},
          {"use_prior", bool_field(c.use_prior)},
          {"use_uncertainty", bool_field(c.use_uncertainty)},
          {"fixed_weight", double_field(c.fixed_weight)},
          {"prior_scale", double_field(c.prior_scale)},
          {"lambda0", double_field(c.lambda0)},
          {"lm_down", double_field(c.lm_down)},
          {"lm_up", double_field(c.lm_up)},
          {"max_iters", int_field(c.max_iters)},
          {"eps_cost", double_field(c.eps_cost)},
          {"eps_step", double_field(c.eps_step)},
          {"d_min", double_field(c.d_min)},
          {"cov_damping", double_field(c.cov_damping)},
          {"seed", u64_field(c.seed)}};
}

}  // namespace

SceneSpec scene_from_json(const Json& doc, const SceneSpec& base) {
  SceneSpec out = base;
  read_object(scene_fields(out), doc, "scene");
  return out;
}

PipelineConfig pipeline_from_json(const Json& doc, const PipelineConfig& base) {
  PipelineConfig out = base;
  read_object(pipeline_fields(out), doc, "pipeline");
  return out;
}

RunConfig run_config_from_json(const Json& doc) {
  RunConfig out;
  if (!doc.is_object()) throw ParseError("config document must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "scene") {
      out.scene = scene_from_json(value);
    } else if (key == "pipeline") {
      out.pipeline = pipeline_from_json(value);
    } else {
      throw ParseError("unknown config key '" + key + "'");
    }
  }
  return out;
}

Json to_json(const SceneSpec& spec) {
  SceneSpec copy = spec;
  return write_object(scene_fields(copy));
}

Json to_json(const PipelineConfig& config) {
  PipelineConfig copy = config;
  return write_object(pipeline_fields(copy));
}

Json to_json(const RunConfig& config) {
  return Json{{"scene", to_json(config.scene)}, {"pipeline", to_json(config.pipeline)}};
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return Json::parse(buffer.str());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json(path));
}

std::string canonical_json(const Json& doc) { return doc.dump(); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const Json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_json(doc))));
  return buf;
}

}  // namespace dslam
