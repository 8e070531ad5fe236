#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dslam/ba.hpp"
#include "dslam/cli.hpp"
#include "dslam/config.hpp"
#include "dslam/errors.hpp"
#include "dslam/eval.hpp"
#include "dslam/geometry.hpp"
#include "dslam/pipeline.hpp"
#include "dslam/scale.hpp"
#include "dslam/sim.hpp"
#include "dslam/tum.hpp"

namespace py = pybind11;
using namespace dslam;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Rows of (tx ty tz qx qy qz qw), camera -> world, as in TUM files.
std::vector<Se3Pose> poses_from_rows(const Array& rows) {
  if (rows.ndim() != 2 || rows.shape(1) != 7) throw py::value_error("expected an (N, 7) array");
  auto r = rows.unchecked<2>();
  std::vector<Se3Pose> out;
  for (py::ssize_t i = 0; i < r.shape(0); ++i) {
    const Se3Pose c2w = Se3Pose::FromCoeffs({r(i, 3), r(i, 4), r(i, 5), r(i, 6)}, {r(i, 0), r(i, 1), r(i, 2)});
    out.push_back(c2w.inverse());
  }
  return out;
}

Array rows_from_trajectory(const std::vector<StampedPose>& traj) {
  Array out({static_cast<py::ssize_t>(traj.size()), py::ssize_t{8}});
  auto o = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Se3Pose c2w = traj[i].pose.inverse();
    const auto& q = c2w.rotation().coeffs();
    const double row[8] = {traj[i].timestamp, c2w.translation().x(), c2w.translation().y(),
                           c2w.translation().z(), q.x(), q.y(), q.z(), q.w()};
    for (int k = 0; k < 8; ++k) o(i, k) = row[k];
  }
  return out;
}

Raster raster_from(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D depth array");
  Raster r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto v = a.unchecked<2>();
  for (py::ssize_t y = 0; y < a.shape(0); ++y)
    for (py::ssize_t x = 0; x < a.shape(1); ++x) r.at(int(x), int(y)) = static_cast<float>(v(y, x));
  return r;
}

Array array_from(const Raster& r) {
  Array out({py::ssize_t(r.height()), py::ssize_t(r.width())});
  auto o = out.mutable_unchecked<2>();
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) o(y, x) = r.at(x, y);
  return out;
}

py::tuple command_result(int code, const std::ostringstream& out, const std::ostringstream& err) {
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the dslam odometry package";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<AssociationError>(m, "AssociationError", base.ptr());
  py::register_exception<BehindCameraError>(m, "BehindCameraError", base.ptr());
  py::register_exception<UnderconstrainedError>(m, "UnderconstrainedError", base.ptr());
  py::register_exception<InsufficientSamplesError>(m, "InsufficientSamplesError", base.ptr());
  py::register_exception<EstimateFailedError>(m, "EstimateFailedError", base.ptr());

  py::class_<Se3Pose>(m, "Se3Pose")
      .def(py::init<>())
      .def(py::init([](const Eigen::Vector4d& xyzw, const Vec3& t) { return Se3Pose::FromCoeffs(xyzw, t); }),
           py::arg("quaternion_xyzw"), py::arg("translation"))
      .def_property_readonly("translation", [](const Se3Pose& p) { return Vec3(p.translation()); })
      .def_property_readonly("quaternion_xyzw", [](const Se3Pose& p) { return Eigen::Vector4d(p.rotation().coeffs()); })
      .def_property_readonly("rotation_matrix", &Se3Pose::rotation_matrix)
      .def("inverse", &Se3Pose::inverse)
      .def("angle", &Se3Pose::angle)
      .def("__mul__", [](const Se3Pose& a, const Se3Pose& b) { return a * b; })
      .def("transform", [](const Se3Pose& a, const Vec3& x) { return Vec3(a * x); });

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int w, int h) {
             return CameraIntrinsics{fx, fy, cx, cy, w, h};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def_readwrite("width", &CameraIntrinsics::width)
      .def_readwrite("height", &CameraIntrinsics::height);

  m.def("se3_exp", &se3_exp, py::arg("delta"));
  m.def("se3_log", &se3_log, py::arg("pose"));
  m.def("se3_retract", &se3_retract, py::arg("pose"), py::arg("delta"));
  m.def("backproject", [](const CameraIntrinsics& k, double u, double v, double d) {
    return backproject(k, {u, v}, d);
  }, py::arg("intrinsics"), py::arg("u"), py::arg("v"), py::arg("inv_depth"));
  m.def("project", [](const CameraIntrinsics& k, const Vec3& x) { return project(k, x).vec(); },
        py::arg("intrinsics"), py::arg("point"));
  m.def("reproject", [](const Se3Pose& ti, const Se3Pose& tj, const CameraIntrinsics& k, double u, double v,
                        double d) { return reproject(ti, tj, k, {u, v}, d).vec(); },
        py::arg("pose_i"), py::arg("pose_j"), py::arg("intrinsics"), py::arg("u"), py::arg("v"), py::arg("inv_depth"));

  m.def("frame_weight", [](std::optional<double> s, double a, double b) { return frame_weight(s, a, b); },
        py::arg("sigma_med"), py::arg("alpha"), py::arg("beta"));

  m.def("estimate_scale",
        [](const Array& d, const Array& d_hat, const Array& conf, const Array& rel_std, double t_sigma,
           std::size_t min_samples) {
          const py::ssize_t n = d.size();
          if (d_hat.size() != n || conf.size() != n || rel_std.size() != n) {
            throw py::value_error("sample arrays differ in length");
          }
          ScaleProblem p;
          p.t_sigma = t_sigma;
          p.min_samples = min_samples;
          for (py::ssize_t i = 0; i < n; ++i) {
            p.samples.push_back({d.data()[i], d_hat.data()[i], conf.data()[i], rel_std.data()[i]});
          }
          const ScaleProblem gated = gate_samples(p);
          const double init = init_scale_weighted_median(gated);
          const ScaleEstimate e = estimate_scale_irls(gated, init);
          py::dict out;
          out["s_star"] = e.s_star;
          out["init"] = init;
          out["inliers"] = e.inlier_count;
          out["iterations"] = e.iterations;
          out["converged"] = e.converged;
          out["huber_delta"] = e.huber_delta;
          out["retained"] = gated.samples.size();
          return out;
        },
        py::arg("d"), py::arg("d_hat"), py::arg("confidence"), py::arg("rel_std"), py::arg("t_sigma") = 0.5,
        py::arg("min_samples") = 10);

  m.def("ate_rmse", [](const Array& est, const Array& gt, const std::string& align) {
    return ate_rmse(poses_from_rows(est), poses_from_rows(gt), align_mode_from_string(align)).rmse;
  }, py::arg("est"), py::arg("gt"), py::arg("align") = "sim3");
  m.def("rpe", [](const Array& est, const Array& gt, const std::string& align) {
    const RpeResult r = rpe(poses_from_rows(est), poses_from_rows(gt), align_mode_from_string(align));
    return py::make_tuple(r.rte, r.rre);
  }, py::arg("est"), py::arg("gt"), py::arg("align") = "sim3");
  m.def("depth_metrics", [](const std::vector<Array>& pred, const std::vector<Array>& gt, bool scale) {
    std::vector<Raster> p, g;
    for (const auto& a : pred) p.push_back(raster_from(a));
    for (const auto& a : gt) g.push_back(raster_from(a));
    const DepthMetrics dm = depth_metrics(p, g, scale);
    py::dict out;
    out["abs_rel"] = dm.abs_rel;
    out["delta1"] = dm.delta1;
    out["scale"] = dm.scale;
    out["pixels"] = dm.pixels;
    return out;
  }, py::arg("pred"), py::arg("gt"), py::arg("per_sequence_scale"));

  m.def("read_tum", [](const std::filesystem::path& p) { return rows_from_trajectory(read_tum(p)); });
  m.def("config_hash", [](const std::string& json_text) { return config_hash(Json::parse(json_text)); });
  m.def("default_config", [] { return to_json(RunConfig{}).dump(); });

  m.def("run_synthetic", [](const std::string& json_text) {
    const RunConfig cfg = run_config_from_json(Json::parse(json_text));
    SyntheticScene scene(cfg.scene);
    PipelineResult r;
    {
      py::gil_scoped_release release;
      r = run_pipeline(scene, cfg.pipeline);
    }
    std::vector<StampedPose> gt;
    for (const auto& p : r.trajectory) gt.push_back({p.frame_id, p.timestamp, scene.ground_truth().poses[p.frame_id]});
    py::list keyframes;
    for (const auto& k : r.keyframes) {
      py::dict d;
      d["frame_id"] = k.frame_id;
      d["s_star"] = k.s_star;
      d["batch_scale"] = scene.ground_truth().batch_scales[k.batch_id];
      d["sigma_med"] = k.sigma_med;
      d["w_f"] = k.w_f;
      d["n_patches"] = k.n_patches;
      d["n_retired"] = k.n_retired;
      keyframes.append(d);
    }
    py::dict depth;
    for (const auto& [id, raster] : r.keyframe_depth) depth[py::int_(id)] = array_from(raster);
    py::dict out;
    out["trajectory"] = rows_from_trajectory(r.trajectory);
    out["ground_truth"] = rows_from_trajectory(gt);
    out["keyframes"] = keyframes;
    out["keyframe_depth"] = depth;
    out["initialized"] = r.initialized;
    return out;
  }, py::arg("config_json"));

  m.def("cmd_simulate", [](std::optional<std::filesystem::path> config, const std::filesystem::path& out,
                           std::optional<std::uint64_t> seed) {
    std::ostringstream o, e;
    const int code = cli::cmd_simulate({config, out, seed}, o, e);
    return command_result(code, o, e);
  }, py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def("cmd_run", [](const std::filesystem::path& seq, const std::filesystem::path& out, bool no_mask,
                      bool no_prior, std::optional<double> fixed_weight,
                      std::optional<std::filesystem::path> config,
                      std::optional<std::filesystem::path> depth_out) {
    std::ostringstream o, e;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::cmd_run({seq, out, no_mask, no_prior, fixed_weight, config, depth_out}, o, e);
    }
    return command_result(code, o, e);
  }, py::arg("seq"), py::arg("out"), py::arg("no_mask") = false, py::arg("no_prior") = false,
     py::arg("fixed_weight") = py::none(), py::arg("config") = py::none(), py::arg("depth_out") = py::none());
  m.def("cmd_eval", [](const std::filesystem::path& est, const std::filesystem::path& gt, const std::string& mode,
                       const std::string& align) {
    std::ostringstream o, e;
    const int code = cli::cmd_eval({est, gt, mode, align}, o, e);
    return command_result(code, o, e);
  }, py::arg("est"), py::arg("gt"), py::arg("mode") = "ate", py::arg("align") = "sim3");
}
