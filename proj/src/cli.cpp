#include "dslam/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <ostream>
#include <thread>

#include "dslam/config.hpp"
#include "dslam/errors.hpp"
#include "dslam/eval.hpp"
#include "dslam/pipeline.hpp"
#include "dslam/provider.hpp"
#include "dslam/raster.hpp"
#include "dslam/sim.hpp"
#include "dslam/tum.hpp"

namespace dslam::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

/// Maps library exceptions onto exit codes and reports them.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const AssociationError& e) {
    err << "error: " << e.what() << "\n";
    return kAssociationError;
  } catch (const LookupError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
}

RunConfig config_or_default(const std::optional<fs::path>& path) {
  return path ? load_run_config(*path) : RunConfig{};
}

std::string diagnostics_text(const std::vector<KeyframeDiagnostics>& keyframes) {
  std::string out = "# frame_id s_star inliers sigma_med w_f n_patches n_retired\n";
  char line[160];
  for (const auto& k : keyframes) {
    std::snprintf(line, sizeof(line), "%d %.9g %d %.9g %.9g %d %d\n", k.frame_id, k.s_star,
                  k.scale_inliers, k.sigma_med.value_or(std::nan("")), k.w_f, k.n_patches, k.n_retired);
    out += line;
  }
  return out;
}

struct Matched {
  std::vector<Se3Pose> est;
  std::vector<Se3Pose> gt;
};

Matched match(const std::vector<StampedPose>& est, const std::vector<StampedPose>& gt) {
  Matched m;
  for (const auto& [i, j] : associate(est, gt)) {
    m.est.push_back(est[i].pose);
    m.gt.push_back(gt[j].pose);
  }
  return m;
}

}  // namespace

unsigned thread_budget() {
  unsigned n = 0;
  if (const char* env = std::getenv("DSLAM_THREADS")) n = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

fs::path diagnostics_path(const fs::path& trajectory) {
  fs::path p = trajectory;
  return p.replace_extension(".diag.txt");
}

fs::path manifest_path(const fs::path& trajectory) {
  fs::path p = trajectory;
  return p.replace_extension(".manifest.json");
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig config = config_or_default(args.config);
    if (args.seed) config.scene.seed = *args.seed;
    config.scene.validate();
    const SyntheticScene scene(config.scene);
    export_sequence(scene, args.out);

    const Json snapshot = to_json(config);
    Json manifest{{"command", "simulate"},
                  {"config", snapshot},
                  {"config_hash", config_hash(snapshot)},
                  {"seed", config.scene.seed},
                  {"artifacts", {{"sequence", args.out.string()},
                                 {"ground_truth", (args.out / "gt_traj.tum").string()}}}};
    const fs::path path = args.out / "manifest.json";
    write_text(path, manifest.dump(2) + "\n");
    out << path.string() << "\n";
    return int{kOk};
  });
}

int cmd_run(const RunArgs& args, std::ostream& /*out*/, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunConfig config = config_or_default(args.config);
    PipelineConfig& pc = config.pipeline;
    if (args.no_mask) pc.use_mask = false;
    if (args.no_prior) {
      pc.use_prior = false;
      pc.use_uncertainty = false;
    }
    if (args.fixed_weight) {
      pc.use_uncertainty = false;
      pc.fixed_weight = *args.fixed_weight;
    }
    pc.validate();
    const Json snapshot = to_json(config);
    const std::string hash = config_hash(snapshot);

    FileProvider provider(args.seq);
    Pipeline pipeline(provider, pc);
    int status = kOk;
    try {
      for (int t = 0; t < provider.num_frames(); ++t) pipeline.process_frame(t);
    } catch (const Error& e) {
      err << "error: pipeline failed: " << e.what() << "\n";
      status = kPipelineError;
    }
    const PipelineResult result = pipeline.result();
    std::vector<std::string> header = {"dslam trajectory", "config_hash " + hash};
    if (!result.initialized) header.push_back("status not-initialized");
    write_tum(args.out, result.trajectory, header);
    write_text(diagnostics_path(args.out), diagnostics_text(result.keyframes));
    if (args.depth_out) {
      fs::create_directories(*args.depth_out);
      for (const auto& [id, raster] : result.keyframe_depth) {
        write_raster(*args.depth_out / (std::to_string(id) + ".dpr"), raster, RasterKind::Depth);
      }
    }
    Json manifest{{"command", "run"},
                  {"config", snapshot},
                  {"config_hash", hash},
                  {"seed", pc.seed},
                  {"artifacts", {{"sequence", args.seq.string()},
                                 {"trajectory", args.out.string()},
                                 {"diagnostics", diagnostics_path(args.out).string()}}}};
    write_text(manifest_path(args.out), manifest.dump(2) + "\n");
    return status;
  });
}

namespace {

/// Ground-truth depth raster for keyframe `id`, trying the exported layout
/// first and then flat layouts.
fs::path gt_depth_file(const fs::path& root, const std::string& id) {
  for (const fs::path& candidate : {root / "gt" / id / "depth.dpr", root / (id + ".dpr"),
                                    root / id / "depth.dpr"}) {
    if (fs::exists(candidate)) return candidate;
  }
  return {};
}

int eval_depth(const EvalArgs& args, std::ostream& out) {
  if (!fs::is_directory(args.est)) throw LookupError("depth directory not found: " + args.est.string());
  if (!fs::is_directory(args.gt)) throw LookupError("depth directory not found: " + args.gt.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.est)) {
    if (entry.path().extension() == ".dpr") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Raster> pred;
  std::vector<Raster> gt;
  for (const auto& f : files) {
    const fs::path g = gt_depth_file(args.gt, f.stem().string());
    if (g.empty()) continue;
    pred.push_back(read_raster(f, RasterKind::Depth));
    gt.push_back(read_raster(g, RasterKind::Depth));
  }
  if (pred.empty()) throw AssociationError("no depth raster has a ground-truth counterpart");
  const bool scaled = align_mode_from_string(args.align) == AlignMode::Sim3;
  const DepthMetrics m = depth_metrics(pred, gt, scaled);
  out << "abs_rel=" << fmt("%.9f", m.abs_rel) << "\n"
      << "delta1=" << fmt("%.9f", m.delta1) << "\n"
      << "scale=" << fmt("%.9f", m.scale) << "\n";
  return kOk;
}

}  // namespace

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (args.mode == "depth") return eval_depth(args, out);
    const AlignMode align = align_mode_from_string(args.align);
    if (args.mode != "ate" && args.mode != "rpe") throw ParseError("unknown eval mode '" + args.mode + "'");
    const auto est = read_tum(args.est);
    const auto gt = read_tum(args.gt);
    const Matched m = match(est, gt);
    if (args.mode == "ate") {
      out << "ate_rmse=" << fmt("%.9f", ate_rmse(m.est, m.gt, align).rmse) << "\n";
    } else {
      const RpeResult r = rpe(m.est, m.gt, align);
      out << "rte=" << fmt("%.9f", r.rte) << "\n"
          << "rre=" << fmt("%.9f", r.rre) << "\n";
    }
    return kOk;
  });
}

namespace {

struct AblationRow {
  const char* name;
  bool mask;
  bool prior;
  bool uncertainty;
};

constexpr AblationRow kAblationRows[] = {
    {"a", false, false, false}, {"b", false, true, true}, {"c", true, false, false},
    {"d", true, true, false},   {"e", true, true, true},
};

struct AblationResult {
  double ate = std::nan("");
  double rte = std::nan("");
  double rre = std::nan("");
  std::string error;
};

AblationResult run_ablation(const fs::path& seq, const fs::path& traj_out, PipelineConfig pc,
                            const AblationRow& row, const std::vector<StampedPose>& gt) {
  pc.use_mask = row.mask;
  pc.use_prior = row.prior;
  pc.use_uncertainty = row.uncertainty;
  if (row.prior && !row.uncertainty) pc.fixed_weight = 1.0;
  AblationResult r;
  try {
    FileProvider provider(seq);
    const PipelineResult result = run_pipeline(provider, pc);
    write_tum(traj_out, result.trajectory, {std::string("ablation ") + row.name});
    const Matched m = match(result.trajectory, gt);
    r.ate = ate_rmse(m.est, m.gt).rmse;
    const RpeResult rp = rpe(m.est, m.gt);
    r.rte = rp.rte;
    r.rre = rp.rre;
  } catch (const Error& e) {
    r.error = e.what();
  }
  return r;
}

double median_finite(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string csv_number(double x) { return std::isfinite(x) ? fmt("%.9g", x) : "nan"; }

}  // namespace

int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const RunConfig config = config_or_default(args.config);
    config.pipeline.validate();
    if (!fs::is_directory(args.seq)) throw LookupError("sequence directory not found: " + args.seq.string());
    const auto gt = read_tum(args.seq / "gt_traj.tum");
    fs::create_directories(args.out);
    const std::vector<std::uint64_t> seeds =
        args.seeds.empty() ? std::vector<std::uint64_t>{config.pipeline.seed} : args.seeds;

    struct Job {
      std::size_t row;
      std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < std::size(kAblationRows); ++r) {
      for (std::uint64_t s : seeds) jobs.push_back({r, s});
    }
    std::vector<AblationResult> results(jobs.size());
    const unsigned workers = std::min<unsigned>(thread_budget(), static_cast<unsigned>(jobs.size()));
    auto run_job = [&](std::size_t k) {
      const Job& job = jobs[k];
      PipelineConfig pc = config.pipeline;
      pc.seed = job.seed;
      const AblationRow& row = kAblationRows[job.row];
      const std::string stem =
          seeds.size() == 1 ? std::string(row.name) : row.name + ("_" + std::to_string(job.seed));
      results[k] = run_ablation(args.seq, args.out / (stem + ".tum"), pc, row, gt);
    };
    if (workers <= 1) {
      for (std::size_t k = 0; k < jobs.size(); ++k) run_job(k);
    } else {
      // Jobs are independent and write disjoint files, so order does not matter.
      std::vector<std::future<void>> pending;
      std::atomic<std::size_t> next{0};
      for (unsigned w = 0; w < workers; ++w) {
        pending.push_back(std::async(std::launch::async, [&] {
          for (std::size_t k = next++; k < jobs.size(); k = next++) run_job(k);
        }));
      }
      for (auto& f : pending) f.get();
    }

    std::string csv = "config,ate_rmse,rte,rre\n";
    bool any = false;
    for (std::size_t r = 0; r < std::size(kAblationRows); ++r) {
      std::vector<double> ate, rte, rre;
      for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (jobs[k].row != r) continue;
        if (!results[k].error.empty()) {
          err << "warning: configuration " << kAblationRows[r].name << " seed " << jobs[k].seed
              << " failed: " << results[k].error << "\n";
        }
        ate.push_back(results[k].ate);
        rte.push_back(results[k].rte);
        rre.push_back(results[k].rre);
        any = any || std::isfinite(results[k].ate);
      }
      csv += std::string(kAblationRows[r].name) + "," + csv_number(median_finite(ate)) + "," +
             csv_number(median_finite(rte)) + "," + csv_number(median_finite(rre)) + "\n";
    }
    const fs::path path = args.out / "ablation.csv";
    write_text(path, csv);
    out << csv;
    return any ? int{kOk} : int{kPipelineError};
  });
}

}  // namespace dslam::cli
