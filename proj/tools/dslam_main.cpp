#include <cstdint>
#include <iostream>

#include "CLI11.hpp"

#include "dslam/cli.hpp"

namespace cli = dslam::cli;

int main(int argc, char** argv) {
  CLI::App app{"Prior-guided deep visual odometry with uncertainty-weighted depth priors"};
  app.require_subcommand(1);

  cli::SimulateArgs sim;
  std::uint64_t sim_seed = 0;
  std::string sim_config;
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic sequence to disk");
  simulate->add_option("--config", sim_config, "JSON config ({scene, pipeline})")->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output sequence directory")->required();
  auto* seed_opt = simulate->add_option("--seed", sim_seed, "Override scene.seed");

  cli::RunArgs run;
  std::string run_config, depth_out;
  double fixed_weight = 1.0;
  auto* run_cmd = app.add_subcommand("run", "Run odometry on a sequence directory");
  run_cmd->add_option("--seq", run.seq, "Sequence directory")->required();
  run_cmd->add_option("--out", run.out, "Output TUM trajectory")->required();
  run_cmd->add_flag("--no-mask", run.no_mask, "Spawn patches anywhere");
  run_cmd->add_flag("--no-prior", run.no_prior, "Disable the depth prior term");
  auto* fw_opt = run_cmd->add_option("--fixed-weight", fixed_weight, "Constant prior weight");
  run_cmd->add_option("--config", run_config, "JSON config");
  run_cmd->add_option("--depth-out", depth_out, "Directory for aligned keyframe depth");

  cli::EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a trajectory or depth maps");
  eval->add_option("--est", ev.est, "Estimate (TUM file or depth directory)")->required();
  eval->add_option("--gt", ev.gt, "Ground truth (TUM file or depth directory)")->required();
  eval->add_option("--mode", ev.mode, "ate | rpe | depth")->check(CLI::IsMember({"ate", "rpe", "depth"}));
  eval->add_option("--align", ev.align, "sim3 | se3 | none")->check(CLI::IsMember({"sim3", "se3", "none"}));

  cli::AblateArgs abl;
  std::string abl_config;
  auto* ablate = app.add_subcommand("ablate", "Run the five ablation configurations");
  ablate->add_option("--seq", abl.seq, "Sequence directory")->required();
  ablate->add_option("--out", abl.out, "Output directory")->required();
  ablate->add_option("--config", abl_config, "JSON config");
  ablate->add_option("--seeds", abl.seeds, "Pipeline seeds (median over seeds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return cli::kConfigError;
  }

  if (simulate->parsed()) {
    if (!sim_config.empty()) sim.config = sim_config;
    if (*seed_opt) sim.seed = sim_seed;
    return cli::cmd_simulate(sim, std::cout, std::cerr);
  }
  if (run_cmd->parsed()) {
    if (!run_config.empty()) run.config = run_config;
    if (!depth_out.empty()) run.depth_out = depth_out;
    if (*fw_opt) run.fixed_weight = fixed_weight;
    return cli::cmd_run(run, std::cout, std::cerr);
  }
  if (eval->parsed()) return cli::cmd_eval(ev, std::cout, std::cerr);
  if (!abl_config.empty()) abl.config = abl_config;
  return cli::cmd_ablate(abl, std::cout, std::cerr);
}
