#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dslam/cli.hpp"
#include "dslam/config.hpp"
#include "dslam/errors.hpp"
#include "dslam/tum.hpp"

namespace dslam {
namespace {

namespace fs = std::filesystem;

TEST(Config, UnknownKeyNamesPath) {
  try {
    run_config_from_json(Json::parse(R"({"pipeline": {"K": 10, "foo": 1}})"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("pipeline.foo"), std::string::npos);
  }
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"extra": {}})")), ParseError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"scene": {"noise": {"sigma": 1}}})")), ParseError);
}

TEST(Config, TypeErrors) {
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"pipeline": {"K": 1.5}})")), ParseError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"pipeline": {"use_mask": 1}})")), ParseError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"scene": {"path": "spiral"}})")), ParseError);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"scene": {"static_box_min": [1, 2]}})")), ParseError);
}

TEST(Config, RoundTripAndHash) {
  RunConfig c = run_config_from_json(Json::parse(
      R"({"scene": {"n_frames": 77, "path": "orbit", "noise": {"sigma_flow": 0.25}},
          "pipeline": {"alpha": 3.5, "use_mask": false}})"));
  EXPECT_EQ(c.scene.n_frames, 77);
  EXPECT_EQ(c.scene.path, CameraPath::Orbit);
  EXPECT_EQ(c.scene.noise.sigma_flow, 0.25);
  EXPECT_EQ(c.pipeline.alpha, 3.5);
  EXPECT_FALSE(c.pipeline.use_mask);
  const Json j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(canonical_json(to_json(back)), canonical_json(j));
  EXPECT_EQ(config_hash(j), config_hash(to_json(back)));
  EXPECT_EQ(config_hash(j).size(), 16u);
  c.pipeline.alpha = 3.6;
  EXPECT_NE(config_hash(to_json(c)), config_hash(j));
}

TEST(Config, Fnv1a) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "dslam_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, SimulateRunEval) {
  cli::SimulateArgs sim;
  sim.config = write("c.json", R"({"scene": {"n_frames": 25}})");
  sim.out = dir_ / "seq";
  sim.seed = 4;
  ASSERT_EQ(cli::cmd_simulate(sim, out_, err_), 0) << err_.str();
  EXPECT_TRUE(fs::exists(dir_ / "seq" / "manifest.json"));

  cli::RunArgs run;
  run.seq = dir_ / "seq";
  run.out = dir_ / "traj.tum";
  run.depth_out = dir_ / "depth";
  ASSERT_EQ(cli::cmd_run(run, out_, err_), 0) << err_.str();
  EXPECT_EQ(read_tum(run.out).size(), 25u);
  EXPECT_TRUE(fs::exists(cli::diagnostics_path(run.out)));
  EXPECT_TRUE(fs::exists(cli::manifest_path(run.out)));
  std::ifstream tum(run.out);
  std::string first, second;
  std::getline(tum, first);
  std::getline(tum, second);
  EXPECT_EQ(second.rfind("# config_hash ", 0), 0u);

  cli::EvalArgs ev;
  ev.est = run.out;
  ev.gt = dir_ / "seq" / "gt_traj.tum";
  std::ostringstream metrics;
  ASSERT_EQ(cli::cmd_eval(ev, metrics, err_), 0);
  EXPECT_EQ(metrics.str().rfind("ate_rmse=", 0), 0u);
  ev.mode = "depth";
  ev.est = dir_ / "depth";
  ev.gt = dir_ / "seq";
  std::ostringstream depth;
  ASSERT_EQ(cli::cmd_eval(ev, depth, err_), 0) << err_.str();
  EXPECT_EQ(depth.str().rfind("abs_rel=", 0), 0u);
}

TEST_F(CliTest, RepeatedRunsAreIdentical) {
  cli::SimulateArgs sim;
  sim.config = write("c.json", R"({"scene": {"n_frames": 20, "noise": {"sigma_flow": 0.5}}})");
  sim.out = dir_ / "seq";
  ASSERT_EQ(cli::cmd_simulate(sim, out_, err_), 0);
  cli::RunArgs run;
  run.seq = dir_ / "seq";
  run.out = dir_ / "a.tum";
  ASSERT_EQ(cli::cmd_run(run, out_, err_), 0);
  run.out = dir_ / "b.tum";
  ASSERT_EQ(cli::cmd_run(run, out_, err_), 0);
  std::ifstream a(dir_ / "a.tum"), b(dir_ / "b.tum");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST_F(CliTest, ExitCodes) {
  cli::RunArgs run;
  run.seq = dir_ / "nowhere";
  run.out = dir_ / "t.tum";
  EXPECT_EQ(cli::cmd_run(run, out_, err_), cli::kIoError);

  run.config = write("bad.json", R"({"pipeline": {"bogus": true}})");
  EXPECT_EQ(cli::cmd_run(run, out_, err_), cli::kConfigError);
  run.config = write("broken.json", "{not json");
  EXPECT_EQ(cli::cmd_run(run, out_, err_), cli::kConfigError);

  cli::EvalArgs ev;
  ev.est = dir_ / "missing.tum";
  ev.gt = dir_ / "missing.tum";
  EXPECT_EQ(cli::cmd_eval(ev, out_, err_), cli::kIoError);

  write("a.tum", "0 0 0 0 0 0 0 1\n1 1 0 0 0 0 0 1\n");
  write("b.tum", "50 0 0 0 0 0 0 1\n51 1 0 0 0 0 0 1\n");
  write("c.tum", "0 0 0 0 0 0 0 1\n1 1 0 0 0 0\n");
  ev.est = dir_ / "a.tum";
  ev.gt = dir_ / "b.tum";
  EXPECT_EQ(cli::cmd_eval(ev, out_, err_), cli::kAssociationError);
  ev.gt = dir_ / "c.tum";
  EXPECT_EQ(cli::cmd_eval(ev, out_, err_), cli::kConfigError);
}

}  // namespace
}  // namespace dslam
