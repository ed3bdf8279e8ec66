#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "roundabout/cli.hpp"
#include "roundabout/config.hpp"

using namespace roundabout;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("roundabout_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "roundabout");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path write_file(const fs::path& file, const std::string& text) {
  std::ofstream(file) << text;
  return file;
}

std::size_t line_count(const fs::path& file) {
  std::ifstream in(file);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::size_t config_error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig cfg = parse_config_text("{}");
  EXPECT_EQ(config_to_json(cfg), config_to_json(RunConfig{}));
  EXPECT_EQ(cfg.env.max_vehicles, 6);
  EXPECT_EQ(cfg.trainer.n_ag, 6);
  EXPECT_EQ(cfg.rl.n_steps, 20);
  EXPECT_DOUBLE_EQ(cfg.trainer.rmsprop.lr, 7e-4);
}

TEST(Config, ValuesAreApplied) {
  const RunConfig cfg = parse_config_text(R"({"n_steps": 5, "gamma": 0.9, "speed_cap_mode": "target_cap",
    "executor": "sequential", "sweep_parameter": "target_speed", "sweep_values": [5, 6.5],
    "legs": [{"angle_deg": 0, "length": 40}, {"angle_deg": 120, "length": 40}, {"angle_deg": 240, "length": 40}]})");
  EXPECT_EQ(cfg.rl.n_steps, 5);
  EXPECT_DOUBLE_EQ(cfg.rl.gamma, 0.9);
  EXPECT_EQ(cfg.env.speed_cap_mode, SpeedCapMode::TargetCap);
  EXPECT_EQ(cfg.trainer.executor, Executor::Sequential);
  EXPECT_EQ(cfg.sweep.parameter, SweepParameter::TargetSpeed);
  EXPECT_EQ(cfg.sweep.values, (std::vector<double>{5, 6.5}));
  EXPECT_DOUBLE_EQ(cfg.geometry.legs[1].angle_deg, 120);
}

TEST(Config, TargetSpeedSweepHasItsOwnDefaultGrid) {
  EXPECT_EQ(parse_config_text(R"({"sweep_parameter": "target_speed"})").sweep.values,
            (std::vector<double>{4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(parse_config_text(R"({"sweep_parameter": "target_speed", "sweep_values": [6]})").sweep.values,
            std::vector<double>{6});
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(config_error_line("{\n  \"n_steps\": 4,\n  \"gamma\": \"high\"\n}"), 3u);
  EXPECT_EQ(config_error_line("{\n  \"n_steps\": 4,\n\n  \"bogus_key\": 1\n}"), 4u);
  EXPECT_EQ(config_error_line("{\n  \"n_steps\": 0\n}"), 2u);
  EXPECT_EQ(config_error_line("{\n  \"n_steps\": 1.5\n}"), 2u);
  EXPECT_GT(config_error_line("{\n  \"n_steps\": 4,\n  oops\n}"), 0u);
  EXPECT_THROW(parse_config_text("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  RunConfig cfg = parse_config_text(R"({"n_env": 3, "lr": 0.00123, "seed": 99, "output_dir": "runs/x"})");
  const std::string dump = config_to_json(cfg);
  EXPECT_EQ(config_to_json(parse_config_text(dump)), dump);
  const auto j = nlohmann::json::parse(dump);
  EXPECT_EQ(j.at("n_env"), 3);
  EXPECT_EQ(j.at("output_dir"), "runs/x");
}

TEST(Config, ValidationSettingsComeFromTheRunConfig) {
  const RunConfig cfg = parse_config_text(R"({"seed": 4, "validation_env_steps": 777, "action_repeat": 3})");
  const ValidationConfig v = cfg.validation();
  EXPECT_EQ(v.seed, 4u);
  EXPECT_EQ(v.max_env_steps, 777);
  EXPECT_EQ(v.rl.action_repeat, 1);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}), kExitUsage);
  EXPECT_EQ(cli({"fly"}), kExitUsage);
  EXPECT_EQ(cli({"replay", "--steps", "1"}), kExitUsage);
  EXPECT_EQ(cli({"replay", "--steps", "1", "--scripted", "jump"}), kExitUsage);
  EXPECT_EQ(cli({"--help"}), kExitOk);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path dir = scratch("config");
  EXPECT_EQ(cli({"validate", "-c", (dir / "missing.json").string()}), kExitConfig);
  const auto bad = write_file(dir / "bad.json", "{\"unknown\": 1}");
  EXPECT_EQ(cli({"train", "-c", bad.string()}), kExitConfig);
  const auto range = write_file(dir / "range.json", "{\"dt\": -0.1}");
  EXPECT_EQ(cli({"replay", "-c", range.string(), "--scripted", "brake"}), kExitConfig);
}

TEST(Cli, RuntimeErrorsExitThree) {
  const fs::path dir = scratch("runtime");
  EXPECT_EQ(cli({"eval-sweep", "-o", dir.string(), "--checkpoint", (dir / "none.bin").string()}), kExitRuntime);
}

TEST(Cli, ReplayWritesTraceAndFrames) {
  const fs::path dir = scratch("replay");
  ASSERT_EQ(cli({"replay", "-o", dir.string(), "--scripted", "accelerate", "--steps", "100"}), kExitOk);
  EXPECT_EQ(line_count(dir / "trace.csv"), 101u);
  std::size_t pgms = 0;
  for (const auto& e : fs::directory_iterator(dir / "frames")) pgms += e.path().extension() == ".pgm";
  EXPECT_EQ(pgms, 300u);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
}

TEST(Cli, TrainThenReplayAndPlot) {
  const fs::path dir = scratch("train");
  const auto cfg = write_file(dir / "cfg.json", R"({"n_ag": 1, "total_episodes": 2, "seed": 3,
    "episode_time_limit": 15, "checkpoint_every": 1})");
  ASSERT_EQ(cli({"train", "-c", cfg.string(), "-o", (dir / "run").string()}), kExitOk);
  EXPECT_EQ(read_stats_csv(dir / "run" / "stats.csv").size(), 2u);
  EXPECT_NO_THROW(load_checkpoint(dir / "run" / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "episode_00000002.bin"));
  const RunConfig echoed = parse_config(dir / "run" / "config.json");
  EXPECT_EQ(echoed.trainer.total_episodes, 2);

  ASSERT_EQ(cli({"replay", "-o", (dir / "replay").string(), "--steps", "8", "--checkpoint",
                 (dir / "run" / "checkpoint.bin").string()}),
            kExitOk);
  EXPECT_EQ(line_count(dir / "replay" / "trace.csv"), 9u);

  ASSERT_EQ(cli({"plot", "--stats", (dir / "run" / "stats.csv").string(), "-o", (dir / "curve.svg").string(),
                 "--window", "1"}),
            kExitOk);
  EXPECT_TRUE(fs::exists(dir / "curve.svg"));
}
