#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "roundabout/eval.hpp"
#include "roundabout/kernels.hpp"

using namespace roundabout;

namespace {

struct EvalSetup {
  EnvConfig env;
  RewardConfig rewards;
  GeometryConfig geometry;
  SweepSpec spec;
};

// Two vehicles and short episodes keep the full-size network affordable.
EvalSetup small_setup() {
  EvalSetup s;
  s.env.max_vehicles = 2;
  s.env.episode_time_limit = 10.0;
  s.spec.values = {0.0, 1.0};
  s.spec.episodes_per_value = 3;
  s.spec.warmup_ticks = 10;
  return s;
}

std::vector<double> polyline_x(const std::string& svg) {
  const std::regex poly(R"(<polyline class="series"[^>]*points="([^"]*)\")");
  std::smatch m;
  std::vector<double> xs;
  if (!std::regex_search(svg, m, poly)) return xs;
  std::istringstream pts(m[1].str());
  std::string pair;
  while (pts >> pair) xs.push_back(std::stod(pair.substr(0, pair.find(','))));
  return xs;
}

}  // namespace

TEST(SweepSpec, Validation) {
  SweepSpec s;
  EXPECT_NO_THROW(s.validate());
  s.episodes_per_value = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.values.clear();
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.probe_exit = 3;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.parameter = SweepParameter::TargetSpeed;
  s.values = {5.0, 0.0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(SweepSpec, ParameterNames) {
  EXPECT_EQ(parse_sweep_parameter("aggressiveness"), SweepParameter::Aggressiveness);
  EXPECT_EQ(parse_sweep_parameter(to_string(SweepParameter::TargetSpeed)), SweepParameter::TargetSpeed);
  EXPECT_THROW(parse_sweep_parameter("speed"), std::invalid_argument);
}

TEST(SweepCsv, RoundTripIsExact) {
  const std::vector<SweepRow> rows{{-0.2, 0.125, 6.123456789012345, 8, 3, 4}, {1.0 / 3, 1.0, 1e-9, 200, 0, 0}};
  const std::string text = sweep_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "value,success_ratio,avg_speed,episodes,crashes,timeouts");
  EXPECT_EQ(parse_sweep_csv(text), rows);
  EXPECT_THROW(parse_sweep_csv("value,success\n"), std::runtime_error);
  EXPECT_THROW(parse_sweep_csv(text + "1,2\n"), std::runtime_error);
}

TEST(Svg, SinglePointIsFinite) {
  const std::string svg = dual_axis_svg("t", "x", {0.5}, {"a", {0.3}, "red"}, std::nullopt);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
  EXPECT_EQ(polyline_x(svg).size(), 1u);
}

TEST(Svg, PolylineFollowsSortedX) {
  const std::vector<double> x{-0.2, 0.0, 0.2, 0.4, 1.2};
  const std::string svg =
      dual_axis_svg("sweep <a&b>", "x", x, {"s", {0, 1, 0.5, 0.2, 0.9}, "red"}, PlotSeries{"v", {1, 2, 3, 4, 5}, "blue"});
  const auto xs = polyline_x(svg);
  ASSERT_EQ(xs.size(), x.size());
  for (std::size_t i = 1; i < xs.size(); ++i) EXPECT_GT(xs[i], xs[i - 1]);
  EXPECT_NE(svg.find("&lt;a&amp;b&gt;"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 10, true);
  EXPECT_THROW(dual_axis_svg("t", "x", {}, {"a", {}, "red"}, std::nullopt), std::invalid_argument);
  EXPECT_THROW(dual_axis_svg("t", "x", {1, 2}, {"a", {1}, "red"}, std::nullopt), std::invalid_argument);
}

TEST(Summarize, WritesCsvAndSvg) {
  const auto stem = std::filesystem::temp_directory_path() / "roundabout_sweep";
  const std::vector<SweepRow> rows{{0.0, 0.5, 5.0, 2, 1, 0}, {1.0, 1.0, 6.0, 2, 0, 0}};
  summarize(rows, SweepParameter::Aggressiveness, stem);
  std::ifstream csv(stem.string() + ".csv");
  const std::string text((std::istreambuf_iterator<char>(csv)), {});
  EXPECT_EQ(parse_sweep_csv(text), rows);
  EXPECT_TRUE(std::filesystem::exists(stem.string() + ".svg"));
  EXPECT_THROW(summarize({}, SweepParameter::Aggressiveness, stem), std::invalid_argument);
  std::filesystem::remove(stem.string() + ".csv");
  std::filesystem::remove(stem.string() + ".svg");
}

TEST(ProbeEpisode, TerminatesWithAnOutcome) {
  const EvalSetup s = small_setup();
  const PolicyValueNet net = init_params(NetSpec::traffic(), 1);
  const ProbeEpisode ep = run_probe_episode(net, s.spec, 0.5, s.env, s.rewards, s.geometry, 3);
  EXPECT_NE(ep.outcome, AgentStatus::Active);
  EXPECT_GT(ep.steps, 0);
  EXPECT_GE(ep.mean_speed, 0.0);
  EXPECT_LE(ep.mean_speed, s.env.v_max);
}

TEST(RunSweep, CountsAddUpAndRunsAreReproducible) {
  EvalSetup s = small_setup();
  const PolicyValueNet net = init_params(NetSpec::traffic(), 2);
  const auto rows = run_sweep(net, s.spec, s.env, s.rewards, s.geometry);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.episodes, 3);
    const double goals = r.success_ratio * r.episodes;
    EXPECT_NEAR(goals, std::round(goals), 1e-12);
    EXPECT_EQ(static_cast<int>(std::round(goals)) + r.crashes + r.timeouts, r.episodes);
  }
  kernels::set_thread_budget(1);
  const auto serial_rows = run_sweep(net, s.spec, s.env, s.rewards, s.geometry);
  kernels::set_thread_budget(4);
  EXPECT_EQ(rows, serial_rows);
}

TEST(RunSweep, RepeatedValueGivesIdenticalRows) {
  EvalSetup s = small_setup();
  s.spec.values = {0.7, 0.7};
  s.spec.episodes_per_value = 2;
  const PolicyValueNet net = init_params(NetSpec::traffic(), 3);
  const auto rows = run_sweep(net, s.spec, s.env, s.rewards, s.geometry);
  EXPECT_EQ(rows[0], rows[1]);
}

TEST(RunSweep, MissingCheckpointIsAnError) {
  EvalSetup s = small_setup();
  s.spec.checkpoint = "/nonexistent/checkpoint.bin";
  EXPECT_THROW(run_sweep(s.spec, s.env, s.rewards, s.geometry), std::runtime_error);
}
