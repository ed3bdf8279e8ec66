#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roundabout/nn.hpp"
#include "roundabout/traffic_env.hpp"

namespace roundabout {

enum class SweepParameter { Aggressiveness, TargetSpeed };

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Aggressiveness;
  std::vector<double> values{-0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2};
  int episodes_per_value = 200;
  int action_repeat_eval = 4;
  std::filesystem::path checkpoint;
  std::uint64_t seed = 1;
  int probe_entry = 0;
  int probe_exit = 1;
  std::int64_t warmup_ticks = 50;          // background traffic runs before the probe enters
  double background_aggressiveness = 0.5;  // used by the target-speed sweep
  double probe_target_speed = 6.5;         // used by the aggressiveness sweep

  void validate() const;
};

struct SweepRow {
  double value = 0.0;
  double success_ratio = 0.0;
  double avg_speed = 0.0;
  int episodes = 0;
  int crashes = 0;
  int timeouts = 0;

  bool operator==(const SweepRow&) const = default;
};

struct ProbeEpisode {
  AgentStatus outcome = AgentStatus::Active;  // Active if the probe never got on the road
  double mean_speed = 0.0;
  std::int64_t steps = 0;
};

std::string_view to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view text);

/// One evaluation episode: background vehicles fill the roundabout for
/// warmup_ticks, then the probe is spawned on its fixed route and the episode
/// runs until the probe terminates. Every vehicle samples from the policy.
ProbeEpisode run_probe_episode(const PolicyValueNet& net, const SweepSpec& spec, double value, EnvConfig env_cfg,
                               const RewardConfig& rewards, const GeometryConfig& geometry, std::uint64_t seed);

/// Throws std::invalid_argument on a bad spec. Episodes run in parallel; rows
/// are independent of the thread count.
std::vector<SweepRow> run_sweep(const PolicyValueNet& net, const SweepSpec& spec, const EnvConfig& env_cfg,
                                const RewardConfig& rewards, const GeometryConfig& geometry);
/// Loads spec.checkpoint; throws std::runtime_error if it is missing or corrupt.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const EnvConfig& env_cfg, const RewardConfig& rewards,
                                const GeometryConfig& geometry);

/// "value,success_ratio,avg_speed,episodes,crashes,timeouts", full precision.
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

struct PlotSeries {
  std::string label;
  std::vector<double> y;
  std::string color;
};

/// Static SVG line plot; left axis for the first series, right axis for the
/// second when present. Throws std::invalid_argument on empty input.
std::string dual_axis_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                          const PlotSeries& left, const std::optional<PlotSeries>& right);

/// Writes <stem>.csv and <stem>.svg. Throws std::invalid_argument on empty rows.
void summarize(const std::vector<SweepRow>& rows, SweepParameter parameter, const std::filesystem::path& stem);

}  // namespace roundabout
