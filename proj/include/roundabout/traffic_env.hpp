#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "roundabout/environment.hpp"
#include "roundabout/raster.hpp"
#include "roundabout/scenario.hpp"

namespace roundabout {

enum class Action : int { Accelerate = 0, Brake = 1, Maintain = 2 };
inline constexpr std::size_t kActionCount = 3;

enum class SpeedCapMode { GlobalCap, TargetCap };

struct RewardConfig {
  double k_y = 0.05;  // failing to yield
  double k_s = 0.05;  // safety-distance violation
  double k_p = 0.001;
  double k_n = 0.03;
  double terminal_goal = 1.0;
  double terminal_crash = -1.0;
  double terminal_timeout = -1.0;
  double lookahead_horizon = 1.0;  // s; d = speed * horizon

  void validate() const;
};

struct RewardBreakdown {
  double terminal = 0.0;
  double danger = 0.0;
  double speed = 0.0;
  double total = 0.0;
};

struct EnvConfig {
  double dt = 0.1;
  int max_vehicles = 6;
  double v_max = 12.0;
  double accel = 1.0;
  double brake = -2.0;
  double episode_time_limit = 40.0;
  double target_speed_min = 5.0;
  double target_speed_max = 8.0;
  SpeedCapMode speed_cap_mode = SpeedCapMode::GlobalCap;
  std::uint64_t seed = 1;
  double spawn_clearance = 10.0;  // m of entry lane that must be free to spawn
  double vehicle_length = 4.0;
  double vehicle_width = 1.8;
  double distance_norm = 200.0;  // m, scale of the distance-to-goal input
  /// When false no views are rendered and observation() is unavailable; the
  /// dynamics and rewards are unaffected.
  bool render_observations = true;

  void validate() const;
  std::int64_t time_limit_ticks() const;
};

struct VehicleState {
  AgentId id = 0;
  std::shared_ptr<const PathSpec> path;
  double s = 0.0;
  double speed = 0.0;
  double target_speed = 5.0;
  std::optional<double> aggressiveness_override;
  std::int64_t spawn_tick = 0;
  double spawn_time = 0.0;
  double episode_deadline = 0.0;
  AgentStatus status = AgentStatus::Active;
};

Action action_from_index(int index);
std::string_view to_string(Action a);

/// Longitudinal update for one tick; s is clamped to the path end.
VehicleState apply_action(VehicleState v, Action a, const EnvConfig& cfg);

OrientedRect footprint(const VehicleState& v, const EnvConfig& cfg);

/// Unordered id pairs (smaller id first, sorted) whose footprints overlap.
std::vector<std::pair<AgentId, AgentId>> detect_collisions(std::span<const VehicleState> vehicles,
                                                           const EnvConfig& cfg);

/// Footprint not yet past the merge point of its own path.
bool is_entering(const VehicleState& v, const EnvConfig& cfg);

/// An entering agent whose footprint crosses the lane-width band of length
/// 3 * d_v ahead of an inserted vehicle v, d_v = v.speed * horizon.
bool yield_violation(const VehicleState& agent, std::span<const VehicleState> vehicles, const EnvConfig& cfg,
                     const RewardConfig& rewards, double lane_width);

/// Bumper gap to the nearest vehicle ahead on the agent's own path is below
/// d_a = agent.speed * horizon, unless that vehicle is entering and cutting in
/// front of an agent already on the ring.
bool safety_violation(const VehicleState& agent, std::span<const VehicleState> vehicles, const EnvConfig& cfg,
                      const RewardConfig& rewards, double lane_width);

/// Throws std::invalid_argument if target_speed <= 0.
double r_speed(double actual_speed, double target_speed, const RewardConfig& cfg);

struct DangerEvents {
  bool yield = false;
  bool safety = false;
};

/// Yield takes precedence over safety; the two penalties never add up.
RewardBreakdown compute_reward(AgentStatus status, DangerEvents events, double actual_speed, double target_speed,
                               const RewardConfig& cfg);

/// [speed / v_max, target / v_max, elapsed-time ratio (or the override), remaining / distance_norm].
std::array<double, 4> numeric_inputs(const VehicleState& v, double sim_time, const EnvConfig& cfg);

/// Four most recent views (oldest first) plus the numeric vector.
struct Observation {
  static constexpr std::size_t kFrames = 4;
  std::array<ViewLayers, kFrames> frames;
  std::array<double, 4> numeric{};

  /// Visual channel index = frame * 3 + layer.
  void to_input(PolicyInput& out) const;
};

struct TrafficStepResult : StepResult {
  std::vector<RewardBreakdown> breakdowns;  // parallel to agents
  std::vector<VehicleState> final_states;   // parallel to agents, state after the step
};

/// Multi-agent roundabout. Single-threaded state machine: step() takes one
/// action per active vehicle and advances every vehicle simultaneously.
class TrafficEnv {
 public:
  TrafficEnv(const EnvConfig& cfg, const RewardConfig& rewards, const GeometryConfig& geometry);

  /// t = 0, no vehicles, then one spawn attempt. Reseeds from config().seed.
  void reset();
  void reset(std::uint64_t seed);

  /// Throws std::invalid_argument if an active vehicle has no action or an
  /// action names an unknown vehicle.
  TrafficStepResult step(const JointAction& actions);

  /// Spawn attempt per the spawn rules; at most one vehicle.
  std::optional<AgentId> spawn_policy();
  /// Spawn on a specific entry if its mouth is clear and capacity allows.
  std::optional<AgentId> try_spawn(int entry, int exit, double target_speed);
  /// Caps random spawning below max_vehicles (used to reserve a probe slot).
  void set_spawn_limit(std::optional<int> limit) { spawn_limit_ = limit; }
  void set_aggressiveness(AgentId id, std::optional<double> value);
  void set_target_speed(AgentId id, double value);

  std::vector<AgentId> active_agents() const;
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const VehicleState& vehicle(AgentId id) const;
  bool has_vehicle(AgentId id) const;
  const Observation& observation(AgentId id) const;
  void policy_input(AgentId id, PolicyInput& out) const;
  /// Renders the current view of `id` without touching its frame stack.
  ViewLayers render_view(AgentId id) const;

  std::size_t action_count() const { return kActionCount; }
  std::int64_t tick() const { return tick_; }
  double sim_time() const { return static_cast<double>(tick_) * cfg_.dt; }
  const EnvConfig& config() const { return cfg_; }
  const RewardConfig& reward_config() const { return rewards_; }
  const RoundaboutMap& map() const { return map_; }
  const PathSpec& path(int entry, int exit) const { return *paths_[static_cast<std::size_t>(entry * 3 + exit)]; }

 private:
  bool entry_clear(int entry) const;
  AgentId add_vehicle(int entry, int exit, double target_speed);
  void render_new_frames(std::span<const AgentId> fresh, bool advance_existing);
  double uniform01();

  EnvConfig cfg_;
  RewardConfig rewards_;
  RoundaboutMap map_;
  std::array<std::shared_ptr<const PathSpec>, 9> paths_;
  std::vector<VehicleState> vehicles_;
  std::unordered_map<AgentId, Observation> observations_;
  std::optional<int> spawn_limit_;
  std::mt19937_64 rng_;
  std::int64_t tick_ = 0;
  AgentId next_id_ = 1;
};

}  // namespace roundabout
