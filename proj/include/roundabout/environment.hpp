#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

namespace roundabout {

using AgentId = std::uint64_t;

/// One-way lifecycle: Active -> {ReachedGoal, Crashed, TimedOut}.
enum class AgentStatus { Active, ReachedGoal, Crashed, TimedOut };

std::string_view to_string(AgentStatus status);

/// Network input for one agent. `visual` is channel-major (C x H x W) and
/// empty for environments without a visual observation.
struct PolicyInput {
  std::vector<double> visual;
  std::vector<double> numeric;
};

/// Action index per active agent.
using JointAction = std::map<AgentId, int>;

struct AgentStep {
  AgentId id = 0;
  double reward = 0.0;
  AgentStatus status = AgentStatus::Active;
  double speed = 0.0;  // m/s after the step; 0 for environments without motion
};

struct StepResult {
  std::vector<AgentStep> agents;  // every agent that was active when the step began
  std::vector<AgentId> spawned;   // agents that joined during the step
};

/// Contract shared by the traffic roundabout and the validation chain MDP.
/// Agents come and go: a terminated agent never reappears, newcomers are
/// reported through StepResult::spawned (or are present right after reset()).
template <typename E>
concept Environment = requires(E env, const E cenv, AgentId id, const JointAction& actions, PolicyInput& input) {
  { env.reset() } -> std::same_as<void>;
  { cenv.active_agents() } -> std::convertible_to<std::vector<AgentId>>;
  { cenv.policy_input(id, input) } -> std::same_as<void>;
  { env.step(actions) } -> std::convertible_to<StepResult>;
  { cenv.action_count() } -> std::convertible_to<std::size_t>;
  { cenv.tick() } -> std::convertible_to<std::int64_t>;
};

}  // namespace roundabout
