#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "roundabout/environment.hpp"
#include "roundabout/global_store.hpp"
#include "roundabout/nn.hpp"
#include "roundabout/rl.hpp"

namespace roundabout {

enum class ChainAction : int { Left = 0, Right = 1, Stay = 2 };

struct ChainConfig {
  int n_states = 8;            // the last state is the goal
  double step_reward = -0.01;  // every transition
  double goal_reward = 1.0;    // added on entering the goal
  double gamma = 0.99;
  int horizon = 50;            // steps before the episode times out
  bool random_start = true;    // uniform over non-goal states, else state 0
  std::size_t numeric_width = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Deterministic chain. One agent at a time; when it terminates the next
/// episode's agent appears in the same step.
class ChainMDP {
 public:
  explicit ChainMDP(const ChainConfig& cfg);

  void reset();
  std::vector<AgentId> active_agents() const { return {agent_}; }
  void policy_input(AgentId id, PolicyInput& out) const;
  StepResult step(const JointAction& actions);
  std::size_t action_count() const { return 3; }
  std::int64_t tick() const { return tick_; }

  int state() const { return state_; }
  void set_state(int s);
  const ChainConfig& config() const { return cfg_; }

  /// Deterministic transition and reward.
  static int next_state(const ChainConfig& cfg, int s, ChainAction a);
  static double reward(const ChainConfig& cfg, int next);
  /// One-hot input for state s.
  static PolicyInput encode(const ChainConfig& cfg, int s);

 private:
  void start_episode();

  ChainConfig cfg_;
  Rng rng_;
  AgentId agent_ = 0;
  int state_ = 0;
  int episode_steps_ = 0;
  std::int64_t tick_ = 0;
};

struct ValueIterationResult {
  std::vector<double> value;  // per state; the goal is 0
  std::vector<int> policy;    // greedy action per state; -1 at the goal
  int iterations = 0;
  double residual = 0.0;      // last max-norm change
};

/// Bellman optimality iteration until the max-norm change drops below tol.
/// Throws std::invalid_argument unless tol > 0.
ValueIterationResult value_iteration(const ChainConfig& cfg, double tol);

struct ValidationConfig {
  ChainConfig chain;
  RLConfig rl{20, 0.99, 1, 0.01, 0.5};
  RmsPropConfig rmsprop;
  std::int64_t max_env_steps = 50000;
  std::int64_t eval_every = 1000;
  std::uint64_t seed = 1;
  /// Gradients applied after every n-step segment (false: once per episode).
  bool update_every_flush = true;
  std::size_t hidden = 64;
  std::size_t merge = 64;

  NetSpec net_spec() const;
};

struct ValidationRow {
  std::int64_t step = 0;
  double agreement = 0.0;    // fraction of non-goal states where argmax pi = pi*
  double value_error = 0.0;  // max over non-goal states of |V_net - V*|
};

struct ValidationReport {
  std::vector<ValidationRow> rows;  // first row is the untrained network
  PolicyValueNet net;
  std::int64_t episodes = 0;
};

/// Single-agent n-step actor-critic on the chain.
ValidationReport run_validation(const ValidationConfig& cfg);
ValidationRow evaluate_chain_policy(const PolicyValueNet& net, const ChainConfig& chain,
                                    const ValueIterationResult& oracle);

/// CSV "step,agreement,value_error".
void write_validation_csv(const std::filesystem::path& file, const std::vector<ValidationRow>& rows);

}  // namespace roundabout
