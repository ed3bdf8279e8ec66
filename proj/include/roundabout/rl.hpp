#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "roundabout/environment.hpp"
#include "roundabout/nn.hpp"

namespace roundabout {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Deterministic child seed (splitmix64 mixing of the parent and two indices).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

struct RLConfig {
  int n_steps = 20;
  double gamma = 0.99;
  int action_repeat = 4;
  double entropy_coef = 0.01;
  double value_loss_coef = 0.5;

  void validate() const;
};

struct TrajectoryRecord {
  ForwardCache cache;     // inputs and activations at the decision state
  int action = 0;
  double reward = 0.0;    // summed over the ticks the action was held
  double value = 0.0;
  std::vector<double> log_probs;
};

struct TrajectoryBuffer {
  std::vector<TrajectoryRecord> records;
  double bootstrap_value = 0.0;  // 0 when terminal
  bool terminal = false;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::vector<double> rewards() const;
  std::vector<double> values() const;
  void clear();
};

/// R_i = r_i + gamma * R_{i+1}, seeded with R_len = bootstrap.
std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap, double gamma);

/// A_i = R_i - V_i. Throws std::invalid_argument on length mismatch.
std::vector<double> advantages(std::span<const double> returns, std::span<const double> values);

/// Gradient of
///   L = sum_i [ -log pi(a_i|s_i) A_i + c_v (R_i - V(s_i))^2 - beta H(pi(.|s_i)) ]
/// with A_i held constant, added to `grads`. The optimizer descends L, so the
/// policy and entropy terms are ascended. Records whose cache predates the
/// current parameters are re-evaluated. Throws std::invalid_argument on an
/// empty buffer or a gradient buffer that does not match the network.
void accumulate_update(const PolicyValueNet& net, const TrajectoryBuffer& buffer, const RLConfig& cfg,
                       Gradients& grads);

/// d L_i / d logits for one record (see accumulate_update).
std::vector<double> policy_logit_gradient(std::span<const double> logits, int action, double advantage,
                                          double entropy_coef);

/// Samples from softmax(logits) by inverse CDF.
int sample_action(std::span<const double> logits, Rng& rng);

struct RepeatState {
  int last_action = -1;
  std::int64_t counter = 0;
};

struct ActionChoice {
  int action = 0;
  bool decision = false;  // freshly sampled (enters the trajectory buffer)
};

/// Samples only when counter is a multiple of action_repeat, otherwise repeats
/// the last action. Advances the counter.
ActionChoice select_action(std::span<const double> logits, Rng& rng, RepeatState& state, int action_repeat);
/// True when the next call to select_action will sample.
inline bool is_decision_tick(const RepeatState& state, int action_repeat) {
  return state.counter % action_repeat == 0;
}

/// One agent's side of n-step actor-critic: acts with action repeat, keeps the
/// trajectory since the last flush and folds flushed segments into a gradient
/// accumulator.
class NStepLearner {
 public:
  NStepLearner(const RLConfig& cfg, std::uint64_t seed);

  /// Starts a new episode; keeps the random stream.
  void begin_episode();

  /// Picks the action for the current tick. On a decision tick the network is
  /// evaluated; if n records are pending they are first flushed into `grads`
  /// with V(current state) as bootstrap, and the call returns flushed = true.
  struct Step {
    int action = 0;
    bool decision = false;
    bool flushed = false;
  };
  Step act(const PolicyValueNet& net, const PolicyInput& input, Gradients& grads);
  /// Like act() but with the action forced; nothing is recorded.
  int act_scripted(int action);
  /// True when act() would evaluate the network for this tick.
  bool needs_input() const { return is_decision_tick(repeat_, cfg_.action_repeat); }

  /// Reward of the tick just simulated.
  void observe(double reward);
  /// Terminal flush with bootstrap 0. Returns false when nothing was pending.
  bool finish(const PolicyValueNet& net, Gradients& grads);

  std::size_t pending() const { return buffer_.size(); }
  std::uint64_t decisions() const { return decisions_; }
  std::uint64_t flushes() const { return flushes_; }
  const RLConfig& config() const { return cfg_; }

 private:
  void flush(const PolicyValueNet& net, Gradients& grads);

  RLConfig cfg_;
  Rng rng_;
  RepeatState repeat_;
  TrajectoryBuffer buffer_;
  std::uint64_t decisions_ = 0;
  std::uint64_t flushes_ = 0;
};

}  // namespace roundabout
