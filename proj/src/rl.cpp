#include "roundabout/rl.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace roundabout {

void RLConfig::validate() const {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (action_repeat < 1) throw std::invalid_argument("action_repeat must be >= 1");
  if (!(entropy_coef >= 0.0)) throw std::invalid_argument("entropy_coef must be >= 0");
  if (!(value_loss_coef >= 0.0)) throw std::invalid_argument("value_loss_coef must be >= 0");
}

std::vector<double> TrajectoryBuffer::rewards() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.reward);
  return out;
}

std::vector<double> TrajectoryBuffer::values() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.value);
  return out;
}

void TrajectoryBuffer::clear() {
  records.clear();
  bootstrap_value = 0.0;
  terminal = false;
}

std::vector<double> n_step_returns(std::span<const double> rewards, double bootstrap, double gamma) {
  std::vector<double> out(rewards.size());
  double r = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    r = rewards[i] + gamma * r;
    out[i] = r;
  }
  return out;
}

std::vector<double> advantages(std::span<const double> returns, std::span<const double> values) {
  if (returns.size() != values.size())
    throw std::invalid_argument("advantages: " + std::to_string(returns.size()) + " returns vs " +
                                std::to_string(values.size()) + " values");
  std::vector<double> out(returns.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = returns[i] - values[i];
  return out;
}

std::vector<double> policy_logit_gradient(std::span<const double> logits, int action, double advantage,
                                          double entropy_coef) {
  const std::vector<double> logp = log_softmax(logits);
  double entropy = 0.0;
  for (double lp : logp) entropy -= std::exp(lp) * lp;
  std::vector<double> d(logits.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double p = std::exp(logp[k]);
    const double onehot = static_cast<int>(k) == action ? 1.0 : 0.0;
    d[k] = -advantage * (onehot - p) + entropy_coef * p * (logp[k] + entropy);
  }
  return d;
}

void accumulate_update(const PolicyValueNet& net, const TrajectoryBuffer& buffer, const RLConfig& cfg,
                       Gradients& grads) {
  if (buffer.empty()) throw std::invalid_argument("accumulate_update: empty trajectory buffer");
  if (!grads.congruent_with(net)) throw std::invalid_argument("accumulate_update: gradient shape mismatch");
  if (buffer.terminal && buffer.bootstrap_value != 0.0)
    throw std::invalid_argument("accumulate_update: terminal buffer with non-zero bootstrap");

  const std::vector<double> returns = n_step_returns(buffer.rewards(), buffer.bootstrap_value, cfg.gamma);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const TrajectoryRecord& rec = buffer.records[i];
    const bool fresh = rec.cache.generation == net.generation();
    const ForwardCache recomputed =
        fresh ? ForwardCache{} : forward(net, rec.cache.visual_in, rec.cache.numeric_in);
    const ForwardCache& c = fresh ? rec.cache : recomputed;
    const double adv = returns[i] - c.value;
    const std::vector<double> dlogits = policy_logit_gradient(c.logits, rec.action, adv, cfg.entropy_coef);
    const double dvalue = -2.0 * cfg.value_loss_coef * (returns[i] - c.value);
    backward(net, c, dlogits, dvalue, grads);
  }
}

int sample_action(std::span<const double> logits, Rng& rng) {
  const std::vector<double> p = softmax(logits);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

ActionChoice select_action(std::span<const double> logits, Rng& rng, RepeatState& state, int action_repeat) {
  ActionChoice choice;
  if (state.last_action < 0 || is_decision_tick(state, action_repeat)) {
    choice.action = sample_action(logits, rng);
    choice.decision = true;
    state.last_action = choice.action;
  } else {
    choice.action = state.last_action;
  }
  ++state.counter;
  return choice;
}

// ---------------------------------------------------------------------------

NStepLearner::NStepLearner(const RLConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) { cfg_.validate(); }

void NStepLearner::begin_episode() {
  repeat_ = {};
  buffer_.clear();
}

void NStepLearner::flush(const PolicyValueNet& net, Gradients& grads) {
  accumulate_update(net, buffer_, cfg_, grads);
  buffer_.clear();
  ++flushes_;
}

NStepLearner::Step NStepLearner::act(const PolicyValueNet& net, const PolicyInput& input, Gradients& grads) {
  Step step;
  if (!needs_input()) {
    step.action = select_action({}, rng_, repeat_, cfg_.action_repeat).action;
    return step;
  }
  ForwardCache cache = forward(net, input.visual, input.numeric);
  if (buffer_.size() >= static_cast<std::size_t>(cfg_.n_steps)) {
    buffer_.bootstrap_value = cache.value;
    buffer_.terminal = false;
    flush(net, grads);
    step.flushed = true;
  }
  const ActionChoice choice = select_action(cache.logits, rng_, repeat_, cfg_.action_repeat);
  TrajectoryRecord rec;
  rec.action = choice.action;
  rec.value = cache.value;
  rec.log_probs = log_softmax(cache.logits);
  rec.cache = std::move(cache);
  buffer_.records.push_back(std::move(rec));
  ++decisions_;
  step.action = choice.action;
  step.decision = true;
  return step;
}

int NStepLearner::act_scripted(int action) {
  ++repeat_.counter;
  repeat_.last_action = action;
  return action;
}

void NStepLearner::observe(double reward) {
  if (!buffer_.empty()) buffer_.records.back().reward += reward;
}

bool NStepLearner::finish(const PolicyValueNet& net, Gradients& grads) {
  if (buffer_.empty()) return false;
  buffer_.bootstrap_value = 0.0;
  buffer_.terminal = true;
  flush(net, grads);
  return true;
}

}  // namespace roundabout
