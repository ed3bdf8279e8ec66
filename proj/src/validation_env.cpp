#include "roundabout/validation_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace roundabout {

void ChainConfig::validate() const {
  if (n_states < 2) throw std::invalid_argument("chain needs at least 2 states");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("chain gamma must lie in [0, 1)");
  if (horizon < 1) throw std::invalid_argument("chain horizon must be >= 1");
  if (numeric_width < static_cast<std::size_t>(n_states)) throw std::invalid_argument("numeric_width < n_states");
}

ChainMDP::ChainMDP(const ChainConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  reset();
}

void ChainMDP::reset() {
  rng_.seed(cfg_.seed);
  tick_ = 0;
  agent_ = 0;
  start_episode();
}

void ChainMDP::start_episode() {
  ++agent_;
  episode_steps_ = 0;
  const auto n = static_cast<std::size_t>(cfg_.n_states - 1);
  state_ = cfg_.random_start ? static_cast<int>(std::min(n - 1, static_cast<std::size_t>(uniform01(rng_) * n))) : 0;
}

void ChainMDP::set_state(int s) {
  if (s < 0 || s >= cfg_.n_states - 1) throw std::invalid_argument("set_state: not a non-goal state");
  state_ = s;
}

int ChainMDP::next_state(const ChainConfig& cfg, int s, ChainAction a) {
  switch (a) {
    case ChainAction::Left: return std::max(0, s - 1);
    case ChainAction::Right: return std::min(cfg.n_states - 1, s + 1);
    case ChainAction::Stay: return s;
  }
  throw std::invalid_argument("bad chain action");
}

double ChainMDP::reward(const ChainConfig& cfg, int next) {
  return cfg.step_reward + (next == cfg.n_states - 1 ? cfg.goal_reward : 0.0);
}

PolicyInput ChainMDP::encode(const ChainConfig& cfg, int s) {
  PolicyInput in;
  in.numeric.assign(cfg.numeric_width, 0.0);
  in.numeric[static_cast<std::size_t>(s)] = 1.0;
  return in;
}

void ChainMDP::policy_input(AgentId id, PolicyInput& out) const {
  if (id != agent_) throw std::invalid_argument("unknown chain agent " + std::to_string(id));
  out.visual.clear();
  out.numeric.assign(cfg_.numeric_width, 0.0);
  out.numeric[static_cast<std::size_t>(state_)] = 1.0;
}

StepResult ChainMDP::step(const JointAction& actions) {
  if (actions.size() != 1 || !actions.contains(agent_))
    throw std::invalid_argument("chain step needs exactly one action for agent " + std::to_string(agent_));
  const int a = actions.at(agent_);
  if (a < 0 || a > 2) throw std::invalid_argument("chain action out of range");
  state_ = next_state(cfg_, state_, static_cast<ChainAction>(a));
  ++episode_steps_;
  ++tick_;
  AgentStep st{agent_, reward(cfg_, state_), AgentStatus::Active, 0.0};
  if (state_ == cfg_.n_states - 1)
    st.status = AgentStatus::ReachedGoal;
  else if (episode_steps_ >= cfg_.horizon)
    st.status = AgentStatus::TimedOut;
  StepResult out;
  out.agents.push_back(st);
  if (st.status != AgentStatus::Active) {
    start_episode();
    out.spawned.push_back(agent_);
  }
  return out;
}

ValueIterationResult value_iteration(const ChainConfig& cfg, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  cfg.validate();
  const int n = cfg.n_states;
  const int goal = n - 1;
  ValueIterationResult r;
  r.value.assign(static_cast<std::size_t>(n), 0.0);
  r.policy.assign(static_cast<std::size_t>(n), -1);
  auto q = [&](const std::vector<double>& v, int s, int a) {
    const int s2 = ChainMDP::next_state(cfg, s, static_cast<ChainAction>(a));
    return ChainMDP::reward(cfg, s2) + (s2 == goal ? 0.0 : cfg.gamma * v[static_cast<std::size_t>(s2)]);
  };
  for (;;) {
    std::vector<double> next = r.value;
    double delta = 0.0;
    for (int s = 0; s < goal; ++s) {
      double best = -INFINITY;
      for (int a = 0; a < 3; ++a) best = std::max(best, q(r.value, s, a));
      next[static_cast<std::size_t>(s)] = best;
      delta = std::max(delta, std::abs(best - r.value[static_cast<std::size_t>(s)]));
    }
    r.value = std::move(next);
    ++r.iterations;
    r.residual = delta;
    if (delta < tol) break;
  }
  for (int s = 0; s < goal; ++s) {
    int best_a = 0;
    for (int a = 1; a < 3; ++a)
      if (q(r.value, s, a) > q(r.value, s, best_a)) best_a = a;
    r.policy[static_cast<std::size_t>(s)] = best_a;
  }
  return r;
}

NetSpec ValidationConfig::net_spec() const {
  NetSpec spec;
  spec.visual = false;
  spec.numeric_in = chain.numeric_width;
  spec.numeric_hidden = hidden;
  spec.merge = merge;
  spec.actions = 3;
  return spec;
}

ValidationRow evaluate_chain_policy(const PolicyValueNet& net, const ChainConfig& chain,
                                    const ValueIterationResult& oracle) {
  ValidationRow row;
  int agree = 0;
  const int goal = chain.n_states - 1;
  for (int s = 0; s < goal; ++s) {
    const PolicyInput in = ChainMDP::encode(chain, s);
    const ForwardCache c = forward(net, in.visual, in.numeric);
    const auto greedy = static_cast<int>(std::max_element(c.logits.begin(), c.logits.end()) - c.logits.begin());
    if (greedy == oracle.policy[static_cast<std::size_t>(s)]) ++agree;
    row.value_error = std::max(row.value_error, std::abs(c.value - oracle.value[static_cast<std::size_t>(s)]));
  }
  row.agreement = static_cast<double>(agree) / goal;
  return row;
}

ValidationReport run_validation(const ValidationConfig& cfg) {
  cfg.rl.validate();
  if (cfg.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  const ValueIterationResult oracle = value_iteration(cfg.chain, 1e-12);

  ChainConfig chain = cfg.chain;
  chain.seed = derive_seed(cfg.seed, 1);
  ChainMDP env(chain);
  GlobalStore store(init_params(cfg.net_spec(), derive_seed(cfg.seed, 0)), cfg.rmsprop);
  PolicyValueNet local = store.snapshot();
  Gradients grads(local);
  NStepLearner learner(cfg.rl, derive_seed(cfg.seed, 2));

  ValidationReport report{{}, local, 0};
  ValidationRow first = evaluate_chain_policy(local, cfg.chain, oracle);
  report.rows.push_back(first);

  auto push = [&] {
    store.apply(grads);
    grads.zero();
    store.snapshot_into(local);
  };

  PolicyInput input;
  learner.begin_episode();
  while (env.tick() < cfg.max_env_steps) {
    const AgentId id = env.active_agents().front();
    env.policy_input(id, input);
    const auto st = learner.act(local, input, grads);
    if (st.flushed && cfg.update_every_flush) push();
    const StepResult r = env.step({{id, st.action}});
    const AgentStep& a = r.agents.front();
    learner.observe(a.reward);
    if (a.status != AgentStatus::Active) {
      learner.finish(local, grads);
      push();
      ++report.episodes;
      learner.begin_episode();
    }
    if (env.tick() % cfg.eval_every == 0) {
      ValidationRow row = evaluate_chain_policy(local, cfg.chain, oracle);
      row.step = env.tick();
      report.rows.push_back(row);
    }
  }
  report.net = store.snapshot();
  return report;
}

void write_validation_csv(const std::filesystem::path& file, const std::vector<ValidationRow>& rows) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "step,agreement,value_error\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(r.step), r.agreement, r.value_error);
    out << buf;
  }
}

}  // namespace roundabout
