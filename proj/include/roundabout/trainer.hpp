#pragma once

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "roundabout/channel.hpp"
#include "roundabout/environment.hpp"
#include "roundabout/global_store.hpp"
#include "roundabout/kernels.hpp"
#include "roundabout/rl.hpp"

namespace roundabout {

enum class Executor { Sequential, Threaded };

/// When a worker sends its gradients to the global store.
enum class UpdateSchedule {
  EpisodeEnd,  // once per finished episode (multi-agent scheme)
  EveryFlush,  // after every n-step segment, refreshing the local copy (single-agent scheme)
};

struct TrainerConfig {
  int n_env = 1;
  int n_ag = 1;
  RmsPropConfig rmsprop;
  std::int64_t total_episodes = 1000;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 0;  // episodes; 0 disables periodic checkpoints
  Executor executor = Executor::Threaded;
  UpdateSchedule schedule = UpdateSchedule::EpisodeEnd;
  /// Every agent plays this action and learns nothing (empty updates are still pushed).
  std::optional<int> scripted_action;
  std::int64_t max_env_steps = 0;  // per instance; 0 = unlimited

  void validate() const;
};

struct EpisodeStats {
  std::int64_t episode = 0;
  int instance = 0;
  AgentId agent = 0;
  AgentStatus outcome = AgentStatus::Active;
  double cum_reward = 0.0;
  double mean_speed = 0.0;
  std::int64_t steps = 0;
};

/// CSV header "episode,agent,outcome,cum_reward,mean_speed,steps".
void write_stats_header(std::ostream& out);
void write_stats_row(std::ostream& out, const EpisodeStats& s);
/// Throws std::runtime_error on malformed input.
std::vector<EpisodeStats> read_stats_csv(const std::filesystem::path& file);

struct TrainingHooks {
  /// Called on a dedicated consumer thread, in push order.
  std::function<void(const EpisodeStats&)> on_episode;
  /// Called by the worker that finished the episode, with a fresh snapshot.
  std::function<void(const PolicyValueNet&, std::int64_t episodes)> on_checkpoint;
  const std::atomic<bool>* stop = nullptr;
};

struct TrainingSummary {
  std::int64_t episodes = 0;  // finished agent-episodes that were counted
  std::int64_t pushes = 0;    // gradient applications to the global store
  std::int64_t ticks = 0;     // environment steps summed over instances
  bool interrupted = false;
};

namespace trainer_detail {

struct Shared {
  GlobalStore& store;
  const RLConfig& rl;
  const TrainerConfig& cfg;
  const TrainingHooks& hooks;
  Channel<EpisodeStats> stats;
  std::atomic<std::int64_t> claimed{0};
  std::atomic<std::int64_t> pushes{0};
  std::atomic<std::int64_t> ticks{0};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr error;

  Shared(GlobalStore& s, const RLConfig& r, const TrainerConfig& c, const TrainingHooks& h)
      : store(s), rl(r), cfg(c), hooks(h) {}

  void fail(std::exception_ptr e) {
    std::lock_guard lock(error_mutex);
    if (!error) error = e;
    abort = true;
  }
  bool stop_requested() const { return hooks.stop != nullptr && hooks.stop->load(); }
};

/// One agent slot of an instance, driven by one worker.
struct Slot {
  Slot(const Shared& sh, std::uint64_t seed)
      : learner(sh.rl, seed), local(sh.store.snapshot()), grads(local) {}

  std::optional<AgentId> agent;
  bool fresh = false;
  int action = 0;
  std::optional<AgentStep> result;

  NStepLearner learner;
  PolicyValueNet local;
  Gradients grads;
  PolicyInput input;
  double cum_reward = 0.0;
  double speed_sum = 0.0;
  std::int64_t steps = 0;
};

template <typename E>
struct Instance {
  Instance(E e, int idx) : env(std::move(e)), index(idx) {}
  E env;
  int index;
  std::vector<std::unique_ptr<Slot>> slots;
  bool done = false;
};

inline void push_update(Shared& sh, Slot& slot) {
  sh.store.apply(slot.grads);
  sh.pushes.fetch_add(1);
  slot.grads.zero();
}

inline void end_episode(Shared& sh, Slot& slot, int instance, const AgentStep& last) {
  const bool scripted = sh.cfg.scripted_action.has_value();
  if (!scripted) slot.learner.finish(slot.local, slot.grads);
  const std::int64_t index = sh.claimed.fetch_add(1);
  if (index >= sh.cfg.total_episodes) return;
  push_update(sh, slot);
  EpisodeStats st;
  st.episode = index;
  st.instance = instance;
  st.agent = last.id;
  st.outcome = last.status;
  st.cum_reward = slot.cum_reward;
  st.mean_speed = slot.steps > 0 ? slot.speed_sum / static_cast<double>(slot.steps) : 0.0;
  st.steps = slot.steps;
  sh.stats.push(st);
  const std::int64_t finished = index + 1;
  if (sh.cfg.checkpoint_every > 0 && finished % sh.cfg.checkpoint_every == 0 && sh.hooks.on_checkpoint)
    sh.hooks.on_checkpoint(sh.store.snapshot(), finished);
}

/// Per-tick work of one slot: settle the last step, start a new episode if a
/// vehicle was just assigned, then choose the next action.
template <typename E>
void slot_phase(Shared& sh, const E& env, int instance, Slot& slot) {
  if (slot.result) {
    const AgentStep r = *slot.result;
    slot.result.reset();
    slot.cum_reward += r.reward;
    slot.speed_sum += r.speed;
    ++slot.steps;
    slot.learner.observe(r.reward);
    if (r.status != AgentStatus::Active) end_episode(sh, slot, instance, r);
  }
  if (!slot.agent) return;
  if (slot.fresh) {
    slot.fresh = false;
    sh.store.snapshot_into(slot.local);
    slot.learner.begin_episode();
    slot.grads.zero();
    slot.cum_reward = 0.0;
    slot.speed_sum = 0.0;
    slot.steps = 0;
  }
  if (sh.cfg.scripted_action) {
    slot.action = slot.learner.act_scripted(*sh.cfg.scripted_action);
    return;
  }
  if (slot.learner.needs_input()) env.policy_input(*slot.agent, slot.input);
  const auto step = slot.learner.act(slot.local, slot.input, slot.grads);
  slot.action = step.action;
  if (step.flushed && sh.cfg.schedule == UpdateSchedule::EveryFlush) {
    push_update(sh, slot);
    sh.store.snapshot_into(slot.local);
  }
}

template <typename E>
void assign(Instance<E>& inst, AgentId id) {
  for (auto& s : inst.slots) {
    if (!s->agent) {
      s->agent = id;
      s->fresh = true;
      return;
    }
  }
  throw std::logic_error("environment has more active agents than worker slots");
}

/// Runs between ticks with every worker parked: decides whether to stop, then
/// advances the environment and routes results and newcomers to slots.
template <typename E>
void advance(Shared& sh, Instance<E>& inst) {
  if (sh.abort || sh.stop_requested() || sh.claimed.load() >= sh.cfg.total_episodes ||
      (sh.cfg.max_env_steps > 0 && inst.env.tick() >= sh.cfg.max_env_steps)) {
    inst.done = true;
    return;
  }
  JointAction joint;
  for (const auto& s : inst.slots)
    if (s->agent) joint[*s->agent] = s->action;
  const auto result = inst.env.step(joint);
  sh.ticks.fetch_add(1);
  for (const AgentStep& a : result.agents) {
    auto it = std::find_if(inst.slots.begin(), inst.slots.end(), [&](const auto& s) { return s->agent == a.id; });
    if (it == inst.slots.end()) throw std::logic_error("step reported an agent without a slot");
    (*it)->result = a;
    if (a.status != AgentStatus::Active) (*it)->agent.reset();
  }
  for (AgentId id : result.spawned) assign(inst, id);
}

}  // namespace trainer_detail

/// Multi-agent n-step actor-critic. `make_env(instance, seed)` builds one
/// environment per instance; every instance hosts n_ag agent slots stepping in
/// lock-step. Each agent copies the master parameters when its episode starts
/// and sends its accumulated gradients when the episode ends. Stops once
/// total_episodes agent-episodes have been counted (later finishers are
/// discarded), on a stop request, or at max_env_steps. A worker exception stops
/// every instance and is rethrown after the statistics have been flushed.
template <Environment E, typename Factory>
TrainingSummary run_training(Factory&& make_env, GlobalStore& store, const RLConfig& rl, const TrainerConfig& cfg,
                             const TrainingHooks& hooks = {}) {
  using namespace trainer_detail;
  rl.validate();
  cfg.validate();
  Shared sh(store, rl, cfg, hooks);

  std::thread consumer([&] {
    while (auto st = sh.stats.pop()) {
      if (!hooks.on_episode) continue;
      try {
        hooks.on_episode(*st);
      } catch (...) {
        sh.fail(std::current_exception());
      }
    }
  });

  std::vector<std::unique_ptr<Instance<E>>> instances;
  try {
    for (int k = 0; k < cfg.n_env; ++k) {
      auto inst = std::make_unique<Instance<E>>(make_env(k, derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(k))), k);
      for (int a = 0; a < cfg.n_ag; ++a)
        inst->slots.push_back(std::make_unique<Slot>(
            sh, derive_seed(cfg.seed, 2 + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(a))));
      inst->env.reset();
      for (AgentId id : inst->env.active_agents()) assign(*inst, id);
      instances.push_back(std::move(inst));
    }
  } catch (...) {
    sh.fail(std::current_exception());
  }

  if (!sh.abort) {
    if (cfg.executor == Executor::Sequential) {
      bool running = true;
      while (running) {
        running = false;
        for (auto& inst : instances) {
          if (inst->done) continue;
          try {
            for (auto& s : inst->slots) slot_phase(sh, inst->env, inst->index, *s);
            advance(sh, *inst);
          } catch (...) {
            sh.fail(std::current_exception());
            inst->done = true;
          }
          running = running || !inst->done;
        }
      }
    } else {
      std::vector<std::thread> threads;
      std::vector<std::unique_ptr<std::barrier<std::function<void()>>>> barriers;
      for (auto& inst_ptr : instances) {
        Instance<E>* inst = inst_ptr.get();
        std::function<void()> on_complete = [&sh, inst]() noexcept {
          try {
            advance(sh, *inst);
          } catch (...) {
            sh.fail(std::current_exception());
            inst->done = true;
          }
        };
        barriers.push_back(std::make_unique<std::barrier<std::function<void()>>>(cfg.n_ag, std::move(on_complete)));
        auto* bar = barriers.back().get();
        for (int a = 0; a < cfg.n_ag; ++a) {
          threads.emplace_back([&sh, inst, bar, a] {
            kernels::set_thread_budget(1);
            Slot& slot = *inst->slots[static_cast<std::size_t>(a)];
            for (;;) {
              try {
                slot_phase(sh, std::as_const(inst->env), inst->index, slot);
              } catch (...) {
                sh.fail(std::current_exception());
              }
              bar->arrive_and_wait();
              if (inst->done) break;
            }
          });
        }
      }
      for (auto& t : threads) t.join();
    }
  }

  sh.stats.close();
  consumer.join();
  if (sh.error) std::rethrow_exception(sh.error);

  TrainingSummary summary;
  summary.episodes = std::min(sh.claimed.load(), cfg.total_episodes);
  summary.pushes = sh.pushes.load();
  summary.ticks = sh.ticks.load();
  summary.interrupted = sh.stop_requested() && summary.episodes < cfg.total_episodes;
  return summary;
}

}  // namespace roundabout
