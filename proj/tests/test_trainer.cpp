#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "roundabout/traffic_env.hpp"
#include "roundabout/trainer.hpp"
#include "roundabout/validation_env.hpp"
#include "support.hpp"

using namespace roundabout;

static_assert(Environment<TrafficEnv>);
static_assert(Environment<ChainMDP>);

namespace {

NetSpec small_numeric() {
  NetSpec s;
  s.visual = false;
  s.numeric_in = 8;
  s.numeric_hidden = 6;
  s.merge = 6;
  return s;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

auto chain_factory(ChainConfig chain) {
  return [chain](int, std::uint64_t seed) mutable {
    chain.seed = seed;
    return ChainMDP(chain);
  };
}

auto traffic_factory(int max_vehicles, bool render) {
  return [=](int, std::uint64_t seed) {
    EnvConfig cfg;
    cfg.seed = seed;
    cfg.max_vehicles = max_vehicles;
    cfg.render_observations = render;
    return TrafficEnv(cfg, RewardConfig{}, GeometryConfig{});
  };
}

}  // namespace

TEST(RmsProp, HandComputedFirstStep) {
  std::vector<double> p{0.0, 1.0}, m{0.0, 0.0};
  const std::vector<double> g{0.1, 0.0};
  apply_rmsprop(p, m, g, RmsPropConfig{});
  EXPECT_NEAR(m[0], 1e-4, 1e-18);
  const double first = -7e-4 * 0.1 / (0.01 + 1e-5);
  EXPECT_NEAR(p[0], first, 1e-15);
  EXPECT_NEAR(p[0], -6.993e-3, 1e-6);
  EXPECT_EQ(p[1], 1.0);
  EXPECT_EQ(m[1], 0.0);
  // second step with the same gradient
  apply_rmsprop(p, m, g, RmsPropConfig{});
  const double m2 = 0.99 * 1e-4 + 0.01 * 0.01;
  EXPECT_NEAR(m[0], m2, 1e-18);
  EXPECT_NEAR(p[0], first - 7e-5 / (std::sqrt(m2) + 1e-5), 1e-15);
}

TEST(RmsProp, ConfigValidation) {
  EXPECT_THROW((RmsPropConfig{-1, 0.99, 1e-5}.validate()), std::invalid_argument);
  EXPECT_THROW((RmsPropConfig{1e-3, 1.5, 1e-5}.validate()), std::invalid_argument);
  EXPECT_THROW((RmsPropConfig{1e-3, 0.99, 0}.validate()), std::invalid_argument);
}

TEST(GlobalStore, ConcurrentPairMatchesASerialOrder) {
  const NetSpec spec = small_numeric();
  prop::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const PolicyValueNet init = init_params(spec, 10 + trial);
    Gradients g1(init), g2(init);
    for (double& v : g1.values()) v = g.uniform(-1, 1);
    for (double& v : g2.values()) v = g.uniform(-1, 1);
    auto serial = [&](const Gradients& a, const Gradients& b) {
      GlobalStore s(init, RmsPropConfig{});
      s.apply(a);
      s.apply(b);
      return s.snapshot();
    };
    const PolicyValueNet ab = serial(g1, g2), ba = serial(g2, g1);
    GlobalStore store(init, RmsPropConfig{});
    std::thread t1([&] { store.apply(g1); }), t2([&] { store.apply(g2); });
    t1.join();
    t2.join();
    const PolicyValueNet got = store.snapshot();
    EXPECT_TRUE(same_bits(got.params(), ab.params()) || same_bits(got.params(), ba.params()));
    EXPECT_EQ(store.update_count(), 2u);
  }
}

TEST(GlobalStore, SnapshotsNeverSeeHalfAnUpdate) {
  const NetSpec spec = small_numeric();
  PolicyValueNet zero(spec);
  GlobalStore store(zero, RmsPropConfig{});
  Gradients ones(zero);
  for (double& v : ones.values()) v = 1.0;
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 0; i < 2000; ++i) store.apply(ones);
    done = true;
  });
  int torn = 0, reads = 0;
  PolicyValueNet local(spec);
  while (!done) {
    store.snapshot_into(local);
    const auto p = local.params();
    for (double v : p) torn += v != p[0];
    ++reads;
  }
  writer.join();
  EXPECT_EQ(torn, 0);
  EXPECT_GT(reads, 0);
  EXPECT_EQ(store.update_count(), 2000u);
}

TEST(GlobalStore, RejectsMismatchedGradients) {
  GlobalStore store(PolicyValueNet(small_numeric()), RmsPropConfig{});
  NetSpec other = small_numeric();
  other.merge = 9;
  EXPECT_THROW(store.apply(Gradients(PolicyValueNet(other))), std::invalid_argument);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  ChainConfig chain;
  const PolicyValueNet init = init_params(small_numeric(), 3);
  GlobalStore store(init, RmsPropConfig{0.0, 0.99, 1e-5});
  TrainerConfig cfg;
  cfg.total_episodes = 40;
  cfg.executor = Executor::Sequential;
  const auto summary = run_training<ChainMDP>(chain_factory(chain), store, RLConfig{5, 0.99, 1, 0.01, 0.5}, cfg);
  EXPECT_EQ(summary.episodes, 40);
  EXPECT_EQ(summary.pushes, 40);
  EXPECT_TRUE(same_bits(store.snapshot().params(), init.params()));
}

TEST(Trainer, SequentialRunsAreReproducible) {
  auto run = [] {
    GlobalStore store(init_params(small_numeric(), 3), RmsPropConfig{});
    TrainerConfig cfg;
    cfg.total_episodes = 60;
    cfg.executor = Executor::Sequential;
    cfg.seed = 11;
    std::vector<EpisodeStats> stats;
    TrainingHooks hooks;
    hooks.on_episode = [&](const EpisodeStats& s) { stats.push_back(s); };
    run_training<ChainMDP>(chain_factory(ChainConfig{}), store, RLConfig{5, 0.99, 1, 0.01, 0.5}, cfg, hooks);
    return std::pair{store.snapshot(), stats};
  };
  const auto [a, sa] = run();
  const auto [b, sb] = run();
  EXPECT_TRUE(same_bits(a.params(), b.params()));
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].episode, static_cast<std::int64_t>(i));
    EXPECT_EQ(sa[i].cum_reward, sb[i].cum_reward);
    EXPECT_EQ(sa[i].steps, sb[i].steps);
  }
}

TEST(Trainer, SingleAgentDegeneratesToValidationLearner) {
  for (std::uint64_t seed : {1u, 2u}) {
    ValidationConfig vc;
    vc.seed = seed;
    vc.max_env_steps = 3000;
    vc.update_every_flush = false;
    const ValidationReport report = run_validation(vc);

    GlobalStore store(init_params(vc.net_spec(), derive_seed(seed, 0)), vc.rmsprop);
    TrainerConfig cfg;
    cfg.seed = seed;
    cfg.executor = Executor::Sequential;
    cfg.total_episodes = 1'000'000;
    cfg.max_env_steps = vc.max_env_steps;
    cfg.rmsprop = vc.rmsprop;
    const auto summary = run_training<ChainMDP>(chain_factory(vc.chain), store, vc.rl, cfg);
    EXPECT_EQ(summary.episodes, report.episodes);
    EXPECT_EQ(summary.ticks, vc.max_env_steps);
    EXPECT_TRUE(same_bits(store.snapshot().params(), report.net.params())) << "seed " << seed;
  }
}

TEST(Trainer, EveryFlushMatchesValidationLearner) {
  ValidationConfig vc;
  vc.seed = 5;
  vc.max_env_steps = 2000;
  const ValidationReport report = run_validation(vc);
  GlobalStore store(init_params(vc.net_spec(), derive_seed(vc.seed, 0)), vc.rmsprop);
  TrainerConfig cfg;
  cfg.seed = vc.seed;
  cfg.executor = Executor::Sequential;
  cfg.schedule = UpdateSchedule::EveryFlush;
  cfg.total_episodes = 1'000'000;
  cfg.max_env_steps = vc.max_env_steps;
  run_training<ChainMDP>(chain_factory(vc.chain), store, vc.rl, cfg);
  EXPECT_TRUE(same_bits(store.snapshot().params(), report.net.params()));
}

TEST(Trainer, ThreadedBarrierStaysLiveForEachAgentCount) {
  for (int n_ag : {1, 2, 6}) {
    GlobalStore store(PolicyValueNet(NetSpec::traffic()), RmsPropConfig{});
    TrainerConfig cfg;
    cfg.n_env = 2;
    cfg.n_ag = n_ag;
    cfg.total_episodes = 12;
    cfg.scripted_action = static_cast<int>(Action::Accelerate);
    std::atomic<int> seen{0};
    TrainingHooks hooks;
    hooks.on_episode = [&](const EpisodeStats& s) {
      EXPECT_LT(s.episode, 12);
      EXPECT_NE(s.outcome, AgentStatus::Active);
      ++seen;
    };
    const auto summary = run_training<TrafficEnv>(traffic_factory(n_ag, false), store, RLConfig{}, cfg, hooks);
    EXPECT_EQ(summary.episodes, 12) << n_ag;
    EXPECT_EQ(summary.pushes, 12) << n_ag;
    EXPECT_EQ(seen.load(), 12) << n_ag;
    EXPECT_EQ(store.update_count(), 12u);
  }
}

TEST(Trainer, ThreadedLearningOnTrafficRuns) {
  NetSpec spec = NetSpec::traffic();
  GlobalStore store(init_params(spec, 1), RmsPropConfig{});
  const PolicyValueNet before = store.snapshot();
  TrainerConfig cfg;
  cfg.n_ag = 2;
  cfg.total_episodes = 2;
  const auto summary = run_training<TrafficEnv>(traffic_factory(2, true), store, RLConfig{}, cfg);
  EXPECT_EQ(summary.episodes, 2);
  EXPECT_EQ(summary.pushes, 2);
  EXPECT_FALSE(same_bits(store.snapshot().params(), before.params()));
}

TEST(Trainer, StopFlagInterrupts) {
  GlobalStore store(PolicyValueNet(NetSpec::traffic()), RmsPropConfig{});
  TrainerConfig cfg;
  cfg.n_ag = 3;
  cfg.total_episodes = 1'000'000;
  cfg.scripted_action = static_cast<int>(Action::Accelerate);
  std::atomic<bool> stop{false};
  TrainingHooks hooks;
  hooks.stop = &stop;
  hooks.on_episode = [&](const EpisodeStats& s) {
    if (s.episode >= 5) stop = true;
  };
  const auto summary = run_training<TrafficEnv>(traffic_factory(3, false), store, RLConfig{}, cfg, hooks);
  EXPECT_TRUE(summary.interrupted);
  EXPECT_GE(summary.episodes, 6);
}

TEST(Trainer, WorkerErrorsPropagate) {
  GlobalStore store(PolicyValueNet(NetSpec::traffic()), RmsPropConfig{});
  TrainerConfig cfg;
  cfg.n_ag = 1;
  cfg.total_episodes = 10;
  cfg.scripted_action = 7;  // not a valid action
  EXPECT_THROW(run_training<TrafficEnv>(traffic_factory(1, false), store, RLConfig{}, cfg), std::invalid_argument);
  cfg.scripted_action.reset();
  cfg.n_ag = 1;
  // more vehicles than slots
  EXPECT_THROW(run_training<TrafficEnv>(traffic_factory(3, false), store, RLConfig{}, cfg), std::logic_error);
}

TEST(Trainer, CheckpointHookCadence) {
  GlobalStore store(PolicyValueNet(NetSpec::traffic()), RmsPropConfig{});
  TrainerConfig cfg;
  cfg.n_ag = 2;
  cfg.total_episodes = 10;
  cfg.checkpoint_every = 4;
  cfg.scripted_action = 0;
  std::vector<std::int64_t> at;
  std::mutex mu;
  TrainingHooks hooks;
  hooks.on_checkpoint = [&](const PolicyValueNet&, std::int64_t n) {
    std::lock_guard lock(mu);
    at.push_back(n);
  };
  run_training<TrafficEnv>(traffic_factory(2, false), store, RLConfig{}, cfg, hooks);
  std::sort(at.begin(), at.end());
  EXPECT_EQ(at, (std::vector<std::int64_t>{4, 8}));
}

TEST(TrainerConfig, Validation) {
  TrainerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_env = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.n_ag = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.total_episodes = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(StatsCsv, RoundTrip) {
  const auto file = std::filesystem::temp_directory_path() / "roundabout_stats.csv";
  std::vector<EpisodeStats> rows{{0, 0, 4, AgentStatus::ReachedGoal, 0.1 + 0.2, 6.25, 120},
                                 {1, 0, 7, AgentStatus::Crashed, -1.0 / 3, 0.0, 3},
                                 {2, 1, 9, AgentStatus::TimedOut, -2.5e-10, 1e-300, 400}};
  {
    std::ofstream out(file);
    write_stats_header(out);
    for (const auto& r : rows) write_stats_row(out, r);
  }
  std::ifstream in(file);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "episode,agent,outcome,cum_reward,mean_speed,steps");
  const auto back = read_stats_csv(file);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].episode, rows[i].episode);
    EXPECT_EQ(back[i].agent, rows[i].agent);
    EXPECT_EQ(back[i].outcome, rows[i].outcome);
    EXPECT_EQ(back[i].cum_reward, rows[i].cum_reward);
    EXPECT_EQ(back[i].mean_speed, rows[i].mean_speed);
    EXPECT_EQ(back[i].steps, rows[i].steps);
  }
  std::ofstream(file) << "episode,agent,outcome,cum_reward,mean_speed,steps\n1,2,flying,0,0,1\n";
  EXPECT_THROW(read_stats_csv(file), std::runtime_error);
  std::filesystem::remove(file);
}
