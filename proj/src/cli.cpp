#include "roundabout/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "roundabout/config.hpp"
#include "roundabout/eval.hpp"
#include "roundabout/trainer.hpp"
#include "roundabout/validation_env.hpp"

namespace roundabout {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string output;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : parse_config(c.config);
  if (!c.output.empty()) cfg.output_dir = c.output;
  return cfg;
}

void prepare_output(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  std::ofstream(cfg.output_dir / "config.json") << config_to_json(cfg);
}

std::optional<Action> parse_action(const std::string& text) {
  for (Action a : {Action::Accelerate, Action::Brake, Action::Maintain})
    if (to_string(a) == text) return a;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

int cmd_train(RunConfig cfg, std::optional<std::int64_t> episodes) {
  if (episodes) cfg.trainer.total_episodes = *episodes;
  if (cfg.env.max_vehicles != cfg.trainer.n_ag)
    spdlog::info("training: max_vehicles set to n_ag = {} (every vehicle is an agent)", cfg.trainer.n_ag);
  cfg.env.max_vehicles = cfg.trainer.n_ag;
  cfg.trainer.seed = cfg.env.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  prepare_output(cfg);

  const fs::path ckpt_dir = cfg.output_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  std::ofstream stats(cfg.output_dir / "stats.csv");
  write_stats_header(stats);

  GlobalStore store(init_params(NetSpec::traffic(), cfg.env.seed), cfg.trainer.rmsprop);
  TrainingHooks hooks;
  std::int64_t goals = 0, seen = 0;
  hooks.on_episode = [&](const EpisodeStats& s) {
    write_stats_row(stats, s);
    ++seen;
    if (s.outcome == AgentStatus::ReachedGoal) ++goals;
    if (seen % 100 == 0) {
      stats.flush();
      spdlog::info("episodes {}: goal ratio so far {:.3f}", seen, static_cast<double>(goals) / seen);
    }
  };
  hooks.on_checkpoint = [&](const PolicyValueNet& net, std::int64_t n) {
    char name[64];
    std::snprintf(name, sizeof name, "episode_%08lld.bin", static_cast<long long>(n));
    save_checkpoint(net, ckpt_dir / name);
  };
  g_stop = false;
  hooks.stop = &g_stop;
  auto previous = std::signal(SIGINT, on_signal);
  auto previous_term = std::signal(SIGTERM, on_signal);

  const EnvConfig env_cfg = cfg.env;
  const RewardConfig rewards = cfg.reward;
  const GeometryConfig geometry = cfg.geometry;
  auto factory = [&](int, std::uint64_t seed) {
    EnvConfig e = env_cfg;
    e.seed = seed;
    return TrafficEnv(e, rewards, geometry);
  };
  spdlog::info("training {} episodes on {} instance(s) x {} agent(s)", cfg.trainer.total_episodes, cfg.trainer.n_env,
               cfg.trainer.n_ag);
  TrainingSummary summary;
  try {
    summary = run_training<TrafficEnv>(factory, store, cfg.rl, cfg.trainer, hooks);
  } catch (...) {
    std::signal(SIGINT, previous);
    std::signal(SIGTERM, previous_term);
    stats.flush();
    save_checkpoint(store.snapshot(), cfg.output_dir / "checkpoint.bin");
    throw;
  }
  std::signal(SIGINT, previous);
  std::signal(SIGTERM, previous_term);
  stats.flush();
  save_checkpoint(store.snapshot(), cfg.output_dir / "checkpoint.bin");
  if (summary.interrupted) spdlog::warn("interrupted after {} episodes; checkpoint written", summary.episodes);
  spdlog::info("done: {} episodes, {} updates, {} ticks", summary.episodes, summary.pushes, summary.ticks);
  std::cout << "episodes " << summary.episodes << "\ncheckpoint " << (cfg.output_dir / "checkpoint.bin").string()
            << "\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg) {
  prepare_output(cfg);
  const ValidationReport report = run_validation(cfg.validation());
  write_validation_csv(cfg.output_dir / "validation.csv", report.rows);
  const ValidationRow& last = report.rows.back();
  constexpr double kAgreement = 0.95, kValueError = 0.15;
  const bool ok = last.agreement >= kAgreement && last.value_error < kValueError;
  std::printf("steps %lld episodes %lld agreement %.4f value_error %.4f -> %s\n", static_cast<long long>(last.step),
              static_cast<long long>(report.episodes), last.agreement, last.value_error, ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitRuntime;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint) {
  if (!checkpoint.empty()) cfg.sweep.checkpoint = checkpoint;
  if (cfg.sweep.checkpoint.empty()) throw UsageError("eval-sweep needs a checkpoint (--checkpoint or config key)");
  prepare_output(cfg);
  const auto rows = run_sweep(cfg.sweep, cfg.env, cfg.reward, cfg.geometry);
  summarize(rows, cfg.sweep.parameter, cfg.output_dir / "sweep");
  std::cout << sweep_csv(rows);
  return kExitOk;
}

int cmd_replay(RunConfig cfg, std::int64_t steps, const std::string& scripted, const std::string& checkpoint) {
  if (steps < 0) throw UsageError("--steps must be >= 0");
  if (scripted.empty() == checkpoint.empty()) throw UsageError("replay needs exactly one of --scripted or --checkpoint");
  std::optional<Action> action;
  if (!scripted.empty()) {
    action = parse_action(scripted);
    if (!action) throw UsageError("unknown action '" + scripted + "' (accelerate, brake, maintain)");
  }
  prepare_output(cfg);
  const fs::path frames = cfg.output_dir / "frames";
  fs::create_directories(frames);

  std::optional<PolicyValueNet> net;
  if (!checkpoint.empty()) net = load_checkpoint(checkpoint);
  TrafficEnv env(cfg.env, cfg.reward, cfg.geometry);
  Rng rng(derive_seed(cfg.env.seed, 0x5e91a7));
  std::map<AgentId, RepeatState> repeat;

  std::ofstream csv(cfg.output_dir / "trace.csv");
  csv << "tick,sim_time,n_vehicles";
  for (int j = 0; j < cfg.env.max_vehicles; ++j)
    csv << ",id_" << j << ",s_" << j << ",speed_" << j << ",status_" << j << ",r_terminal_" << j << ",r_danger_" << j
        << ",r_speed_" << j << ",r_total_" << j;
  csv << "\n";

  static const char* kLayerNames[] = {"navigable", "obstacles", "path"};
  PolicyInput input;
  for (std::int64_t t = 0; t < steps; ++t) {
    JointAction joint;
    for (AgentId id : env.active_agents()) {
      if (action) {
        joint[id] = static_cast<int>(*action);
        continue;
      }
      RepeatState& rs = repeat[id];
      if (rs.last_action < 0 || is_decision_tick(rs, cfg.rl.action_repeat)) {
        env.policy_input(id, input);
        const ForwardCache c = forward(*net, input.visual, input.numeric);
        joint[id] = select_action(c.logits, rng, rs, cfg.rl.action_repeat).action;
      } else {
        joint[id] = select_action({}, rng, rs, cfg.rl.action_repeat).action;
      }
    }
    const TrafficStepResult r = env.step(joint);
    for (const auto& a : r.agents)
      if (a.status != AgentStatus::Active) repeat.erase(a.id);

    char head[96];
    std::snprintf(head, sizeof head, "%lld,%.17g,%zu", static_cast<long long>(env.tick()), env.sim_time(),
                  r.agents.size());
    csv << head;
    for (int j = 0; j < cfg.env.max_vehicles; ++j) {
      if (static_cast<std::size_t>(j) >= r.agents.size()) {
        csv << ",,,,,,,,";
        continue;
      }
      const VehicleState& v = r.final_states[static_cast<std::size_t>(j)];
      const RewardBreakdown& b = r.breakdowns[static_cast<std::size_t>(j)];
      char buf[320];
      std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%s,%.17g,%.17g,%.17g,%.17g",
                    static_cast<unsigned long long>(v.id), v.s, v.speed, std::string(to_string(v.status)).c_str(),
                    b.terminal, b.danger, b.speed, b.total);
      csv << buf;
    }
    csv << "\n";

    ViewLayers view;
    const auto ids = env.active_agents();
    if (!ids.empty()) view = env.render_view(*std::min_element(ids.begin(), ids.end()));
    for (std::size_t l = 0; l < ViewLayers::kLayers; ++l) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%06lld_%s.pgm", static_cast<long long>(t), kLayerNames[l]);
      write_pgm(frames / name, view.layers[l]);
    }
  }
  return kExitOk;
}

int cmd_plot(const std::string& stats_file, const std::string& out_file, int window) {
  if (window < 1) throw UsageError("--window must be >= 1");
  const auto rows = read_stats_csv(stats_file);
  if (rows.empty()) throw std::runtime_error("no episodes in " + stats_file);
  std::vector<double> x, success, reward;
  double goal_sum = 0.0, reward_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    goal_sum += rows[i].outcome == AgentStatus::ReachedGoal ? 1.0 : 0.0;
    reward_sum += rows[i].cum_reward;
    if (i >= static_cast<std::size_t>(window)) {
      const auto& old = rows[i - static_cast<std::size_t>(window)];
      goal_sum -= old.outcome == AgentStatus::ReachedGoal ? 1.0 : 0.0;
      reward_sum -= old.cum_reward;
    }
    const double n = static_cast<double>(std::min(i + 1, static_cast<std::size_t>(window)));
    x.push_back(static_cast<double>(i + 1));
    success.push_back(goal_sum / n);
    reward.push_back(reward_sum / n);
  }
  const std::string svg = dual_axis_svg("Learning curves (window " + std::to_string(window) + ")", "episode", x,
                                        {"goal ratio", success, "#1f77b4"},
                                        PlotSeries{"mean episode reward", reward, "#2ca02c"});
  std::ofstream out(out_file);
  if (!out) throw std::runtime_error("cannot write " + out_file);
  out << svg;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  spdlog::cfg::load_env_levels();
  CLI::App app{"Multi-agent roundabout simulator and actor-critic trainer"};
  app.require_subcommand(0, 1);

  Common train_opts, validate_opts, eval_opts, replay_opts;
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config, "JSON configuration file");
    sub->add_option("-o,--output", c.output, "Output directory (overrides output_dir)");
  };

  auto* train = app.add_subcommand("train", "Train the shared policy on the roundabout");
  add_common(train, train_opts);
  std::optional<std::int64_t> episodes;
  train->add_option("--episodes", episodes, "Override total_episodes");

  auto* validate = app.add_subcommand("validate", "Certify the learner on the chain MDP");
  add_common(validate, validate_opts);

  auto* eval = app.add_subcommand("eval-sweep", "Aggressiveness or target-speed sweep of a checkpoint");
  add_common(eval, eval_opts);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate (overrides config)");

  auto* replay = app.add_subcommand("replay", "Run the simulator and dump a CSV trace plus PGM views");
  add_common(replay, replay_opts);
  std::int64_t replay_steps = 100;
  std::string scripted, replay_ckpt;
  replay->add_option("--steps", replay_steps, "Number of simulation steps");
  replay->add_option("--scripted", scripted, "Constant action: accelerate, brake or maintain");
  replay->add_option("--checkpoint", replay_ckpt, "Drive every vehicle with this policy");

  auto* plot = app.add_subcommand("plot", "Learning curves from a training stats CSV");
  std::string stats_file, plot_out = "learning_curves.svg";
  int window = 100;
  plot->add_option("--stats", stats_file, "stats.csv written by train")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--output", plot_out, "SVG file to write");
  plot->add_option("--window", window, "Moving-average window in episodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(load(train_opts), episodes);
    if (*validate) return cmd_validate(load(validate_opts));
    if (*eval) return cmd_eval(load(eval_opts), eval_ckpt);
    if (*replay) return cmd_replay(load(replay_opts), replay_steps, scripted, replay_ckpt);
    if (*plot) return cmd_plot(stats_file, plot_out, window);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace roundabout
