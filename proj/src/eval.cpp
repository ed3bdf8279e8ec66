#include "roundabout/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "roundabout/rl.hpp"

namespace roundabout {

namespace {

constexpr const char* kSweepHeader = "value,success_ratio,avg_speed,episodes,crashes,timeouts";

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void SweepSpec::validate() const {
  if (episodes_per_value < 1) throw std::invalid_argument("episodes_per_value must be >= 1");
  if (values.empty()) throw std::invalid_argument("sweep_values must not be empty");
  if (action_repeat_eval < 1) throw std::invalid_argument("action_repeat_eval must be >= 1");
  if (probe_entry < 0 || probe_entry > 2 || probe_exit < 0 || probe_exit > 2)
    throw std::invalid_argument("probe entry/exit out of range");
  if (warmup_ticks < 0) throw std::invalid_argument("warmup_ticks must be >= 0");
  if (parameter == SweepParameter::TargetSpeed)
    for (double v : values)
      if (!(v > 0)) throw std::invalid_argument("target speed sweep values must be positive");
}

std::string_view to_string(SweepParameter p) {
  return p == SweepParameter::Aggressiveness ? "aggressiveness" : "target_speed";
}

SweepParameter parse_sweep_parameter(std::string_view text) {
  if (text == "aggressiveness") return SweepParameter::Aggressiveness;
  if (text == "target_speed") return SweepParameter::TargetSpeed;
  throw std::invalid_argument("unknown sweep parameter '" + std::string(text) + "'");
}

ProbeEpisode run_probe_episode(const PolicyValueNet& net, const SweepSpec& spec, double value, EnvConfig env_cfg,
                               const RewardConfig& rewards, const GeometryConfig& geometry, std::uint64_t seed) {
  env_cfg.seed = seed;
  env_cfg.render_observations = true;
  if (env_cfg.max_vehicles < 1) throw std::invalid_argument("evaluation needs max_vehicles >= 1");
  TrafficEnv env(env_cfg, rewards, geometry);
  env.set_spawn_limit(env_cfg.max_vehicles - 1);
  if (static_cast<int>(env.vehicles().size()) > env_cfg.max_vehicles - 1) env.reset(seed);

  Rng rng(derive_seed(seed, 0xe7a1));
  std::map<AgentId, RepeatState> repeat;
  std::optional<AgentId> probe;

  auto configure_background = [&](AgentId id) {
    const double a = spec.parameter == SweepParameter::Aggressiveness ? uniform01(rng)
                                                                      : spec.background_aggressiveness;
    env.set_aggressiveness(id, a);
  };
  for (AgentId id : env.active_agents()) configure_background(id);

  ProbeEpisode out;
  double speed_sum = 0.0;
  const std::int64_t give_up = spec.warmup_ticks + env_cfg.time_limit_ticks();
  PolicyInput input;
  for (;;) {
    if (!probe) {
      if (env.tick() >= give_up) {
        out.outcome = AgentStatus::TimedOut;
        break;
      }
      if (env.tick() >= spec.warmup_ticks) {
        const double target = spec.parameter == SweepParameter::TargetSpeed ? value : spec.probe_target_speed;
        probe = env.try_spawn(spec.probe_entry, spec.probe_exit, target);
        if (probe)
          env.set_aggressiveness(*probe,
                                 spec.parameter == SweepParameter::Aggressiveness ? value
                                                                                  : spec.background_aggressiveness);
      }
    }

    JointAction joint;
    for (AgentId id : env.active_agents()) {
      RepeatState& rs = repeat[id];
      if (rs.last_action < 0 || is_decision_tick(rs, spec.action_repeat_eval)) {
        env.policy_input(id, input);
        const ForwardCache c = forward(net, input.visual, input.numeric);
        joint[id] = select_action(c.logits, rng, rs, spec.action_repeat_eval).action;
      } else {
        joint[id] = select_action({}, rng, rs, spec.action_repeat_eval).action;
      }
    }
    const TrafficStepResult r = env.step(joint);
    for (const AgentStep& a : r.agents) {
      if (a.status != AgentStatus::Active) repeat.erase(a.id);
      if (probe && a.id == *probe) {
        speed_sum += a.speed;
        ++out.steps;
        if (a.status != AgentStatus::Active) out.outcome = a.status;
      }
    }
    for (AgentId id : r.spawned) configure_background(id);
    if (out.outcome != AgentStatus::Active) break;
  }
  out.mean_speed = out.steps > 0 ? speed_sum / static_cast<double>(out.steps) : 0.0;
  return out;
}

std::vector<SweepRow> run_sweep(const PolicyValueNet& net, const SweepSpec& spec, const EnvConfig& env_cfg,
                                const RewardConfig& rewards, const GeometryConfig& geometry) {
  spec.validate();
  env_cfg.validate();
  const std::size_t per = static_cast<std::size_t>(spec.episodes_per_value);
  const std::size_t total = spec.values.size() * per;
  std::vector<ProbeEpisode> episodes(total);
  std::vector<std::exception_ptr> errors(total);

#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < static_cast<long>(total); ++k) {
    const auto idx = static_cast<std::size_t>(k);
    try {
      episodes[idx] = run_probe_episode(net, spec, spec.values[idx / per], env_cfg, rewards, geometry,
                                        derive_seed(spec.seed, idx % per));
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SweepRow> rows;
  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    SweepRow row;
    row.value = spec.values[v];
    row.episodes = spec.episodes_per_value;
    int goals = 0;
    double speed = 0.0;
    for (std::size_t e = 0; e < per; ++e) {
      const ProbeEpisode& ep = episodes[v * per + e];
      if (ep.outcome == AgentStatus::ReachedGoal) ++goals;
      if (ep.outcome == AgentStatus::Crashed) ++row.crashes;
      if (ep.outcome == AgentStatus::TimedOut) ++row.timeouts;
      speed += ep.mean_speed;
    }
    row.success_ratio = static_cast<double>(goals) / row.episodes;
    row.avg_speed = speed / row.episodes;
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const EnvConfig& env_cfg, const RewardConfig& rewards,
                                const GeometryConfig& geometry) {
  const PolicyValueNet net = load_checkpoint(spec.checkpoint);
  return run_sweep(net, spec, env_cfg, rewards, geometry);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt_double(r.value) + "," + fmt_double(r.success_ratio) + "," + fmt_double(r.avg_speed) + "," +
           std::to_string(r.episodes) + "," + std::to_string(r.crashes) + "," + std::to_string(r.timeouts) + "\n";
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader) throw std::runtime_error("sweep CSV: bad header");
  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[6];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw std::runtime_error("sweep CSV line " + std::to_string(lineno) + ": too few fields");
    try {
      rows.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                      std::stoi(f[5])});
    } catch (const std::exception& e) {
      throw std::runtime_error("sweep CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string dual_axis_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                          const PlotSeries& left, const std::optional<PlotSeries>& right) {
  if (x.empty()) throw std::invalid_argument("plot: no points");
  if (left.y.size() != x.size() || (right && right->y.size() != x.size()))
    throw std::invalid_argument("plot: series length mismatch");
  constexpr double W = 640, H = 400, ml = 70, mr = 70, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  auto range = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double a = *lo, b = *hi;
    if (a == b) {
      a -= 0.5;
      b += 0.5;
    }
    return std::pair{a, b};
  };
  const auto [x0, x1] = range(x);
  auto px = [&, x0 = x0, x1 = x1](double v) { return ml + (v - x0) / (x1 - x0) * pw; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape_xml(title) << "</text>\n"
      << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  auto draw = [&](const PlotSeries& s, bool on_right) {
    const auto [y0, y1] = range(s.y);
    auto py = [&, y0 = y0, y1 = y1](double v) { return mt + ph - (v - y0) / (y1 - y0) * ph; };
    const double ax = on_right ? ml + pw : ml;
    const char* anchor = on_right ? "start" : "end";
    const double tx = on_right ? ax + 6 : ax - 6;
    for (int t = 0; t <= 4; ++t) {
      const double v = y0 + (y1 - y0) * t / 4.0;
      char label[32];
      std::snprintf(label, sizeof label, "%.3g", v);
      svg << "<text x=\"" << fmt_coord(tx) << "\" y=\"" << fmt_coord(py(v) + 4) << "\" text-anchor=\"" << anchor
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << s.color << "\">" << label << "</text>\n";
    }
    svg << "<text transform=\"translate(" << fmt_coord(on_right ? W - 12 : 16) << "," << fmt_coord(mt + ph / 2)
        << ") rotate(" << (on_right ? 90 : -90) << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"13\" fill=\"" << s.color << "\">" << escape_xml(s.label) << "</text>\n";
    svg << "<polyline class=\"series\" data-label=\"" << escape_xml(s.label) << "\" fill=\"none\" stroke=\""
        << s.color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) svg << (i ? " " : "") << fmt_coord(px(x[i])) << "," << fmt_coord(py(s.y[i]));
    svg << "\"/>\n";
    for (std::size_t i = 0; i < x.size(); ++i)
      svg << "<circle cx=\"" << fmt_coord(px(x[i])) << "\" cy=\"" << fmt_coord(py(s.y[i])) << "\" r=\"3\" fill=\""
          << s.color << "\"/>\n";
  };
  draw(left, false);
  if (right) draw(*right, true);

  for (int t = 0; t <= 4; ++t) {
    const double v = x0 + (x1 - x0) * t / 4.0;
    char label[32];
    std::snprintf(label, sizeof label, "%.3g", v);
    svg << "<text x=\"" << fmt_coord(px(v)) << "\" y=\"" << fmt_coord(mt + ph + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
  }
  svg << "<text x=\"" << fmt_coord(ml + pw / 2) << "\" y=\"" << fmt_coord(H - 10)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape_xml(x_label)
      << "</text>\n</svg>\n";
  return svg.str();
}

void summarize(const std::vector<SweepRow>& rows, SweepParameter parameter, const std::filesystem::path& stem) {
  if (rows.empty()) throw std::invalid_argument("summarize: no rows");
  std::vector<double> x, success, speed;
  for (const auto& r : rows) {
    x.push_back(r.value);
    success.push_back(r.success_ratio);
    speed.push_back(r.avg_speed);
  }
  const std::string svg = dual_axis_svg(
      std::string("Sweep over ") + std::string(to_string(parameter)),
      parameter == SweepParameter::Aggressiveness ? "aggressiveness" : "target speed (m/s)", x,
      {"success ratio", success, "#1f77b4"}, PlotSeries{"average speed (m/s)", speed, "#d62728"});
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path svg_path = stem;
  svg_path += ".svg";
  std::ofstream(csv) << sweep_csv(rows);
  std::ofstream(svg_path) << svg;
  if (!std::filesystem::exists(csv) || !std::filesystem::exists(svg_path))
    throw std::runtime_error("cannot write sweep outputs at " + stem.string());
}

}  // namespace roundabout
