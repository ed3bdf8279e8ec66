#include "roundabout/traffic_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace roundabout {

std::string_view to_string(AgentStatus status) {
  switch (status) {
    case AgentStatus::Active: return "active";
    case AgentStatus::ReachedGoal: return "goal";
    case AgentStatus::Crashed: return "crash";
    case AgentStatus::TimedOut: return "timeout";
  }
  return "unknown";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Accelerate: return "accelerate";
    case Action::Brake: return "brake";
    case Action::Maintain: return "maintain";
  }
  return "unknown";
}

Action action_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kActionCount))
    throw std::invalid_argument("action index out of range: " + std::to_string(index));
  return static_cast<Action>(index);
}

void RewardConfig::validate() const {
  if (k_y < 0 || k_s < 0 || k_p < 0 || k_n < 0) throw std::invalid_argument("reward coefficients must be >= 0");
  if (!(lookahead_horizon >= 0)) throw std::invalid_argument("lookahead_horizon must be >= 0");
}

void EnvConfig::validate() const {
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  if (!(accel > 0 && brake < 0)) throw std::invalid_argument("need accel > 0 > brake");
  if (max_vehicles < 0) throw std::invalid_argument("max_vehicles must be >= 0");
  if (!(v_max > 0)) throw std::invalid_argument("v_max must be positive");
  if (!(episode_time_limit > 0)) throw std::invalid_argument("episode_time_limit must be positive");
  if (!(target_speed_min > 0 && target_speed_max >= target_speed_min))
    throw std::invalid_argument("target speed range must satisfy 0 < min <= max");
  if (!(vehicle_length > 0 && vehicle_width > 0)) throw std::invalid_argument("vehicle dimensions must be positive");
  if (!(distance_norm > 0)) throw std::invalid_argument("distance_norm must be positive");
  if (!(spawn_clearance >= 0)) throw std::invalid_argument("spawn_clearance must be >= 0");
}

std::int64_t EnvConfig::time_limit_ticks() const { return std::llround(episode_time_limit / dt); }

// ---------------------------------------------------------------------------
// kinematics and rules

VehicleState apply_action(VehicleState v, Action a, const EnvConfig& cfg) {
  const double cap = cfg.speed_cap_mode == SpeedCapMode::GlobalCap ? cfg.v_max : std::min(cfg.v_max, v.target_speed);
  switch (a) {
    case Action::Accelerate:
      if (v.speed < cap) v.speed = std::clamp(v.speed + cfg.accel * cfg.dt, 0.0, cap);
      break;
    case Action::Brake:
      v.speed = std::max(0.0, v.speed + cfg.brake * cfg.dt);
      break;
    case Action::Maintain:
      break;
  }
  v.s = std::min(v.s + v.speed * cfg.dt, v.path->total_length);
  return v;
}

OrientedRect footprint(const VehicleState& v, const EnvConfig& cfg) {
  const Pose p = arc_point(*v.path, v.s);
  return {p.position, p.heading, cfg.vehicle_length, cfg.vehicle_width};
}

std::vector<std::pair<AgentId, AgentId>> detect_collisions(std::span<const VehicleState> vehicles,
                                                           const EnvConfig& cfg) {
  std::vector<OrientedRect> rects;
  rects.reserve(vehicles.size());
  for (const auto& v : vehicles) rects.push_back(footprint(v, cfg));
  std::vector<std::pair<AgentId, AgentId>> out;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      if (overlaps(rects[i], rects[j]))
        out.emplace_back(std::min(vehicles[i].id, vehicles[j].id), std::max(vehicles[i].id, vehicles[j].id));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_entering(const VehicleState& v, const EnvConfig& cfg) {
  return v.s - 0.5 * cfg.vehicle_length < v.path->merge_s;
}

namespace {

/// Calls fn(a, b) for each polyline piece of `path` between arc positions s0 < s1.
template <typename Fn>
bool any_piece(const PathSpec& path, double s0, double s1, Fn&& fn) {
  const std::size_t first = segment_at(path, s0);
  Vec2 a = arc_point(path, s0).position;
  for (std::size_t i = first; i + 1 < path.points.size(); ++i) {
    const bool last = path.cum_length[i + 1] >= s1;
    const Vec2 b = last ? arc_point(path, s1).position : path.points[i + 1];
    if (fn(a, b)) return true;
    if (last) break;
    a = b;
  }
  return false;
}

}  // namespace

bool yield_violation(const VehicleState& agent, std::span<const VehicleState> vehicles, const EnvConfig& cfg,
                     const RewardConfig& rewards, double lane_width) {
  if (!is_entering(agent, cfg)) return false;
  const OrientedRect body = footprint(agent, cfg);
  for (const VehicleState& v : vehicles) {
    if (v.id == agent.id || is_entering(v, cfg)) continue;
    const double reach = 3.0 * v.speed * rewards.lookahead_horizon;
    if (!(reach > 0.0)) continue;
    const PathSpec& p = *v.path;
    const double s0 = std::min(v.s + 0.5 * cfg.vehicle_length, p.total_length);
    const double s1 = std::min(s0 + reach, p.total_length);
    if (!(s1 > s0)) continue;
    const bool hit = any_piece(p, s0, s1, [&](Vec2 a, Vec2 b) {
      const Vec2 d = b - a;
      const double len = norm(d);
      if (len <= 0.0) return false;
      const OrientedRect band{(a + b) * 0.5, std::atan2(d.y, d.x), len, lane_width};
      return overlaps(body, band);
    });
    if (hit) return true;
  }
  return false;
}

bool safety_violation(const VehicleState& agent, std::span<const VehicleState> vehicles, const EnvConfig& cfg,
                      const RewardConfig& rewards, double lane_width) {
  const double d_a = agent.speed * rewards.lookahead_horizon;
  if (!(d_a > 0.0)) return false;
  const PathSpec& p = *agent.path;
  const double s_from = agent.s;
  const double s_to = std::min(p.total_length, agent.s + cfg.vehicle_length + d_a);
  if (!(s_to > s_from)) return false;
  const double half = 0.5 * lane_width;

  double nearest = std::numeric_limits<double>::infinity();
  const VehicleState* leader = nullptr;
  for (const VehicleState& u : vehicles) {
    if (u.id == agent.id) continue;
    const Vec2 c = arc_point(*u.path, u.s).position;
    std::size_t i = segment_at(p, s_from);
    for (; i + 1 < p.points.size() && p.cum_length[i] <= s_to; ++i) {
      const Vec2 a = p.points[i];
      const Vec2 ab = p.points[i + 1] - a;
      const double len2 = dot(ab, ab);
      const double t = std::clamp(dot(c - a, ab) / len2, 0.0, 1.0);
      if (norm(c - (a + ab * t)) > half) continue;
      const double s_proj = p.cum_length[i] + t * (p.cum_length[i + 1] - p.cum_length[i]);
      if (s_proj > s_from && s_proj <= s_to && s_proj < nearest) {
        nearest = s_proj;
        leader = &u;
      }
    }
  }
  if (leader == nullptr) return false;
  const double gap = nearest - s_from - cfg.vehicle_length;
  if (!(gap < d_a)) return false;
  if (is_entering(*leader, cfg) && !is_entering(agent, cfg)) return false;
  return true;
}

double r_speed(double actual_speed, double target_speed, const RewardConfig& cfg) {
  if (!(target_speed > 0.0)) throw std::invalid_argument("target speed must be positive");
  if (actual_speed <= target_speed) return actual_speed / target_speed * cfg.k_p;
  return cfg.k_p - (actual_speed - target_speed) / target_speed * cfg.k_n;
}

RewardBreakdown compute_reward(AgentStatus status, DangerEvents events, double actual_speed, double target_speed,
                               const RewardConfig& cfg) {
  RewardBreakdown r;
  switch (status) {
    case AgentStatus::ReachedGoal: r.terminal = cfg.terminal_goal; break;
    case AgentStatus::Crashed: r.terminal = cfg.terminal_crash; break;
    case AgentStatus::TimedOut: r.terminal = cfg.terminal_timeout; break;
    case AgentStatus::Active: r.terminal = 0.0; break;
  }
  if (events.yield)
    r.danger = -cfg.k_y;
  else if (events.safety)
    r.danger = -cfg.k_s;
  r.speed = r_speed(actual_speed, target_speed, cfg);
  r.total = r.terminal + r.danger + r.speed;
  return r;
}

std::array<double, 4> numeric_inputs(const VehicleState& v, double sim_time, const EnvConfig& cfg) {
  const double etr = v.aggressiveness_override ? *v.aggressiveness_override
                                               : (sim_time - v.spawn_time) / cfg.episode_time_limit;
  return {v.speed / cfg.v_max, v.target_speed / cfg.v_max, etr, (v.path->total_length - v.s) / cfg.distance_norm};
}

void Observation::to_input(PolicyInput& out) const {
  out.visual.resize(kFrames * ViewLayers::kLayers * ViewLayers::kPixels);
  std::size_t o = 0;
  for (const ViewLayers& f : frames) {
    for (const auto& grid : f.layers) {
      for (std::uint8_t px : grid) out.visual[o++] = px ? 1.0 : 0.0;
    }
  }
  out.numeric.assign(numeric.begin(), numeric.end());
}

// ---------------------------------------------------------------------------
// TrafficEnv

TrafficEnv::TrafficEnv(const EnvConfig& cfg, const RewardConfig& rewards, const GeometryConfig& geometry)
    : cfg_(cfg), rewards_(rewards), map_(build_roundabout(geometry)), rng_(cfg.seed) {
  cfg_.validate();
  rewards_.validate();
  for (int e = 0; e < 3; ++e) {
    for (int x = 0; x < 3; ++x)
      paths_[static_cast<std::size_t>(e * 3 + x)] =
          std::make_shared<const PathSpec>(path_for(map_, e, x, geometry.sample_step));
  }
  reset();
}

double TrafficEnv::uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

void TrafficEnv::reset() { reset(cfg_.seed); }

void TrafficEnv::reset(std::uint64_t seed) {
  cfg_.seed = seed;
  rng_.seed(seed);
  vehicles_.clear();
  observations_.clear();
  tick_ = 0;
  next_id_ = 1;
  if (auto id = spawn_policy()) {
    const std::array<AgentId, 1> fresh{*id};
    render_new_frames(fresh, false);
  }
}

bool TrafficEnv::entry_clear(int entry) const {
  return std::none_of(vehicles_.begin(), vehicles_.end(), [&](const VehicleState& v) {
    return v.path->entry_id == entry && v.s - 0.5 * cfg_.vehicle_length < cfg_.spawn_clearance;
  });
}

AgentId TrafficEnv::add_vehicle(int entry, int exit, double target_speed) {
  VehicleState v;
  v.id = next_id_++;
  v.path = paths_[static_cast<std::size_t>(entry * 3 + exit)];
  v.target_speed = target_speed;
  v.spawn_tick = tick_;
  v.spawn_time = sim_time();
  v.episode_deadline = v.spawn_time + cfg_.episode_time_limit;
  vehicles_.push_back(v);
  return v.id;
}

std::optional<AgentId> TrafficEnv::spawn_policy() {
  const int cap = spawn_limit_ ? std::min(*spawn_limit_, cfg_.max_vehicles) : cfg_.max_vehicles;
  if (static_cast<int>(vehicles_.size()) >= cap) return std::nullopt;
  std::vector<int> free;
  for (int e = 0; e < 3; ++e)
    if (entry_clear(e)) free.push_back(e);
  if (free.empty()) return std::nullopt;
  const auto pick = [&](std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform01() * n)); };
  const int entry = free[pick(free.size())];
  const int exit = static_cast<int>(pick(3));
  const double target = cfg_.target_speed_min + (cfg_.target_speed_max - cfg_.target_speed_min) * uniform01();
  return add_vehicle(entry, exit, target);
}

std::optional<AgentId> TrafficEnv::try_spawn(int entry, int exit, double target_speed) {
  if (entry < 0 || entry > 2 || exit < 0 || exit > 2) throw std::invalid_argument("entry/exit out of range");
  if (!(target_speed > 0)) throw std::invalid_argument("target speed must be positive");
  if (static_cast<int>(vehicles_.size()) >= cfg_.max_vehicles || !entry_clear(entry)) return std::nullopt;
  const AgentId id = add_vehicle(entry, exit, target_speed);
  const std::array<AgentId, 1> fresh{id};
  render_new_frames(fresh, false);
  return id;
}

void TrafficEnv::set_aggressiveness(AgentId id, std::optional<double> value) {
  for (VehicleState& v : vehicles_) {
    if (v.id != id) continue;
    v.aggressiveness_override = value;
    if (auto it = observations_.find(id); it != observations_.end())
      it->second.numeric = numeric_inputs(v, sim_time(), cfg_);
    return;
  }
  throw std::invalid_argument("unknown vehicle " + std::to_string(id));
}

void TrafficEnv::set_target_speed(AgentId id, double value) {
  if (!(value > 0)) throw std::invalid_argument("target speed must be positive");
  for (VehicleState& v : vehicles_) {
    if (v.id != id) continue;
    v.target_speed = value;
    if (auto it = observations_.find(id); it != observations_.end())
      it->second.numeric = numeric_inputs(v, sim_time(), cfg_);
    return;
  }
  throw std::invalid_argument("unknown vehicle " + std::to_string(id));
}

std::vector<AgentId> TrafficEnv::active_agents() const {
  std::vector<AgentId> ids;
  ids.reserve(vehicles_.size());
  for (const auto& v : vehicles_) ids.push_back(v.id);
  return ids;
}

bool TrafficEnv::has_vehicle(AgentId id) const {
  return std::any_of(vehicles_.begin(), vehicles_.end(), [&](const VehicleState& v) { return v.id == id; });
}

const VehicleState& TrafficEnv::vehicle(AgentId id) const {
  for (const auto& v : vehicles_)
    if (v.id == id) return v;
  throw std::invalid_argument("unknown vehicle " + std::to_string(id));
}

const Observation& TrafficEnv::observation(AgentId id) const {
  if (!cfg_.render_observations) throw std::logic_error("observation rendering is disabled");
  auto it = observations_.find(id);
  if (it == observations_.end()) throw std::invalid_argument("no observation for vehicle " + std::to_string(id));
  return it->second;
}

void TrafficEnv::policy_input(AgentId id, PolicyInput& out) const { observation(id).to_input(out); }

ViewLayers TrafficEnv::render_view(AgentId id) const {
  const VehicleState& ego = vehicle(id);
  std::vector<OrientedRect> rects;
  rects.reserve(vehicles_.size());
  for (const auto& v : vehicles_) rects.push_back(footprint(v, cfg_));
  RasterInputs in;
  in.map = &map_;
  in.vehicles = rects;
  in.ego = arc_point(*ego.path, ego.s);
  in.ego_path = ego.path.get();
  in.ego_s = ego.s;
  return rasterize_view(in);
}

void TrafficEnv::render_new_frames(std::span<const AgentId> fresh, bool advance_existing) {
  if (!cfg_.render_observations) return;
  std::vector<OrientedRect> rects;
  rects.reserve(vehicles_.size());
  for (const auto& v : vehicles_) rects.push_back(footprint(v, cfg_));
  for (const VehicleState& v : vehicles_) {
    const bool is_fresh = std::find(fresh.begin(), fresh.end(), v.id) != fresh.end();
    const bool known = observations_.contains(v.id);
    if (is_fresh ? known : !advance_existing) continue;
    RasterInputs in;
    in.map = &map_;
    in.vehicles = rects;
    in.ego = arc_point(*v.path, v.s);
    in.ego_path = v.path.get();
    in.ego_s = v.s;
    ViewLayers view = rasterize_view(in);
    Observation& obs = observations_[v.id];
    if (!known) {
      obs.frames.fill(view);
    } else {
      std::move(obs.frames.begin() + 1, obs.frames.end(), obs.frames.begin());
      obs.frames.back() = std::move(view);
    }
    obs.numeric = numeric_inputs(v, sim_time(), cfg_);
  }
}

TrafficStepResult TrafficEnv::step(const JointAction& actions) {
  for (const auto& [id, a] : actions) {
    if (!has_vehicle(id)) throw std::invalid_argument("action for unknown vehicle " + std::to_string(id));
    action_from_index(a);
  }
  for (const auto& v : vehicles_) {
    if (!actions.contains(v.id)) throw std::invalid_argument("missing action for vehicle " + std::to_string(v.id));
  }

  for (VehicleState& v : vehicles_) v = apply_action(v, action_from_index(actions.at(v.id)), cfg_);
  ++tick_;

  const auto crashes = detect_collisions(vehicles_, cfg_);
  const std::int64_t limit = cfg_.time_limit_ticks();
  for (VehicleState& v : vehicles_) {
    const bool crashed = std::any_of(crashes.begin(), crashes.end(),
                                     [&](const auto& pr) { return pr.first == v.id || pr.second == v.id; });
    if (crashed)
      v.status = AgentStatus::Crashed;
    else if (v.s >= v.path->total_length)
      v.status = AgentStatus::ReachedGoal;
    else if (tick_ - v.spawn_tick >= limit)
      v.status = AgentStatus::TimedOut;
  }

  TrafficStepResult result;
  result.agents.reserve(vehicles_.size());
  result.breakdowns.reserve(vehicles_.size());
  for (const VehicleState& v : vehicles_) {
    DangerEvents ev;
    ev.yield = yield_violation(v, vehicles_, cfg_, rewards_, map_.lane_width());
    ev.safety = !ev.yield && safety_violation(v, vehicles_, cfg_, rewards_, map_.lane_width());
    const RewardBreakdown r = compute_reward(v.status, ev, v.speed, v.target_speed, rewards_);
    result.agents.push_back({v.id, r.total, v.status, v.speed});
    result.breakdowns.push_back(r);
    result.final_states.push_back(v);
  }

  std::erase_if(vehicles_, [](const VehicleState& v) { return v.status != AgentStatus::Active; });
  for (const AgentStep& a : result.agents)
    if (a.status != AgentStatus::Active) observations_.erase(a.id);

  std::vector<AgentId> fresh;
  if (auto id = spawn_policy()) fresh.push_back(*id);
  result.spawned = fresh;
  render_new_frames(fresh, true);
  return result;
}

}  // namespace roundabout
