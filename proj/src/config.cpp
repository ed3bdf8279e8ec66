#include "roundabout/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace roundabout {

using nlohmann::json;

RunConfig::RunConfig() { trainer.n_ag = env.max_vehicles; }

void RunConfig::validate() const {
  build_roundabout(geometry);
  if (!(geometry.sample_step > 0)) throw std::invalid_argument("sample_step must be positive");
  env.validate();
  reward.validate();
  rl.validate();
  trainer.validate();
  sweep.validate();
  if (validation_env_steps < 1) throw std::invalid_argument("validation_env_steps must be >= 1");
  if (validation_eval_every < 1) throw std::invalid_argument("validation_eval_every must be >= 1");
}

ValidationConfig RunConfig::validation() const {
  ValidationConfig v;
  v.rl = rl;
  v.rl.action_repeat = 1;
  v.rmsprop = trainer.rmsprop;
  v.max_env_steps = validation_env_steps;
  v.eval_every = validation_eval_every;
  v.seed = env.seed;
  return v;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

/// Line of the first occurrence of the quoted key.
std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Line of the longest key from `doc` named as a whole word in `message`.
std::size_t blamed_line(const std::string& text, const json& doc, const std::string& message) {
  std::string best;
  for (const auto& [key, value] : doc.items()) {
    for (auto pos = message.find(key); pos != std::string::npos; pos = message.find(key, pos + 1)) {
      const std::size_t end = pos + key.size();
      const bool word = (pos == 0 || !is_ident(message[pos - 1])) && (end == message.size() || !is_ident(message[end]));
      if (word && key.size() > best.size()) best = key;
    }
  }
  return best.empty() ? 0 : line_of_key(text, best);
}

struct TypeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double as_number(const json& v) {
  if (!v.is_number()) throw TypeError("expected a number, got " + std::string(v.type_name()));
  return v.get<double>();
}

std::int64_t as_integer(const json& v) {
  if (!v.is_number_integer()) throw TypeError("expected an integer, got " + std::string(v.type_name()));
  return v.get<std::int64_t>();
}

std::uint64_t as_unsigned(const json& v) {
  if (!v.is_number_unsigned()) throw TypeError("expected a non-negative integer, got " + std::string(v.type_name()));
  return v.get<std::uint64_t>();
}

int as_int(const json& v) {
  const std::int64_t x = as_integer(v);
  if (x < INT32_MIN || x > INT32_MAX) throw TypeError("integer out of range");
  return static_cast<int>(x);
}

std::string as_string(const json& v) {
  if (!v.is_string()) throw TypeError("expected a string, got " + std::string(v.type_name()));
  return v.get<std::string>();
}

std::vector<double> as_number_list(const json& v) {
  if (!v.is_array()) throw TypeError("expected an array of numbers, got " + std::string(v.type_name()));
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x));
  return out;
}

std::vector<LegConfig> as_legs(const json& v) {
  if (!v.is_array()) throw TypeError("expected an array of {angle_deg, length} objects");
  std::vector<LegConfig> legs;
  for (const auto& item : v) {
    if (!item.is_object()) throw TypeError("expected an object with angle_deg and length");
    LegConfig leg;
    for (const auto& [k, x] : item.items()) {
      if (k == "angle_deg")
        leg.angle_deg = as_number(x);
      else if (k == "length")
        leg.length = as_number(x);
      else
        throw TypeError("unknown leg field '" + k + "'");
    }
    legs.push_back(leg);
  }
  return legs;
}

SpeedCapMode as_cap_mode(const json& v) {
  const std::string s = as_string(v);
  if (s == "global_cap") return SpeedCapMode::GlobalCap;
  if (s == "target_cap") return SpeedCapMode::TargetCap;
  throw TypeError("expected \"global_cap\" or \"target_cap\", got \"" + s + "\"");
}

Executor as_executor(const json& v) {
  const std::string s = as_string(v);
  if (s == "threaded") return Executor::Threaded;
  if (s == "sequential") return Executor::Sequential;
  throw TypeError("expected \"threaded\" or \"sequential\", got \"" + s + "\"");
}

SweepParameter as_sweep_parameter(const json& v) {
  const std::string s = as_string(v);
  try {
    return parse_sweep_parameter(s);
  } catch (const std::invalid_argument&) {
    throw TypeError("expected \"aggressiveness\" or \"target_speed\", got \"" + s + "\"");
  }
}

using Setter = std::function<void(RunConfig&, const json&)>;
using Getter = std::function<json(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

#define NUM(key, member) {key, {[](RunConfig& c, const json& v) { c.member = as_number(v); }, [](const RunConfig& c) { return json(c.member); }}}
#define INT(key, member) {key, {[](RunConfig& c, const json& v) { c.member = as_int(v); }, [](const RunConfig& c) { return json(c.member); }}}
#define I64(key, member) {key, {[](RunConfig& c, const json& v) { c.member = as_integer(v); }, [](const RunConfig& c) { return json(c.member); }}}
#define U64(key, member) {key, {[](RunConfig& c, const json& v) { c.member = as_unsigned(v); }, [](const RunConfig& c) { return json(c.member); }}}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = {
      NUM("ring_radius", geometry.ring_radius),
      NUM("lane_width", geometry.lane_width),
      NUM("sample_step", geometry.sample_step),
      {"legs",
       {[](RunConfig& c, const json& v) { c.geometry.legs = as_legs(v); },
        [](const RunConfig& c) {
          json a = json::array();
          for (const auto& l : c.geometry.legs) a.push_back({{"angle_deg", l.angle_deg}, {"length", l.length}});
          return a;
        }}},
      NUM("dt", env.dt),
      INT("max_vehicles", env.max_vehicles),
      NUM("v_max", env.v_max),
      NUM("accel", env.accel),
      NUM("brake", env.brake),
      NUM("episode_time_limit", env.episode_time_limit),
      NUM("target_speed_min", env.target_speed_min),
      NUM("target_speed_max", env.target_speed_max),
      {"speed_cap_mode",
       {[](RunConfig& c, const json& v) { c.env.speed_cap_mode = as_cap_mode(v); },
        [](const RunConfig& c) {
          return json(c.env.speed_cap_mode == SpeedCapMode::GlobalCap ? "global_cap" : "target_cap");
        }}},
      U64("seed", env.seed),
      NUM("spawn_clearance", env.spawn_clearance),
      NUM("vehicle_length", env.vehicle_length),
      NUM("vehicle_width", env.vehicle_width),
      NUM("distance_norm", env.distance_norm),
      NUM("k_y", reward.k_y),
      NUM("k_s", reward.k_s),
      NUM("k_p", reward.k_p),
      NUM("k_n", reward.k_n),
      NUM("terminal_goal", reward.terminal_goal),
      NUM("terminal_crash", reward.terminal_crash),
      NUM("terminal_timeout", reward.terminal_timeout),
      NUM("lookahead_horizon", reward.lookahead_horizon),
      INT("n_steps", rl.n_steps),
      NUM("gamma", rl.gamma),
      INT("action_repeat", rl.action_repeat),
      NUM("entropy_coef", rl.entropy_coef),
      NUM("value_loss_coef", rl.value_loss_coef),
      INT("n_env", trainer.n_env),
      INT("n_ag", trainer.n_ag),
      NUM("lr", trainer.rmsprop.lr),
      NUM("rmsprop_decay", trainer.rmsprop.decay),
      NUM("rmsprop_eps", trainer.rmsprop.eps),
      I64("total_episodes", trainer.total_episodes),
      I64("checkpoint_every", trainer.checkpoint_every),
      I64("max_env_steps", trainer.max_env_steps),
      {"executor",
       {[](RunConfig& c, const json& v) { c.trainer.executor = as_executor(v); },
        [](const RunConfig& c) {
          return json(c.trainer.executor == Executor::Threaded ? "threaded" : "sequential");
        }}},
      {"sweep_parameter",
       {[](RunConfig& c, const json& v) { c.sweep.parameter = as_sweep_parameter(v); },
        [](const RunConfig& c) { return json(std::string(to_string(c.sweep.parameter))); }}},
      {"sweep_values",
       {[](RunConfig& c, const json& v) { c.sweep.values = as_number_list(v); },
        [](const RunConfig& c) { return json(c.sweep.values); }}},
      INT("episodes_per_value", sweep.episodes_per_value),
      INT("action_repeat_eval", sweep.action_repeat_eval),
      {"checkpoint",
       {[](RunConfig& c, const json& v) { c.sweep.checkpoint = as_string(v); },
        [](const RunConfig& c) { return json(c.sweep.checkpoint.string()); }}},
      U64("sweep_seed", sweep.seed),
      INT("probe_entry", sweep.probe_entry),
      INT("probe_exit", sweep.probe_exit),
      I64("warmup_ticks", sweep.warmup_ticks),
      NUM("probe_target_speed", sweep.probe_target_speed),
      NUM("background_aggressiveness", sweep.background_aggressiveness),
      I64("validation_env_steps", validation_env_steps),
      I64("validation_eval_every", validation_eval_every),
      {"output_dir",
       {[](RunConfig& c, const json& v) { c.output_dir = as_string(v); },
        [](const RunConfig& c) { return json(c.output_dir.string()); }}},
  };
  return fields;
}

#undef NUM
#undef INT
#undef I64
#undef U64

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what(), line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  if (!doc.is_object()) throw ConfigError("top-level value must be an object", 1);

  RunConfig cfg;
  const auto& fields = schema();
  for (const auto& [key, value] : doc.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown key '" + key + "'", line_of_key(text, key));
    try {
      it->second.set(cfg, value);
    } catch (const TypeError& e) {
      throw ConfigError("key '" + key + "': " + e.what(), line_of_key(text, key));
    }
  }
  if (cfg.sweep.parameter == SweepParameter::TargetSpeed && !doc.contains("sweep_values"))
    cfg.sweep.values = {4.0, 5.0, 6.0, 7.0, 8.0, 9.0};
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what(), blamed_line(text, doc, e.what()));
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + file.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json doc = json::object();
  for (const auto& [key, field] : schema()) doc[key] = field.get(cfg);
  return doc.dump(2) + "\n";
}

}  // namespace roundabout
