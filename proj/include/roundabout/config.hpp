#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>


#include "roundabout/eval.hpp"
#include "roundabout/rl.hpp"
#include "roundabout/scenario.hpp"
#include "roundabout/traffic_env.hpp"
#include "roundabout/trainer.hpp"
#include "roundabout/validation_env.hpp"

namespace roundabout {

struct RunConfig {
  GeometryConfig geometry;
  EnvConfig env;
  RewardConfig reward;
  RLConfig rl;
  TrainerConfig trainer;
  SweepSpec sweep;
  std::int64_t validation_env_steps = 50000;
  std::int64_t validation_eval_every = 1000;
  std::filesystem::path output_dir = "out";

  RunConfig();
  /// Runs every sub-config's validate(); throws std::invalid_argument.
  void validate() const;
  /// Chain-MDP validation settings derived from this config.
  ValidationConfig validation() const;
};

/// line is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Strict parse of a flat JSON object; absent keys keep their defaults.
/// Throws ConfigError on missing file, bad syntax, unknown key, wrong type or
/// out-of-range value.
RunConfig parse_config(const std::filesystem::path& file);
RunConfig parse_config_text(const std::string& text);

/// Every key with its resolved value; parse_config_text(dump) reproduces the config.
std::string config_to_json(const RunConfig& cfg);

}  // namespace roundabout
