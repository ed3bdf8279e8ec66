#include "roundabout/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

namespace roundabout {

void TrainerConfig::validate() const {
  if (n_env < 1) throw std::invalid_argument("n_env must be >= 1");
  if (n_ag < 1) throw std::invalid_argument("n_ag must be >= 1");
  if (total_episodes < 0) throw std::invalid_argument("total_episodes must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (max_env_steps < 0) throw std::invalid_argument("max_env_steps must be >= 0");
  rmsprop.validate();
}

void write_stats_header(std::ostream& out) { out << "episode,agent,outcome,cum_reward,mean_speed,steps\n"; }

void write_stats_row(std::ostream& out, const EpisodeStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g", s.cum_reward, s.mean_speed);
  out << s.episode << ',' << s.agent << ',' << to_string(s.outcome) << ',' << buf << ',' << s.steps << '\n';
}

namespace {

AgentStatus parse_outcome(const std::string& text) {
  for (AgentStatus s : {AgentStatus::Active, AgentStatus::ReachedGoal, AgentStatus::Crashed, AgentStatus::TimedOut})
    if (to_string(s) == text) return s;
  throw std::runtime_error("unknown outcome '" + text + "'");
}

}  // namespace

std::vector<EpisodeStats> read_stats_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != "episode,agent,outcome,cum_reward,mean_speed,steps")
    throw std::runtime_error(file.string() + ": missing stats header");
  std::vector<EpisodeStats> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[6];
    for (auto& x : f) std::getline(ss, x, ',');
    try {
      EpisodeStats s;
      s.episode = std::stoll(f[0]);
      s.agent = std::stoull(f[1]);
      s.outcome = parse_outcome(f[2]);
      s.cum_reward = std::stod(f[3]);
      s.mean_speed = std::stod(f[4]);
      s.steps = std::stoll(f[5]);
      rows.push_back(s);
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace roundabout
