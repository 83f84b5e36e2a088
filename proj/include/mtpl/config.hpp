#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpl/env.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/sampler.hpp"
#include "mtpl/teacher.hpp"

namespace mtpl::harness {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct TeacherSettings {
  double alpha = 0.1;
  teacher::Mode mode = teacher::Mode::sim;
  double deadline_s = 300.0;  // per human feedback session
  std::string bind = "127.0.0.1:8765";
};

struct RuneSettings {
  bool enabled = false;
  double beta0 = 0.05;
  double decay = 0.9999;
};

struct RewardSettings {
  int epochs = 50;
  std::size_t batch = 32;
  double lr = 3e-4;
  std::size_t ensemble_size = 3;
  std::vector<std::size_t> hidden{32, 32};
};

struct AgentSettings {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double entropy_coef = 0.1;
  double lr = 3e-4;
  std::size_t batch = 64;
  std::size_t replay_capacity = 100000;
};

struct EvalSettings {
  std::size_t every_steps = 5000;
  int episodes = 10;
};

/// Full description of one experiment. Serialised next to every run's results.
struct ExperimentConfig {
  envs::EnvName env = envs::EnvName::point_mass_easy;
  int episode_len = 200;
  std::vector<std::uint64_t> seeds{0};
  std::size_t total_env_steps = 100000;
  std::size_t pretrain_steps = 2000;
  std::size_t feedback_budget = 100;
  std::size_t queries_per_session = 10;
  std::size_t steps_between_sessions = 2000;
  std::size_t segment_len = 50;
  TeacherSettings teacher;
  reward::MtplWeights weights;
  sampler::Strategy sampler = sampler::Strategy::uniform;
  std::size_t disagreement_candidates = 4;
  RuneSettings rune;
  RewardSettings reward_train;
  AgentSettings agent;
  EvalSettings eval;
  std::size_t alignment_samples = 1000;
  std::string out_dir = "runs/default";
};

/// Parses a config object. Every key is optional (defaults above) but unknown
/// keys at any level are rejected. Calls validate() on the result.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

/// Throws ConfigError on inconsistent settings.
void validate(const ExperimentConfig& c);

/// Feedback sessions the schedule can hold: one right after pretraining, then
/// one every steps_between_sessions while env steps remain.
std::size_t session_slots(const ExperimentConfig& c);

}  // namespace mtpl::harness
