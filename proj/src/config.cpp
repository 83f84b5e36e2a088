#include "mtpl/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace mtpl::harness {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// Sizes must be non-negative integers; nlohmann would silently wrap -1.
void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_sizes(const json& j, const char* key, std::vector<std::size_t>& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array");
  std::vector<std::size_t> r;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() <= 0) {
      throw ConfigError(where + "." + key + ": expected positive integers");
    }
    r.push_back(e.get<std::size_t>());
  }
  out = std::move(r);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"env", "episode_len", "seeds", "total_env_steps", "pretrain_steps",
              "feedback_budget", "queries_per_session", "steps_between_sessions", "segment_len",
              "teacher", "weights", "sampler", "disagreement_candidates", "rune", "reward_train",
              "agent", "eval", "alignment_samples", "out_dir"});
  ExperimentConfig c;
  try {
    if (j.contains("env")) c.env = envs::env_name_from_string(j.at("env").get<std::string>());
    if (j.contains("sampler")) {
      c.sampler = sampler::strategy_from_string(j.at("sampler").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  read(j, "episode_len", c.episode_len, "config");
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array()) throw ConfigError("config.seeds: expected an array");
    c.seeds.clear();
    for (const auto& e : s) {
      if (!e.is_number_integer() || e.get<long long>() < 0) {
        throw ConfigError("config.seeds: expected non-negative integers");
      }
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  read_size(j, "total_env_steps", c.total_env_steps, "config");
  read_size(j, "pretrain_steps", c.pretrain_steps, "config");
  read_size(j, "feedback_budget", c.feedback_budget, "config");
  read_size(j, "queries_per_session", c.queries_per_session, "config");
  read_size(j, "steps_between_sessions", c.steps_between_sessions, "config");
  read_size(j, "segment_len", c.segment_len, "config");
  read_size(j, "disagreement_candidates", c.disagreement_candidates, "config");
  read_size(j, "alignment_samples", c.alignment_samples, "config");
  read(j, "out_dir", c.out_dir, "config");

  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    check_keys(t, "teacher", {"alpha", "mode", "deadline_s", "bind"});
    read(t, "alpha", c.teacher.alpha, "teacher");
    read(t, "deadline_s", c.teacher.deadline_s, "teacher");
    read(t, "bind", c.teacher.bind, "teacher");
    if (t.contains("mode")) {
      try {
        c.teacher.mode = teacher::mode_from_string(t.at("mode").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(std::string("teacher.mode: ") + e.what());
      }
    }
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    check_keys(w, "weights", {"alpha_explicit", "alpha_equal"});
    read(w, "alpha_explicit", c.weights.alpha_explicit, "weights");
    read(w, "alpha_equal", c.weights.alpha_equal, "weights");
  }
  if (j.contains("rune")) {
    const auto& r = j.at("rune");
    check_keys(r, "rune", {"enabled", "beta0", "decay"});
    read(r, "enabled", c.rune.enabled, "rune");
    read(r, "beta0", c.rune.beta0, "rune");
    read(r, "decay", c.rune.decay, "rune");
  }
  if (j.contains("reward_train")) {
    const auto& r = j.at("reward_train");
    check_keys(r, "reward_train", {"epochs", "batch", "lr", "ensemble_size", "hidden"});
    read(r, "epochs", c.reward_train.epochs, "reward_train");
    read_size(r, "batch", c.reward_train.batch, "reward_train");
    read(r, "lr", c.reward_train.lr, "reward_train");
    read_size(r, "ensemble_size", c.reward_train.ensemble_size, "reward_train");
    read_sizes(r, "hidden", c.reward_train.hidden, "reward_train");
  }
  if (j.contains("agent")) {
    const auto& a = j.at("agent");
    check_keys(a, "agent",
               {"hidden", "gamma", "tau", "entropy_coef", "lr", "batch", "replay_capacity"});
    read_sizes(a, "hidden", c.agent.hidden, "agent");
    read(a, "gamma", c.agent.gamma, "agent");
    read(a, "tau", c.agent.tau, "agent");
    read(a, "entropy_coef", c.agent.entropy_coef, "agent");
    read(a, "lr", c.agent.lr, "agent");
    read_size(a, "batch", c.agent.batch, "agent");
    read_size(a, "replay_capacity", c.agent.replay_capacity, "agent");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"every_steps", "episodes"});
    read_size(e, "every_steps", c.eval.every_steps, "eval");
    read(e, "episodes", c.eval.episodes, "eval");
  }
  validate(c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"env", envs::to_string(c.env)},
      {"episode_len", c.episode_len},
      {"seeds", c.seeds},
      {"total_env_steps", c.total_env_steps},
      {"pretrain_steps", c.pretrain_steps},
      {"feedback_budget", c.feedback_budget},
      {"queries_per_session", c.queries_per_session},
      {"steps_between_sessions", c.steps_between_sessions},
      {"segment_len", c.segment_len},
      {"teacher",
       {{"alpha", c.teacher.alpha},
        {"mode", teacher::to_string(c.teacher.mode)},
        {"deadline_s", c.teacher.deadline_s},
        {"bind", c.teacher.bind}}},
      {"weights",
       {{"alpha_explicit", c.weights.alpha_explicit}, {"alpha_equal", c.weights.alpha_equal}}},
      {"sampler", sampler::to_string(c.sampler)},
      {"disagreement_candidates", c.disagreement_candidates},
      {"rune", {{"enabled", c.rune.enabled}, {"beta0", c.rune.beta0}, {"decay", c.rune.decay}}},
      {"reward_train",
       {{"epochs", c.reward_train.epochs},
        {"batch", c.reward_train.batch},
        {"lr", c.reward_train.lr},
        {"ensemble_size", c.reward_train.ensemble_size},
        {"hidden", c.reward_train.hidden}}},
      {"agent",
       {{"hidden", c.agent.hidden},
        {"gamma", c.agent.gamma},
        {"tau", c.agent.tau},
        {"entropy_coef", c.agent.entropy_coef},
        {"lr", c.agent.lr},
        {"batch", c.agent.batch},
        {"replay_capacity", c.agent.replay_capacity}}},
      {"eval", {{"every_steps", c.eval.every_steps}, {"episodes", c.eval.episodes}}},
      {"alignment_samples", c.alignment_samples},
      {"out_dir", c.out_dir},
  };
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

std::size_t session_slots(const ExperimentConfig& c) {
  if (c.total_env_steps <= c.pretrain_steps) return 0;
  if (c.steps_between_sessions == 0) return 1;
  const std::size_t span = c.total_env_steps - c.pretrain_steps;
  return 1 + (span - 1) / c.steps_between_sessions;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.episode_len <= 0) fail("episode_len must be positive");
  if (c.seeds.empty()) fail("seeds must not be empty");
  if (c.segment_len == 0 || c.segment_len > static_cast<std::size_t>(c.episode_len)) {
    fail("segment_len must be in [1, episode_len]");
  }
  if (c.total_env_steps == 0) fail("total_env_steps must be positive");
  if (c.pretrain_steps > c.total_env_steps) fail("pretrain_steps exceeds total_env_steps");
  if (c.feedback_budget > 0) {
    if (c.queries_per_session == 0) fail("queries_per_session must be positive");
    if (c.feedback_budget % c.queries_per_session != 0) {
      fail("feedback_budget must be a multiple of queries_per_session");
    }
    if (c.pretrain_steps < 2 * c.segment_len) {
      fail("pretrain_steps must cover at least two segments before the first query");
    }
    const std::size_t needed = c.feedback_budget / c.queries_per_session;
    if (needed > session_slots(c)) {
      fail("feedback_budget needs " + std::to_string(needed) + " sessions but only " +
           std::to_string(session_slots(c)) + " fit in the run");
    }
  }
  if (c.teacher.alpha < 0) fail("teacher.alpha must be >= 0");
  if (c.teacher.deadline_s <= 0) fail("teacher.deadline_s must be positive");
  if (c.weights.alpha_explicit < 0 || c.weights.alpha_equal < 0) fail("weights must be >= 0");
  if (c.weights.alpha_explicit == 0 && c.weights.alpha_equal == 0) {
    fail("at least one loss weight must be positive");
  }
  if (c.sampler == sampler::Strategy::disagreement && c.disagreement_candidates == 0) {
    fail("disagreement_candidates must be positive");
  }
  if ((c.sampler == sampler::Strategy::disagreement || c.rune.enabled) &&
      c.reward_train.ensemble_size < 2) {
    fail("disagreement sampling and RUNE need ensemble_size >= 2");
  }
  if (c.reward_train.ensemble_size == 0) fail("reward_train.ensemble_size must be positive");
  if (c.reward_train.epochs <= 0) fail("reward_train.epochs must be positive");
  if (c.reward_train.batch == 0) fail("reward_train.batch must be positive");
  if (c.reward_train.lr <= 0 || c.agent.lr <= 0) fail("learning rates must be positive");
  if (c.agent.gamma < 0 || c.agent.gamma >= 1) fail("agent.gamma must be in [0, 1)");
  if (c.agent.tau <= 0 || c.agent.tau > 1) fail("agent.tau must be in (0, 1]");
  if (c.agent.entropy_coef < 0) fail("agent.entropy_coef must be >= 0");
  if (c.agent.batch == 0) fail("agent.batch must be positive");
  if (c.agent.replay_capacity < c.pretrain_steps || c.agent.replay_capacity == 0) {
    fail("agent.replay_capacity must hold the pretraining data");
  }
  if (c.eval.every_steps == 0) fail("eval.every_steps must be positive");
  if (c.eval.episodes <= 0) fail("eval.episodes must be positive");
  if (c.rune.decay <= 0 || c.rune.decay > 1) fail("rune.decay must be in (0, 1]");
}

}  // namespace mtpl::harness
