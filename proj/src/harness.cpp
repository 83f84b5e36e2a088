#include "mtpl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mtpl/agent.hpp"
#include "mtpl/analysis.hpp"
#include "mtpl/env.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/rng.hpp"
#include "mtpl/sampler.hpp"

namespace mtpl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v);
  } else {
    return std::to_string(*v);
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Rows share one env_step when several events land on it (an episode end, a
// feedback session and an evaluation can coincide).
class MetricsLog {
public:
  MetricsRow& at(std::size_t env_step) {
    if (rows_.empty() || rows_.back().env_step != env_step) {
      if (!rows_.empty() && rows_.back().env_step > env_step) {
        throw std::logic_error("metrics rows must have increasing env_step");
      }
      rows_.push_back(MetricsRow{});
      rows_.back().env_step = env_step;
    }
    return rows_.back();
  }
  std::vector<MetricsRow>& rows() { return rows_; }

private:
  std::vector<MetricsRow> rows_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string preferences_header() {
  return "session_id,seg0_id,seg0_episode,seg0_start,seg1_id,seg1_episode,seg1_start,y,source,"
         "true_return0,true_return1\n";
}

std::uint64_t resolve_seed(std::uint64_t seed) {
  if (const char* s = std::getenv("MTPL_SEED"); s != nullptr && *s != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw std::invalid_argument("MTPL_SEED is not an integer");
    return v;
  }
  return seed;
}

agent::AgentConfig agent_config(const ExperimentConfig& c) {
  agent::AgentConfig a;
  a.hidden = c.agent.hidden;
  a.gamma = c.agent.gamma;
  a.tau = c.agent.tau;
  a.entropy_coef = c.agent.entropy_coef;
  a.lr = c.agent.lr;
  a.batch_size = c.agent.batch;
  return a;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "env_step,episode_return_true,session_id,equal_count,explicit_count,dropped_count,"
         "reward_loss_total,reward_loss_explicit,reward_loss_equal,ppd_accuracy,"
         "epd_gap_before,epd_gap_after,eval_return_mean,eval_return_std\n";
  for (const auto& r : rows) {
    out << r.env_step << ',' << cell(r.episode_return_true) << ',' << cell(r.session_id) << ','
        << cell(r.equal_count) << ',' << cell(r.explicit_count) << ',' << cell(r.dropped_count)
        << ',' << cell(r.reward_loss_total) << ',' << cell(r.reward_loss_explicit) << ','
        << cell(r.reward_loss_equal) << ',' << cell(r.ppd_accuracy) << ','
        << cell(r.epd_gap_before) << ',' << cell(r.epd_gap_after) << ','
        << cell(r.eval_return_mean) << ',' << cell(r.eval_return_std) << '\n';
  }
  return out.str();
}

EvalResult evaluate_policy(const nn::FeedforwardNet& policy, envs::EnvName env_name,
                           int episode_len, int episodes, std::uint64_t seed) {
  auto env = envs::make_env(env_name, episode_len);
  const auto& spec = env->spec();
  if (policy.input_size() != spec.obs_dim) {
    throw nn::DimensionError("policy input", spec.obs_dim, policy.input_size());
  }
  if (policy.output_size() != 2 * spec.act_dim) {
    throw nn::DimensionError("policy output", 2 * spec.act_dim, policy.output_size());
  }
  if (episodes <= 0) throw std::invalid_argument("episodes must be positive");
  Rng rng(seed);
  EvalResult r;
  std::vector<double> action(spec.act_dim);
  for (int e = 0; e < episodes; ++e) {
    auto obs = env->reset(rng.next_u64());
    double ret = 0.0;
    while (!env->finished()) {
      const auto out = policy.forward(obs);
      for (std::size_t i = 0; i < spec.act_dim; ++i) action[i] = std::tanh(out[i]);
      auto step = env->step(action);
      ret += step.true_reward;
      obs = std::move(step.next_obs);
    }
    r.returns.push_back(ret);
  }
  const auto ms = analysis::mean_std(r.returns);
  r.mean = ms.mean;
  r.std = ms.std;
  return r;
}

EvalResult eval_policy(const std::string& checkpoint, envs::EnvName env, int episodes,
                       std::uint64_t seed, int episode_len) {
  return evaluate_policy(nn::load_checkpoint(checkpoint), env, episode_len, episodes, seed);
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed_in,
                         const RunOptions& options) {
  validate(config);
  const std::uint64_t seed = resolve_seed(seed_in);
  if (config.teacher.mode == teacher::Mode::human &&
      (options.channel == nullptr || !options.channel->running())) {
    throw std::runtime_error("human teacher mode needs a running label service");
  }

  Rng env_rng = Rng::substream(seed, "env");
  Rng policy_rng = Rng::substream(seed, "policy");
  Rng sampler_rng = Rng::substream(seed, "sampler");
  Rng reward_rng = Rng::substream(seed, "reward");
  Rng init_rng = Rng::substream(seed, "init");
  const std::uint64_t eval_seed = Rng::substream(seed, "eval").next_u64();

  auto env = envs::make_env(config.env, config.episode_len);
  const auto& spec = env->spec();
  const std::string env_name = envs::to_string(config.env);
  const std::size_t L = config.segment_len;

  reward::RewardEnsemble ensemble(spec.obs_dim, spec.act_dim, config.reward_train.ensemble_size,
                                  config.reward_train.hidden, init_rng, config.reward_train.lr);
  agent::ActorCritic ac(spec.obs_dim, spec.act_dim, agent_config(config), init_rng);
  replay::ReplayBuffer buffer(config.agent.replay_capacity);
  teacher::Teacher teach(
      teacher::TeacherConfig{config.teacher.alpha, static_cast<int>(L), config.episode_len,
                             config.teacher.mode},
      options.channel);
  reward::PreferenceDatasets data;
  const reward::RewardTrainConfig train_cfg{config.reward_train.epochs, config.reward_train.batch,
                                            config.reward_train.lr};
  const agent::RuneSchedule rune{config.rune.beta0, config.rune.decay, config.rune.enabled};

  RunResult result;
  result.seed = seed;
  MetricsLog log;
  std::ostringstream prefs;
  prefs << preferences_header();
  std::vector<double> gaps_before, gaps_after;

  std::size_t env_step = 0;
  std::uint64_t episode_id = 0;
  std::size_t labeled = 0;
  std::size_t sessions = 0;
  std::optional<double> last_eval;

  auto status = [&] {
    if (options.status == nullptr) return;
    teacher::RunStatus s;
    s.env_step = env_step;
    s.sessions_done = sessions;
    s.budget_remaining = config.feedback_budget - labeled;
    s.has_eval = last_eval.has_value();
    s.recent_eval_return = last_eval.value_or(0.0);
    options.status->on_status(s);
  };

  auto end_episode = [&](double ret) {
    teach.observe_episode_return(ret);
    result.episode_returns.push_back(ret);
    log.at(env_step).episode_return_true = ret;
  };

  // Pretraining: uniform random actions, rewards filled in by the first relabel.
  {
    auto transitions = agent::pretrain_collect(*env, config.pretrain_steps, env_rng, episode_id);
    double ret = 0.0;
    for (auto& t : transitions) {
      ret += t.true_reward;
      const bool last = t.step_index + 1 == static_cast<std::size_t>(config.episode_len);
      episode_id = t.episode_id + 1;
      buffer.push(std::move(t));
      ++env_step;
      if (last) {
        end_episode(ret);
        ret = 0.0;
      }
    }
  }
  // Stored rewards stay zero until the reward model has seen feedback.
  bool reward_trained = false;

  sampler::SeqRankState seq_state;

  auto run_session = [&] {
    const std::size_t n =
        std::min(config.queries_per_session, config.feedback_budget - labeled);
    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(std::llround(config.teacher.deadline_s * 1000.0)));
    const std::size_t dropped_before = teach.dropped();
    std::vector<reward::PreferenceRecord> records;
    if (config.sampler == sampler::Strategy::seqrank) {
      // One pair at a time so each label can move the anchor before the next draw.
      for (std::size_t q = 0; q < n; ++q) {
        auto draw = sampler::seqrank_pairs(buffer, 1, L, seq_state, sampler_rng);
        seq_state = draw.state;
        auto got = teach.request_labels(draw.batch.pairs, env_name, timeout);
        for (auto& r : got) {
          seq_state = sampler::seqrank_update(seq_state, r);
          records.push_back(std::move(r));
        }
      }
    } else {
      sampler::QueryBatch batch =
          config.sampler == sampler::Strategy::disagreement
              ? sampler::disagreement_pairs(buffer, n, L, ensemble, config.disagreement_candidates,
                                            sampler_rng)
              : sampler::uniform_pairs(buffer, n, L, sampler_rng);
      records = teach.request_labels(batch.pairs, env_name, timeout);
    }
    labeled += n;
    result.labels_requested += n;
    result.labels_received += records.size();

    MetricsRow& row = log.at(env_step);
    row.session_id = sessions;
    std::size_t eq = 0, ex = 0;
    std::vector<reward::PreferenceRecord> fresh_equal;
    for (const auto& r : records) {
      if (r.y == 0.5) fresh_equal.push_back(r);
    }
    for (auto& r : records) {
      (r.y == 0.5 ? eq : ex) += 1;
      prefs << sessions << ',' << r.seg0.segment_id << ',' << r.seg0.episode_id << ','
            << r.seg0.start_step << ',' << r.seg1.segment_id << ',' << r.seg1.episode_id << ','
            << r.seg1.start_step << ',' << fmt(r.y) << ',' << reward::to_string(r.source) << ','
            << fmt(r.seg0.true_return) << ',' << fmt(r.seg1.true_return) << '\n';
      data.add(std::move(r));
    }
    row.equal_count = eq;
    row.explicit_count = ex;
    row.dropped_count = teach.dropped() - dropped_before;

    if (data.size() > 0) {
      // Gap on this session's equal pairs, before and after training on them.
      std::optional<double> before;
      if (!fresh_equal.empty()) before = reward::mean_equal_gap(ensemble, fresh_equal);
      const auto stats = reward::train_reward(ensemble, data, config.weights, train_cfg, reward_rng);
      row.reward_loss_total = stats.epoch_total.back();
      row.reward_loss_explicit = stats.epoch_explicit.back();
      row.reward_loss_equal = stats.epoch_equal.back();
      if (!data.ppd.empty()) row.ppd_accuracy = stats.ppd_accuracy;
      if (before) {
        const double after = reward::mean_equal_gap(ensemble, fresh_equal);
        row.epd_gap_before = *before;
        row.epd_gap_after = after;
        gaps_before.push_back(*before);
        gaps_after.push_back(after);
      }
      replay::relabel_all(buffer, ensemble);
      reward_trained = true;
    }
    ++sessions;
    status();
  };

  auto run_eval = [&] {
    const auto ev = evaluate_policy(ac.policy(), config.env, config.episode_len,
                                    config.eval.episodes, eval_seed);
    auto& row = log.at(env_step);
    row.eval_return_mean = ev.mean;
    row.eval_return_std = ev.std;
    last_eval = ev.mean;
    result.final_eval = ev;
    status();
  };

  std::size_t next_session = config.pretrain_steps;
  auto obs = env->reset(env_rng.next_u64());
  double ep_return = 0.0;
  std::size_t step_index = 0;
  bool evaluated_at_end = false;
  status();

  while (env_step < config.total_env_steps) {
    if (labeled < config.feedback_budget && env_step >= next_session) {
      run_session();
      next_session += config.steps_between_sessions;
    }
    auto action = ac.act(obs, false, policy_rng);
    auto step = env->step(action);
    replay::Transition t;
    t.obs = obs;
    t.action = action;
    t.next_obs = step.next_obs;
    t.reward_hat = reward_trained ? reward::predict_step_reward(ensemble, obs, action) : 0.0;
    t.true_reward = step.true_reward;
    t.done = false;
    t.episode_id = episode_id;
    t.step_index = step_index++;
    buffer.push(std::move(t));
    ep_return += step.true_reward;
    ++env_step;
    obs = std::move(step.next_obs);
    if (step.done) {
      end_episode(ep_return);
      ep_return = 0.0;
      step_index = 0;
      ++episode_id;
      obs = env->reset(env_rng.next_u64());
    }

    if (buffer.size() >= config.agent.batch) {
      const auto batch = buffer.sample_batch(config.agent.batch, policy_rng);
      std::vector<double> bonus;
      if (rune.enabled) {
        bonus.reserve(batch.size());
        for (const auto& b : batch) {
          bonus.push_back(agent::rune_bonus(ensemble, b.obs, b.action, rune, env_step));
        }
      }
      ac.update(batch, policy_rng, bonus);
    }

    if (env_step % config.eval.every_steps == 0) {
      run_eval();
      evaluated_at_end = env_step == config.total_env_steps;
    }
  }
  if (!evaluated_at_end) run_eval();

  result.rows = std::move(log.rows());
  result.ppd_size = data.ppd.size();
  result.epd_size = data.epd.size();
  if (data.size() > 0) {
    result.equal_proportion = static_cast<double>(data.epd.size()) / data.size();
  }
  if (!gaps_before.empty()) {
    result.epd_gap_before = analysis::mean_std(gaps_before).mean;
    result.epd_gap_after = analysis::mean_std(gaps_after).mean;
  }
  if (!data.ppd.empty()) result.final_ppd_accuracy = reward::ppd_accuracy(ensemble, data.ppd);

  // Learned vs true reward on uniformly drawn buffer transitions.
  {
    Rng align_rng = Rng::substream(seed, "alignment");
    const auto idx = buffer.sample_indices(std::min(config.alignment_samples, buffer.size()),
                                           align_rng);
    for (auto i : idx) {
      const auto& tr = buffer.at(i);
      result.alignment_learned.push_back(reward::predict_step_reward(ensemble, tr.obs, tr.action));
      result.alignment_true.push_back(tr.true_reward);
    }
    try {
      result.pearson = analysis::pearson(result.alignment_learned, result.alignment_true);
    } catch (const analysis::UndefinedResult&) {
    }
  }

  if (options.write_files) {
    const fs::path dir = fs::path(config.out_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    json cfg = to_json(config);
    cfg["seed"] = seed;
    write_text(dir / "config.json", cfg.dump(2) + "\n");
    write_text(dir / "metrics.csv", metrics_csv(result.rows));
    write_text(dir / "preferences.csv", prefs.str());
    json summary{
        {"v", 1},
        {"env", env_name},
        {"seed", seed},
        {"sampler", sampler::to_string(config.sampler)},
        {"alpha_equal", config.weights.alpha_equal},
        {"teacher_alpha", config.teacher.alpha},
        {"teacher_mode", teacher::to_string(config.teacher.mode)},
        {"rune", config.rune.enabled},
        {"total_env_steps", config.total_env_steps},
        {"final_eval_mean", result.final_eval.mean},
        {"final_eval_std", result.final_eval.std},
        {"labels_requested", result.labels_requested},
        {"labels_received", result.labels_received},
        {"ppd_size", result.ppd_size},
        {"epd_size", result.epd_size},
        {"equal_proportion", opt_json(result.equal_proportion)},
        {"epd_gap_before", opt_json(result.epd_gap_before)},
        {"epd_gap_after", opt_json(result.epd_gap_after)},
        {"ppd_accuracy", opt_json(result.final_ppd_accuracy)},
        {"pearson", opt_json(result.pearson)},
        {"alignment_samples", result.alignment_true.size()},
    };
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    nn::save_checkpoint(ac.policy(), (dir / "policy.json").string());
    write_text(dir / "reward_ensemble.json", reward::to_json(ensemble).dump() + "\n");
    result.out_dir = dir.string();
  }
  return result;
}

std::string to_string(SweepAxis a) {
  return a == SweepAxis::alpha_equal ? "alpha_equal" : "teacher_alpha";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "alpha_equal") return SweepAxis::alpha_equal;
  if (s == "teacher_alpha") return SweepAxis::teacher_alpha;
  throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const RunOptions& options) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<SweepPoint> points;
  std::ostringstream csv;
  csv << "axis,value,seed,final_eval_mean,final_eval_std,equal_proportion,pearson\n";
  for (double v : values) {
    ExperimentConfig cfg = base;
    if (axis == SweepAxis::alpha_equal) {
      cfg.weights.alpha_equal = v;
    } else {
      cfg.teacher.alpha = v;
    }
    cfg.out_dir = (fs::path(base.out_dir) / (to_string(axis) + "_" + fmt(v))).string();
    validate(cfg);
    SweepPoint p{v, {}};
    for (auto s : cfg.seeds) {
      p.runs.push_back(run_experiment(cfg, s, options));
      const auto& r = p.runs.back();
      csv << to_string(axis) << ',' << fmt(v) << ',' << r.seed << ',' << fmt(r.final_eval.mean)
          << ',' << fmt(r.final_eval.std) << ',' << cell(r.equal_proportion) << ','
          << cell(r.pearson) << '\n';
    }
    points.push_back(std::move(p));
  }
  if (options.write_files) {
    fs::create_directories(base.out_dir);
    write_text(fs::path(base.out_dir) / ("sweep_" + to_string(axis) + ".csv"), csv.str());
  }
  return points;
}

std::string analyze_runs(const std::string& runs_dir) {
  if (!fs::is_directory(runs_dir)) throw std::runtime_error("not a directory: " + runs_dir);
  struct Entry {
    std::uint64_t seed;
    double mean, std;
    std::optional<double> equal_prop, pearson;
  };
  // (task, method) -> runs, ordered for stable output
  std::map<std::pair<std::string, std::string>, std::vector<Entry>> groups;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(runs_dir)) {
    if (e.is_regular_file() && e.path().filename() == "summary.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    const json s = json::parse(in);
    std::string method = s.at("sampler").get<std::string>();
    if (s.at("alpha_equal").get<double>() > 0) method += "+mtpl";
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!s.contains(k) || s.at(k).is_null()) return std::nullopt;
      return s.at(k).get<double>();
    };
    groups[{s.at("env").get<std::string>(), method}].push_back(
        Entry{s.at("seed").get<std::uint64_t>(), s.at("final_eval_mean").get<double>(),
              s.at("final_eval_std").get<double>(), opt("equal_proportion"), opt("pearson")});
  }

  std::ostringstream csv;
  csv << "task,method,seed,mean,std,gain,equal_prop,pearson\n";
  std::map<std::pair<std::string, std::string>, double> agg_mean;
  for (const auto& [key, runs] : groups) {
    std::vector<double> means;
    for (const auto& r : runs) means.push_back(r.mean);
    agg_mean[key] = analysis::mean_std(means).mean;
  }
  for (const auto& [key, runs] : groups) {
    const auto& [task, method] = key;
    std::vector<double> means, eq, pr;
    for (const auto& r : runs) {
      csv << task << ',' << method << ',' << r.seed << ',' << fmt(r.mean) << ',' << fmt(r.std)
          << ",," << cell(r.equal_prop) << ',' << cell(r.pearson) << '\n';
      means.push_back(r.mean);
      if (r.equal_prop) eq.push_back(*r.equal_prop);
      if (r.pearson) pr.push_back(*r.pearson);
    }
    const auto ms = analysis::mean_std(means);
    std::string gain_cell;
    const std::string suffix = "+mtpl";
    if (method.size() > suffix.size() && method.ends_with(suffix)) {
      const auto base = agg_mean.find({task, method.substr(0, method.size() - suffix.size())});
      if (base != agg_mean.end() && base->second != 0.0) {
        gain_cell = fmt(analysis::gain(base->second, ms.mean));
      }
    }
    csv << task << ',' << method << ",all," << fmt(ms.mean) << ',' << fmt(ms.std) << ','
        << gain_cell << ',' << (eq.empty() ? "" : fmt(analysis::mean_std(eq).mean)) << ','
        << (pr.empty() ? "" : fmt(analysis::mean_std(pr).mean)) << '\n';
  }
  write_text(fs::path(runs_dir) / "analysis.csv", csv.str());
  return csv.str();
}

}  // namespace mtpl::harness
