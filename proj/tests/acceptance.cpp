// Acceptance checks. Each criterion prints one "PASS|FAIL <name>: detail" line.
//   mtpl_acceptance                 run every criterion
//   mtpl_acceptance --only <name>   run one criterion

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "helpers.hpp"
#include "mtpl/agent.hpp"
#include "mtpl/analysis.hpp"
#include "mtpl/harness.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/teacher.hpp"
#include "oracles.hpp"

using namespace mtpl;
using reward::PreferenceRecord;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PreferenceRecord rec(Segment a, Segment b, double y) {
  return PreferenceRecord{std::move(a), std::move(b), y, reward::Source::sim};
}

// Probe member: per-step prediction tanh(obs[0]).
nn::FeedforwardNet probe_member() {
  nn::FeedforwardNet m({2, 1}, nn::Activation::relu, nn::OutputKind::scaled_tanh, 1.0);
  m.params()[0] = 1.0;
  return m;
}

Segment probe_segment(std::vector<double> per_step) {
  Segment s;
  s.obs_dim = 1;
  s.act_dim = 1;
  for (double r : per_step) {
    s.obs.push_back(std::atanh(r));
    s.actions.push_back(0.0);
    s.true_rewards.push_back(0.0);
  }
  return s;
}

std::vector<PreferenceRecord> random_records(Rng& rng, std::size_t n, bool equal) {
  std::vector<PreferenceRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = equal ? 0.5 : (rng.uniform() < 0.5 ? 0.0 : 1.0);
    out.push_back(rec(testing::random_segment(rng, 4, 3, 2, 2 * i),
                      testing::random_segment(rng, 4, 3, 2, 2 * i + 1), y));
  }
  return out;
}

Verdict cross_entropy_sanity() {
  // Identical per-step predictions give equal sums, so P = 1/2 for every record.
  const auto m = probe_member();
  std::vector<PreferenceRecord> batch;
  for (int i = 0; i < 8; ++i) {
    const double y = i % 2 ? 1.0 : 0.0;
    batch.push_back(rec(probe_segment({0.3, -0.1, 0.2}), probe_segment({0.2, 0.3, -0.1}), y));
  }
  const double loss = reward::explicit_loss(m, batch);
  const double err = std::abs(loss - std::log(2.0));
  return {err <= 1e-9, fmt("explicit_loss = %.12f", loss) + fmt(", |loss - ln 2| = %.3g", err)};
}

Verdict equal_loss_exactness() {
  const auto m = probe_member();
  // sums 2.0 and 1.0 over four steps
  const std::vector<PreferenceRecord> a{
      rec(probe_segment({0.5, 0.5, 0.5, 0.5}), probe_segment({0.25, 0.25, 0.25, 0.25}), 0.5)};
  const double l1 = reward::equal_loss(m, a);
  const auto s = probe_segment({0.1, -0.7, 0.4});
  const std::vector<PreferenceRecord> b{rec(s, s, 0.5)};
  const double l0 = reward::equal_loss(m, b);
  const bool ok = std::abs(l1 - 1.0) <= 1e-12 && l0 == 0.0;
  return {ok, fmt("sums (2, 1) -> %.15f", l1) + fmt(", identical -> %g", l0)};
}

Verdict mtpl_reduction() {
  Rng rng(101);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    reward::RewardEnsemble ens(3, 2, 1, {8, 8}, rng);
    const auto ppd = random_records(rng, 1 + trial % 7, false);
    const auto epd = random_records(rng, trial % 5, true);
    const double total = reward::mtpl_loss(ens.member(0), ppd, epd, {1.0, 0.0}).total;
    const double ex = reward::explicit_loss(ens.member(0), ppd);
    if (std::memcmp(&total, &ex, sizeof(double)) != 0) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 batches differ bitwise"};
}

Verdict threshold_formula() {
  const double d = teacher::equal_threshold(0.1, 500.0, 50, 1000);
  bool exact = d == 2.5;
  // Monotonicity in delta: once a pair is equal it stays equal for every
  // larger threshold, and explicit labels never flip direction.
  Rng rng(102);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    Segment a, b;
    a.true_return = rng.uniform(-10, 10);
    b.true_return = rng.uniform() < 0.05 ? a.true_return : rng.uniform(-10, 10);
    const double d1 = rng.uniform(0, 5);
    const double d2 = d1 + rng.uniform(0, 5);
    const double y1 = teacher::sim_label(a, b, d1);
    const double y2 = teacher::sim_label(a, b, d2);
    if (y1 == 0.5 && y2 != 0.5) ++violations;
    if (y2 != 0.5 && y1 != y2) ++violations;
  }
  return {exact && violations == 0,
          fmt("equal_threshold(0.1, 500, 50, 1000) = %.17g", d) + ", " +
              std::to_string(violations) + " monotonicity violations in 10000 pairs"};
}

std::vector<replay::Transition> random_batch(Rng& rng, std::size_t n) {
  std::vector<replay::Transition> b(n);
  for (auto& t : b) {
    t.obs = testing::random_vector(rng, 3);
    t.action = testing::random_vector(rng, 2, -0.9, 0.9);
    t.next_obs = testing::random_vector(rng, 3);
    t.reward_hat = rng.uniform(-1, 1);
    t.done = rng.uniform() < 0.2;
  }
  return b;
}

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(103);
  double worst_mtpl = 0, worst_critic = 0, worst_policy = 0;
  for (int trial = 0; trial < 20; ++trial) {
    reward::RewardEnsemble ens(3, 2, 1, {6, 6}, rng);
    testing::randomize_params(ens.member(0), rng);
    const auto& m = ens.member(0);
    const auto ppd = random_records(rng, 3, false);
    const auto epd = random_records(rng, 2, true);
    const reward::MtplWeights w{1.0, rng.uniform(0.0, 1.0)};
    std::vector<double> g(m.params().size(), 0.0);
    reward::mtpl_loss_grad(m, ppd, epd, w, g);
    const auto fd = nn::finite_difference_gradient(
        [&](std::span<const double> p) {
          auto copy = m;
          std::copy(p.begin(), p.end(), copy.params().begin());
          return reward::mtpl_loss(copy, ppd, epd, w).total;
        },
        m.params());
    worst_mtpl = std::max(worst_mtpl, nn::max_relative_error(g, fd));
  }
  agent::AgentConfig cfg;
  cfg.hidden = {8, 8};
  for (int trial = 0; trial < 20; ++trial) {
    agent::ActorCritic ac(3, 2, cfg, rng);
    testing::randomize_params(ac.q1(), rng);
    testing::randomize_params(ac.q2(), rng);
    const auto batch = random_batch(rng, 6);
    const auto targets = ac.critic_target(batch, rng);
    std::vector<double> g1(ac.q1().params().size(), 0.0), g2(ac.q2().params().size(), 0.0);
    ac.critic_loss(batch, targets, g1, g2);
    const auto fd1 = nn::finite_difference_gradient(
        [&](std::span<const double> p) {
          auto copy = ac;
          std::copy(p.begin(), p.end(), copy.q1().params().begin());
          return copy.critic_loss(batch, targets);
        },
        ac.q1().params());
    const auto fd2 = nn::finite_difference_gradient(
        [&](std::span<const double> p) {
          auto copy = ac;
          std::copy(p.begin(), p.end(), copy.q2().params().begin());
          return copy.critic_loss(batch, targets);
        },
        ac.q2().params());
    worst_critic = std::max({worst_critic, nn::max_relative_error(g1, fd1),
                             nn::max_relative_error(g2, fd2)});
  }
  for (int trial = 0; trial < 20; ++trial) {
    agent::ActorCritic ac(3, 2, cfg, rng);
    testing::randomize_params(ac.policy(), rng);
    const auto batch = random_batch(rng, 5);
    std::vector<double> noise(10);
    for (auto& x : noise) x = rng.normal();
    std::vector<double> g(ac.policy().params().size(), 0.0);
    ac.policy_loss(batch, noise, g);
    const auto fd = nn::finite_difference_gradient(
        [&](std::span<const double> p) {
          auto copy = ac;
          std::copy(p.begin(), p.end(), copy.policy().params().begin());
          return copy.policy_loss(batch, noise);
        },
        ac.policy().params());
    worst_policy = std::max(worst_policy, nn::max_relative_error(g, fd));
  }
  const double secs = elapsed_s(t0);
  const bool ok = worst_mtpl < 1e-4 && worst_critic < 1e-4 && worst_policy < 1e-4 && secs < 30;
  return {ok, fmt("max rel err mtpl %.3g", worst_mtpl) + fmt(", critic %.3g", worst_critic) +
                  fmt(", policy %.3g", worst_policy) + fmt(", %.2f s", secs)};
}

Verdict planted_reward_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(104);
  const std::size_t obs = 3, act = 1, len = 10;
  const auto w = testing::random_vector(rng, obs + act);
  auto planted = [&](std::span<const double> o, std::span<const double> a) {
    double r = 0.0;
    for (std::size_t i = 0; i < obs; ++i) r += w[i] * o[i];
    for (std::size_t i = 0; i < act; ++i) r += w[obs + i] * a[i];
    return r;
  };
  std::vector<SegmentPair> pairs;
  std::vector<double> gaps;
  for (int i = 0; i < 500; ++i) {
    SegmentPair p{testing::random_segment(rng, len, obs, act, 2 * i),
                  testing::random_segment(rng, len, obs, act, 2 * i + 1)};
    for (Segment* s : {&p.first, &p.second}) {
      s->true_return = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        s->true_rewards[t] = planted(s->obs_at(t), s->action_at(t));
        s->true_return += s->true_rewards[t];
      }
    }
    gaps.push_back(std::abs(p.first.true_return - p.second.true_return));
    pairs.push_back(std::move(p));
  }
  // delta at the 30th percentile of |gap| gives about 30% equal labels
  auto sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  const double delta = sorted[150];
  reward::PreferenceDatasets data;
  for (auto& p : pairs) {
    const double y = teacher::sim_label(p.first, p.second, delta);
    data.add(rec(std::move(p.first), std::move(p.second), y));
  }
  reward::RewardEnsemble ens(obs, act, 3, {32, 32}, rng);
  reward::train_reward(ens, data, {1.0, 0.05}, {50, 32, 1e-3}, rng);
  std::vector<double> learned, truth;
  for (int i = 0; i < 1000; ++i) {
    const auto o = testing::random_vector(rng, obs);
    const auto a = testing::random_vector(rng, act);
    learned.push_back(reward::predict_step_reward(ens, o, a));
    truth.push_back(planted(o, a));
  }
  const double r = analysis::pearson(learned, truth);
  const double secs = elapsed_s(t0);
  const double eq = static_cast<double>(data.epd.size()) / data.size();
  return {r >= 0.9 && secs < 60,
          fmt("pearson %.4f on 1000 held-out pairs", r) + fmt(", equal share %.2f", eq) +
              fmt(", %.1f s", secs)};
}

std::string directional_config_path;

Verdict directional_mtpl_effect() {
  auto config = harness::load_config(directional_config_path);
  config.teacher.alpha = 0.1;
  config.feedback_budget = 100;
  config.env = envs::EnvName::point_mass_easy;
  harness::RunOptions opts;
  opts.write_files = false;
  double mean_mtpl = 0, mean_base = 0, gap_before = 0, gap_after = 0, worst_seed_s = 0;
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::ostringstream per_seed;
  for (auto seed : seeds) {
    for (double ae : {0.05, 0.0}) {
      auto c = config;
      c.weights.alpha_equal = ae;
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = harness::run_experiment(c, seed, opts);
      worst_seed_s = std::max(worst_seed_s, elapsed_s(t0));
      if (ae > 0) {
        mean_mtpl += r.final_eval.mean / seeds.size();
        gap_before += r.epd_gap_before.value_or(0.0) / seeds.size();
        gap_after += r.epd_gap_after.value_or(0.0) / seeds.size();
      } else {
        mean_base += r.final_eval.mean / seeds.size();
      }
      per_seed << (ae > 0 ? " mtpl" : " base") << seed << '=' << fmt("%.1f", r.final_eval.mean);
    }
  }
  const double drop = gap_before > 0 ? 1.0 - gap_after / gap_before : 0.0;
  const bool ok = mean_mtpl > mean_base && drop >= 0.5 && worst_seed_s <= 600;
  return {ok, fmt("mean eval mtpl %.2f", mean_mtpl) + fmt(" vs base %.2f", mean_base) +
                  fmt(", EPD gap %.3f", gap_before) + fmt(" -> %.3f", gap_after) +
                  fmt(" (drop %.1f%%)", 100 * drop) + fmt(", slowest run %.0f s;", worst_seed_s) +
                  per_seed.str()};
}

// Published gain rows: baseline means, MTPL means and printed gains per task.
struct GainRow {
  const char* method;
  double base[10];
  double mtpl[10];
  double printed[10];
};

const GainRow kTable[] = {
    {"PEBBLE",
     {1.25, 584.82, 0.17, 538.10, 60.18, 563.12, 357.46, 513.48, 454.33, 921.54},
     {677.35, 1000.00, 20.32, 650.98, 62.80, 705.92, 628.94, 535.18, 559.24, 953.35},
     {53915, 70.99, 11860, 20.98, 4.35, 25.36, 75.95, 1.98, 23.09, 3.45}},
    {"RUNE",
     {1.14, 306.34, 2.99, 632.70, 86.46, 619.02, 485.34, 553.66, 515.58, 939.42},
     {165.28, 835.10, 15.45, 698.36, 102.96, 670.16, 493.62, 649.42, 598.11, 957.98},
     {14322, 172.61, 416.75, 10.38, 19.08, 8.26, 1.71, 17.30, 16.00, 1.98}},
    {"MRN",
     {1.61, 589.66, 3.86, 661.66, 54.76, 615.41, 393.58, 717.30, 498.39, 909.86},
     {718.27, 807.98, 20.38, 946.20, 97.62, 775.44, 711.96, 753.40, 614.90, 934.91},
     {44513, 37.02, 428.30, 43.00, 78.27, 26.00, 80.89, 5.03, 23.38, 2.75}},
    {"SeqRank",
     {0.84, 681.06, 27.78, 771.96, 69.94, 891.94, 760.24, 600.44, 572.53, 887.68},
     {414.21, 1000.0, 43.41, 823.58, 83.34, 915.44, 775.20, 672.52, 613.04, 924.39},
     {49210, 40.83, 50.25, 6.69, 19.16, 2.63, 1.98, 12.00, 7.08, 4.14}},
};

Verdict gain_arithmetic() {
  const double g1 = analysis::gain(584.82, 1000.00);
  const double g2 = analysis::gain(357.46, 628.94);
  bool ok = std::abs(g1 - 70.99) <= 0.01 && std::abs(g2 - 75.95) <= 0.01;
  std::string detail = fmt("gain(584.82, 1000) = %.4f", g1) + fmt(", gain(357.46, 628.94) = %.4f", g2);
  int rows = 0, off = 0;
  std::string misses;
  for (const auto& row : kTable) {
    for (int task = 0; task < 10; ++task) {
      if (row.base[task] <= 10.0) continue;
      ++rows;
      const double g = analysis::gain(row.base[task], row.mtpl[task]);
      if (std::abs(g - row.printed[task]) > 0.5) {
        ++off;
        misses += std::string(" ") + row.method + " task " + std::to_string(task + 1) +
                  fmt(" computed %.2f", g) + fmt(" printed %.2f;", row.printed[task]);
      }
    }
  }
  ok = ok && off == 0;
  detail += "; " + std::to_string(rows - off) + "/" + std::to_string(rows) +
            " gain-column rows within 0.5" + (off ? ":" + misses : "");
  return {ok, detail};
}

Verdict correlation_oracles() {
  Rng rng(105);
  double worst_p = 0, worst_s = 0;
  for (int i = 0; i < 1000; ++i) {
    auto x = testing::random_vector(rng, 20);
    auto y = testing::random_vector(rng, 20);
    // some instances get ties
    if (i % 3 == 0) {
      for (auto& v : x) v = std::round(v * 3.0);
      for (auto& v : y) v = std::round(v * 3.0);
    }
    worst_p = std::max(worst_p, std::abs(analysis::pearson(x, y) - oracle::pearson(x, y)));
    worst_s = std::max(worst_s, std::abs(analysis::spearman(x, y) - oracle::spearman(x, y)));
  }
  // hand-worked tie case: ranks of {1, 2, 2, 3} are {1, 2.5, 2.5, 4}
  const std::vector<double> tx{1, 2, 2, 3}, ty{1, 3, 2, 4};
  const double tie = analysis::spearman(tx, ty);
  const double tie_oracle = oracle::pearson({1, 2.5, 2.5, 4}, {1, 3, 2, 4});
  const bool ok = worst_p < 1e-12 && worst_s < 1e-12 && std::abs(tie - tie_oracle) < 1e-12;
  return {ok, fmt("max |pearson diff| %.3g", worst_p) + fmt(", max |spearman diff| %.3g", worst_s) +
                  fmt(", tie case %.12f", tie) + fmt(" vs %.12f", tie_oracle)};
}

Verdict equal_proportion() {
  // Frozen corpus: 1000 segment pairs from random-action point_mass rollouts.
  auto buf = testing::point_mass_buffer(20000, 106);
  Rng rng(107);
  std::vector<SegmentPair> corpus;
  for (int i = 0; i < 1000; ++i) {
    corpus.push_back({buf.sample_segment(50, rng), buf.sample_segment(50, rng)});
  }
  const double avgret = 50.0;
  bool exact = true, monotone = true;
  double prev = -1.0;
  std::string detail;
  for (double alpha : {0.0, 0.05, 0.1, 0.2}) {
    teacher::TeacherConfig tc;
    tc.alpha = alpha;
    tc.len_seg = 50;
    tc.len_env = 200;
    teacher::Teacher t(tc);
    t.observe_episode_return(avgret);
    const auto recs = t.request_labels(corpus, "point_mass_easy", std::chrono::milliseconds(0));
    const double p = analysis::equal_proportion(recs);
    std::size_t recount = 0;
    const double delta = alpha * avgret * 50 / 200;
    for (const auto& pair : corpus) {
      const double gap = std::abs(pair.first.true_return - pair.second.true_return);
      recount += gap < delta || gap == 0.0;
    }
    exact = exact && p == static_cast<double>(recount) / 1000.0;
    monotone = monotone && p >= prev;
    prev = p;
    detail += fmt(" alpha %.2f", alpha) + fmt(" -> %.3f;", p);
  }
  return {exact && monotone, std::string(exact ? "matches recount" : "recount mismatch") +
                                 (monotone ? ", monotone:" : ", NOT monotone:") + detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  harness::ExperimentConfig c;
  c.episode_len = 100;
  c.total_env_steps = 1500;
  c.pretrain_steps = 400;
  c.feedback_budget = 30;
  c.queries_per_session = 10;
  c.steps_between_sessions = 300;
  c.segment_len = 25;
  c.reward_train.epochs = 5;
  c.reward_train.hidden = {8, 8};
  c.agent.hidden = {16, 16};
  c.agent.batch = 32;
  c.agent.replay_capacity = 5000;
  c.eval.every_steps = 500;
  c.eval.episodes = 2;
  c.alignment_samples = 200;
  const auto root = std::filesystem::temp_directory_path() / "mtpl_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    c.out_dir = (root / std::to_string(i)).string();
    harness::run_experiment(c, 7);
    csv[i] = slurp(std::filesystem::path(c.out_dir) / "seed_7" / "metrics.csv");
  }
  const bool ok = !csv[0].empty() && csv[0] == csv[1];
  return {ok, std::to_string(csv[0].size()) + " bytes, " + (ok ? "identical" : "different")};
}

struct Criterion {
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only;
  directional_config_path = MTPL_SOURCE_DIR "/configs/point_mass_mtpl.json";
  app.add_option("--only", only, "run a single criterion");
  app.add_option("--directional-config", directional_config_path,
                 "experiment config for the directional check");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {"cross_entropy_sanity", cross_entropy_sanity},
      {"equal_loss_exactness", equal_loss_exactness},
      {"mtpl_reduction", mtpl_reduction},
      {"threshold_formula", threshold_formula},
      {"gradient_suite", gradient_suite},
      {"planted_reward_recovery", planted_reward_recovery},
      {"directional_mtpl_effect", directional_mtpl_effect},
      {"gain_arithmetic", gain_arithmetic},
      {"correlation_oracles", correlation_oracles},
      {"equal_proportion", equal_proportion},
      {"determinism", determinism},
  };
  int failed = 0, ran = 0;
  for (const auto& c : all) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion: %s\n", only.c_str());
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
