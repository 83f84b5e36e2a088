// Command line front end: run, sweep, eval, analyze.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtpl/config.hpp"
#include "mtpl/harness.hpp"
#include "mtpl/label_service.hpp"

namespace {

using namespace mtpl;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> teacher;
  std::optional<double> alpha_equal;
  std::optional<std::string> sampler;
  std::optional<std::string> out;
  std::optional<std::string> bind;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Run only this seed");
  cmd->add_option("--teacher", o.teacher, "sim or human")->check(CLI::IsMember({"sim", "human"}));
  cmd->add_option("--alpha-equal", o.alpha_equal, "Weight of the equal-preference loss")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--sampler", o.sampler, "uniform, seqrank or disagreement")
      ->check(CLI::IsMember({"uniform", "seqrank", "disagreement"}));
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--bind", o.bind, "host:port for the label service (human teacher)");
}

harness::ExperimentConfig apply(harness::ExperimentConfig c, const Overrides& o) {
  if (o.seed) c.seeds = {*o.seed};
  if (o.teacher) c.teacher.mode = teacher::mode_from_string(*o.teacher);
  if (o.alpha_equal) c.weights.alpha_equal = *o.alpha_equal;
  if (o.sampler) c.sampler = sampler::strategy_from_string(*o.sampler);
  if (o.out) c.out_dir = *o.out;
  if (o.bind) c.teacher.bind = *o.bind;
  harness::validate(c);
  return c;
}

// Starts the label service when the config asks for human labels.
std::unique_ptr<label::LabelService> maybe_service(const harness::ExperimentConfig& c,
                                                   harness::RunOptions& opts) {
  if (c.teacher.mode != teacher::Mode::human) return nullptr;
  auto svc = std::make_unique<label::LabelService>(label::parse_bind(c.teacher.bind));
  svc->start();
  std::cerr << "label service listening on " << label::parse_bind(c.teacher.bind).address << ':'
            << svc->port() << "\n";
  opts.channel = svc.get();
  opts.status = svc.get();
  return svc;
}

void print_run(const harness::RunResult& r) {
  std::printf("seed %llu: final eval %.3f +- %.3f, labels %zu/%zu, equal %s, pearson %s -> %s\n",
              static_cast<unsigned long long>(r.seed), r.final_eval.mean, r.final_eval.std,
              r.labels_received, r.labels_requested,
              r.equal_proportion ? std::to_string(*r.equal_proportion).c_str() : "n/a",
              r.pearson ? std::to_string(*r.pearson).c_str() : "n/a", r.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based RL with explicit and equal preferences"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides run_o;
  auto* run = app.add_subcommand("run", "Train with preference feedback");
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  add_overrides(run, run_o);

  std::string sweep_config, axis;
  std::vector<double> values;
  Overrides sweep_o;
  auto* sw = app.add_subcommand("sweep", "Run one config across values of an axis");
  sw->add_option("--config", sweep_config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--axis", axis, "alpha_equal or teacher_alpha")
      ->required()
      ->check(CLI::IsMember({"alpha_equal", "teacher_alpha"}));
  sw->add_option("--values", values, "Comma separated values")->required()->delimiter(',');
  add_overrides(sw, sweep_o);

  std::string checkpoint, env_name;
  int episodes = 10;
  int episode_len = 200;
  std::uint64_t eval_seed = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a saved policy");
  ev->add_option("--checkpoint", checkpoint, "policy.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--env", env_name, "point_mass_easy or pendulum_swingup")->required();
  ev->add_option("--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  ev->add_option("--episode-len", episode_len, "Steps per episode")->check(CLI::PositiveNumber);
  ev->add_option("--seed", eval_seed, "Evaluation seed");

  std::string runs_dir;
  auto* an = app.add_subcommand("analyze", "Summarise finished runs");
  an->add_option("--runs", runs_dir, "Directory containing runs")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = apply(harness::load_config(config_path), run_o);
      harness::RunOptions opts;
      auto svc = maybe_service(cfg, opts);
      for (auto s : cfg.seeds) print_run(harness::run_experiment(cfg, s, opts));
    } else if (*sw) {
      auto cfg = apply(harness::load_config(sweep_config), sweep_o);
      harness::RunOptions opts;
      auto svc = maybe_service(cfg, opts);
      const auto points =
          harness::sweep(cfg, harness::sweep_axis_from_string(axis), values, opts);
      for (const auto& p : points) {
        std::printf("%s = %g\n", axis.c_str(), p.value);
        for (const auto& r : p.runs) print_run(r);
      }
    } else if (*ev) {
      const auto r = harness::eval_policy(checkpoint, envs::env_name_from_string(env_name),
                                          episodes, eval_seed, episode_len);
      std::printf("eval return %.6f +- %.6f over %d episodes\n", r.mean, r.std, episodes);
    } else if (*an) {
      std::cout << harness::analyze_runs(runs_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
