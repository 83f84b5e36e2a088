#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtpl/config.hpp"
#include "mtpl/nn.hpp"
#include "mtpl/teacher.hpp"

namespace mtpl::harness {

/// One line of metrics.csv. Fields that did not happen at this step stay empty.
struct MetricsRow {
  std::size_t env_step = 0;
  std::optional<double> episode_return_true;
  std::optional<std::size_t> session_id;
  std::optional<std::size_t> equal_count;
  std::optional<std::size_t> explicit_count;
  std::optional<std::size_t> dropped_count;
  std::optional<double> reward_loss_total;
  std::optional<double> reward_loss_explicit;
  std::optional<double> reward_loss_equal;
  std::optional<double> ppd_accuracy;
  std::optional<double> epd_gap_before;
  std::optional<double> epd_gap_after;
  std::optional<double> eval_return_mean;
  std::optional<double> eval_return_std;
};

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  std::vector<double> episode_returns;  // training episodes, true reward
  EvalResult final_eval;
  std::size_t labels_requested = 0;
  std::size_t labels_received = 0;
  std::size_t ppd_size = 0;
  std::size_t epd_size = 0;
  std::optional<double> equal_proportion;
  /// Mean |R_hat gap| on each session's new equal pairs, measured just before
  /// and just after that session's reward training, averaged over sessions.
  std::optional<double> epd_gap_before;
  std::optional<double> epd_gap_after;
  std::optional<double> final_ppd_accuracy;
  /// Pearson correlation of learned vs true reward on buffer samples; empty
  /// when undefined (e.g. constant predictions).
  std::optional<double> pearson;
  std::vector<double> alignment_learned;
  std::vector<double> alignment_true;
  std::string out_dir;  // where files were written; empty if not written
};

struct RunOptions {
  bool write_files = true;
  teacher::LabelChannel* channel = nullptr;  // required in human mode
  teacher::StatusSink* status = nullptr;
};

/// Runs one seed end to end. The MTPL_SEED environment variable, when set,
/// overrides `seed`. Files go to <config.out_dir>/seed_<seed>/.
RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RunOptions& options = {});

/// Deterministic-action rollouts of a policy network. The same seed always
/// evaluates on the same start states.
EvalResult evaluate_policy(const nn::FeedforwardNet& policy, envs::EnvName env, int episode_len,
                           int episodes, std::uint64_t seed);

/// Loads a policy checkpoint and evaluates it. Throws nn::DimensionError when
/// the checkpoint does not fit the environment.
EvalResult eval_policy(const std::string& checkpoint, envs::EnvName env, int episodes,
                       std::uint64_t seed, int episode_len = 200);

enum class SweepAxis { alpha_equal, teacher_alpha };
std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepPoint {
  double value = 0.0;
  std::vector<RunResult> runs;
};

/// Runs every seed for every value of one axis; writes runs under
/// <out_dir>/<axis>_<value>/ and a table to <out_dir>/sweep_<axis>.csv.
std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const RunOptions& options = {});

/// Scans a directory tree for summary.json files and writes
/// <runs_dir>/analysis.csv. Returns the CSV text.
std::string analyze_runs(const std::string& runs_dir);

std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace mtpl::harness
