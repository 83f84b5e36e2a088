#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mtpl/reward_model.hpp"
#include "mtpl/segment.hpp"

namespace mtpl::teacher {

enum class Mode { sim, human };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct TeacherConfig {
  double alpha = 0.1;  // teacher_eps_equal
  int len_seg = 50;
  int len_env = 200;
  Mode mode = Mode::sim;
};

/// Running arithmetic mean of completed-episode true returns.
struct RunningReturnStats {
  std::size_t episode_count = 0;
  double return_sum = 0.0;
  double mean_return = 0.0;
};

RunningReturnStats update_running_return(RunningReturnStats stats, double episode_return);

/// delta_equal = alpha * avgret * len_seg / len_env. Throws when len_env <= 0.
double equal_threshold(double alpha, double avgret, int len_seg, int len_env);

/// Equal SimTeacher labelling rule. |R0 - R1| < delta gives 0.5, as does an
/// exact tie; otherwise 0 when seg0 has the larger true return, 1 when seg1 does.
double sim_label(const Segment& seg0, const Segment& seg1, double delta);

/// A label that came back from a human for pairs[pair_index].
struct HumanLabel {
  std::size_t pair_index = 0;
  double y = 0.0;
  std::string annotator;
};

/// Where human-mode queries go. Implemented by the label service.
class LabelChannel {
public:
  virtual ~LabelChannel() = default;
  virtual bool running() const = 0;
  /// Publishes the pairs and blocks until all are labelled or the deadline
  /// passes. Unlabelled pairs are dropped, never guessed.
  virtual std::vector<HumanLabel> collect(std::span<const SegmentPair> pairs,
                                          const std::string& env_name,
                                          std::chrono::milliseconds timeout) = 0;
};

/// Training progress pushed to observers (the label service status feed).
struct RunStatus {
  std::size_t env_step = 0;
  std::size_t sessions_done = 0;
  std::size_t budget_remaining = 0;
  bool has_eval = false;
  double recent_eval_return = 0.0;
};

class StatusSink {
public:
  virtual ~StatusSink() = default;
  virtual void on_status(const RunStatus& status) = 0;
};

/// Label source for feedback sessions. In sim mode labels come from
/// sim_label at the current delta; in human mode they come from a LabelChannel.
class Teacher {
public:
  explicit Teacher(TeacherConfig config, LabelChannel* channel = nullptr);

  const TeacherConfig& config() const { return config_; }
  const RunningReturnStats& stats() const { return stats_; }
  void observe_episode_return(double episode_return);
  double delta() const;

  std::vector<reward::PreferenceRecord> request_labels(std::span<const SegmentPair> pairs,
                                                       const std::string& env_name = "",
                                                       std::chrono::milliseconds timeout =
                                                           std::chrono::minutes(10));

  std::size_t dropped() const { return dropped_; }

private:
  TeacherConfig config_;
  LabelChannel* channel_;
  RunningReturnStats stats_;
  std::size_t dropped_ = 0;
};

}  // namespace mtpl::teacher
