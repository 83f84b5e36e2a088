#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "mtpl/reward_model.hpp"
#include "mtpl/rng.hpp"
#include "mtpl/segment.hpp"

namespace mtpl::replay {

struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  std::vector<double> next_obs;
  double reward_hat = 0.0;    // current reward-model prediction; the agent trains on this
  double true_reward = 0.0;   // ground truth, read only by teachers and evaluation
  bool done = false;          // terminal (no bootstrap); time-limit ends are not terminal
  std::uint64_t episode_id = 0;
  std::size_t step_index = 0;
};

/// Retained, consecutive run of one episode inside the buffer.
struct EpisodeSpan {
  std::uint64_t episode_id = 0;
  std::uint64_t first_global = 0;  // global index of the oldest retained step
  std::size_t first_step = 0;      // its step_index
  std::size_t length = 0;
};

/// FIFO ring buffer of transitions. Every pushed transition gets a global
/// index that is never reused; positions 0..size()-1 run oldest to newest.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  bool empty() const { return size_ == 0; }
  std::uint64_t total_pushed() const { return total_pushed_; }

  /// i-th oldest retained transition.
  const Transition& at(std::size_t i) const { return slots_[physical(i)]; }
  Transition& at(std::size_t i) { return slots_[physical(i)]; }
  std::uint64_t global_index(std::size_t i) const { return total_pushed_ - size_ + i; }

  const std::deque<EpisodeSpan>& episodes() const { return spans_; }

  /// n positions drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::vector<Transition> sample_batch(std::size_t n, Rng& rng) const;

  /// Number of length-L windows that stay inside one retained episode run.
  std::size_t count_windows(std::size_t length) const;

  /// Uniform over all eligible windows, so every valid segment is equally likely.
  Segment sample_segment(std::size_t length, Rng& rng) const;

  /// Same, restricted to the `recent` newest episodes that have an eligible window.
  Segment sample_recent_segment(std::size_t length, std::size_t recent, Rng& rng) const;

  /// Copies out the window that starts at a global index. Throws if the window
  /// is not fully retained or crosses an episode boundary.
  Segment extract_segment(std::uint64_t first_global, std::size_t length) const;

private:
  std::size_t physical(std::size_t i) const { return (head_ + i) % slots_.size(); }
  Segment sample_from_spans(std::size_t length, std::size_t first_span, Rng& rng) const;

  std::vector<Transition> slots_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::uint64_t total_pushed_ = 0;
  std::deque<EpisodeSpan> spans_;
};

/// Rewrites every stored reward_hat with the ensemble mean prediction.
/// Parallel over transitions (OpenMP). Returns the number of transitions visited.
std::size_t relabel_all(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble);

/// Single-threaded reference for relabel_all; produces identical values.
std::size_t relabel_all_serial(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble);

}  // namespace mtpl::replay
