#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mtpl {

/// A contiguous run of (obs, action) steps taken from one episode. This is the
/// unit a teacher compares. Per-step true rewards are kept for evaluation and
/// the simulated teacher only; they are never shown to a human.
struct Segment {
  std::uint64_t segment_id = 0;  // global buffer index of the first step
  std::uint64_t episode_id = 0;
  std::size_t start_step = 0;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<double> obs;      // length() * obs_dim, row per step
  std::vector<double> actions;  // length() * act_dim
  std::vector<double> true_rewards;
  double true_return = 0.0;  // cached sum of true_rewards

  std::size_t length() const { return true_rewards.size(); }
  std::span<const double> obs_at(std::size_t t) const {
    return std::span<const double>(obs).subspan(t * obs_dim, obs_dim);
  }
  std::span<const double> action_at(std::size_t t) const {
    return std::span<const double>(actions).subspan(t * act_dim, act_dim);
  }
};

/// Two equal-length segments shown together to a teacher.
struct SegmentPair {
  Segment first;
  Segment second;
};

}  // namespace mtpl
