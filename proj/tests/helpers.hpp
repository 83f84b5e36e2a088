#pragma once

#include <cstddef>
#include <vector>

#include "mtpl/agent.hpp"
#include "mtpl/env.hpp"
#include "mtpl/nn.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/rng.hpp"
#include "mtpl/segment.hpp"

namespace testing {

inline std::vector<double> random_vector(mtpl::Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Segment with random observations/actions and the given per-step true rewards.
inline mtpl::Segment random_segment(mtpl::Rng& rng, std::size_t length, std::size_t obs_dim,
                                    std::size_t act_dim, std::uint64_t id = 0) {
  mtpl::Segment s;
  s.segment_id = id;
  s.episode_id = id;
  s.obs_dim = obs_dim;
  s.act_dim = act_dim;
  s.obs = random_vector(rng, length * obs_dim);
  s.actions = random_vector(rng, length * act_dim);
  s.true_rewards = random_vector(rng, length, 0.0, 1.0);
  s.true_return = 0.0;
  for (double r : s.true_rewards) s.true_return += r;
  return s;
}

inline mtpl::Segment with_return(mtpl::Segment s, double ret) {
  s.true_return = ret;
  return s;
}

// Buffer of random-action point_mass episodes.
inline mtpl::replay::ReplayBuffer point_mass_buffer(std::size_t steps, std::uint64_t seed = 3,
                                                    std::size_t capacity = 0) {
  auto env = mtpl::envs::make_env(mtpl::envs::EnvName::point_mass_easy);
  mtpl::Rng rng(seed);
  mtpl::replay::ReplayBuffer buf(capacity == 0 ? steps : capacity);
  for (auto& t : mtpl::agent::pretrain_collect(*env, steps, rng)) buf.push(std::move(t));
  return buf;
}

// Random weights and biases. Zero biases put ReLU units exactly on the kink
// when every input to a layer is zero, which finite differences cannot handle.
inline void randomize_params(mtpl::nn::FeedforwardNet& net, mtpl::Rng& rng, double scale = 0.5) {
  for (auto& p : net.params()) p = rng.uniform(-scale, scale);
}

inline void zero_params(mtpl::nn::FeedforwardNet& net) {
  for (auto& p : net.params()) p = 0.0;
}

}  // namespace testing
