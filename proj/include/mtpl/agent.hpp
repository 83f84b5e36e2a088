#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtpl/env.hpp"
#include "mtpl/nn.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/rng.hpp"

namespace mtpl::agent {

struct AgentConfig {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double entropy_coef = 0.1;  // fixed temperature
  double lr = 3e-4;
  std::size_t batch_size = 64;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicySample {
  std::vector<double> action;  // tanh-squashed, each component in (-1, 1)
  double log_prob = 0.0;
};

struct UpdateLosses {
  double critic = 0.0;
  double policy = 0.0;
};

/// Soft actor-critic with twin critics, Polyak-averaged targets and a fixed
/// entropy coefficient. The policy head emits per-dimension mean and a raw
/// log-std that is squashed into [kLogStdMin, kLogStdMax].
class ActorCritic {
public:
  ActorCritic(std::size_t obs_dim, std::size_t act_dim, AgentConfig config, Rng& rng);

  const AgentConfig& config() const { return config_; }
  AgentConfig& config() { return config_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }

  nn::FeedforwardNet& policy() { return policy_; }
  const nn::FeedforwardNet& policy() const { return policy_; }
  nn::FeedforwardNet& q1() { return q1_; }
  nn::FeedforwardNet& q2() { return q2_; }
  const nn::FeedforwardNet& q1() const { return q1_; }
  const nn::FeedforwardNet& q2() const { return q2_; }
  nn::FeedforwardNet& q1_target() { return q1_target_; }
  nn::FeedforwardNet& q2_target() { return q2_target_; }
  const nn::FeedforwardNet& q1_target() const { return q1_target_; }
  const nn::FeedforwardNet& q2_target() const { return q2_target_; }

  /// Stochastic tanh(mu + sigma * eps) or deterministic tanh(mu).
  std::vector<double> act(std::span<const double> obs, bool deterministic, Rng& rng) const;

  /// Reparameterised sample for a given standard-normal noise vector.
  PolicySample sample_action(std::span<const double> obs, std::span<const double> noise) const;

  /// r_hat (+ bonus) + (1 - done) * gamma * (min target Q(s', a') - alpha * log pi(a'|s')).
  std::vector<double> critic_target(std::span<const replay::Transition> batch, Rng& rng,
                                    std::span<const double> bonus = {}) const;
  /// Same with the next-action noise given explicitly (batch.size() * act_dim values).
  std::vector<double> critic_target(std::span<const replay::Transition> batch,
                                    std::span<const double> noise,
                                    std::span<const double> bonus) const;

  /// mean_b (Q1 - y)^2 + (Q2 - y)^2; gradients accumulate when spans are non-empty.
  double critic_loss(std::span<const replay::Transition> batch, std::span<const double> targets,
                     std::span<double> grad_q1 = {}, std::span<double> grad_q2 = {}) const;

  /// mean_b alpha * log pi(a_b|s_b) - min(Q1, Q2)(s_b, a_b) with a_b reparameterised
  /// from the given noise; policy gradient accumulates into grad when non-empty.
  double policy_loss(std::span<const replay::Transition> batch, std::span<const double> noise,
                     std::span<double> grad = {}) const;

  /// One critic step, one policy step, then Polyak averaging of the targets.
  UpdateLosses update(std::span<const replay::Transition> batch, Rng& rng,
                      std::span<const double> bonus = {});

  /// target <- (1 - tau) * target + tau * online.
  void polyak(double tau);

private:
  std::size_t obs_dim_;
  std::size_t act_dim_;
  AgentConfig config_;
  nn::FeedforwardNet policy_, q1_, q2_, q1_target_, q2_target_;
  nn::AdamState policy_opt_, q1_opt_, q2_opt_;
};

/// Uniform-random exploration for `steps` environment steps, starting fresh
/// episodes as needed. Stored rewards are zero until the first relabel.
std::vector<replay::Transition> pretrain_collect(envs::Environment& env, std::size_t steps,
                                                 Rng& rng, std::uint64_t first_episode_id = 0);

struct RuneSchedule {
  double beta0 = 0.05;
  double decay = 0.9999;
  bool enabled = false;
  double beta(std::uint64_t t) const;
};

/// beta_t times the population std of member predictions at (obs, action).
/// Added to r_hat for agent updates only; never stored in the buffer.
double rune_bonus(const reward::RewardEnsemble& ensemble, std::span<const double> obs,
                  std::span<const double> action, const RuneSchedule& schedule, std::uint64_t t);

}  // namespace mtpl::agent
