#include "mtpl/agent.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mtpl::agent {

using nn::FeedforwardNet;
using replay::Transition;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
constexpr double kLogStdHalfRange = 0.5 * (kLogStdMax - kLogStdMin);

double squash_log_std(double raw) { return kLogStdMin + kLogStdHalfRange * (std::tanh(raw) + 1.0); }

/// log(1 - tanh(u)^2), stable for large |u|.
double log1m_tanh2(double u) {
  return 2.0 * (std::numbers::ln2 - u - reward::softplus(-2.0 * u));
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> v(a.begin(), a.end());
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what);
}

}  // namespace

ActorCritic::ActorCritic(std::size_t obs_dim, std::size_t act_dim, AgentConfig config, Rng& rng)
    : obs_dim_(obs_dim), act_dim_(act_dim), config_(std::move(config)) {
  std::vector<std::size_t> pol{obs_dim};
  pol.insert(pol.end(), config_.hidden.begin(), config_.hidden.end());
  pol.push_back(2 * act_dim);
  std::vector<std::size_t> crit{obs_dim + act_dim};
  crit.insert(crit.end(), config_.hidden.begin(), config_.hidden.end());
  crit.push_back(1);
  policy_ = FeedforwardNet(pol, nn::Activation::relu, nn::OutputKind::linear);
  q1_ = FeedforwardNet(crit, nn::Activation::relu, nn::OutputKind::linear);
  q2_ = q1_;
  policy_.init_uniform(rng);
  q1_.init_uniform(rng);
  q2_.init_uniform(rng);
  q1_target_ = q1_;
  q2_target_ = q2_;
  policy_opt_ = nn::make_adam(policy_.params().size(), config_.lr);
  q1_opt_ = nn::make_adam(q1_.params().size(), config_.lr);
  q2_opt_ = nn::make_adam(q2_.params().size(), config_.lr);
}

PolicySample ActorCritic::sample_action(std::span<const double> obs,
                                        std::span<const double> noise) const {
  if (noise.size() != act_dim_) throw nn::DimensionError("policy noise", act_dim_, noise.size());
  const auto out = policy_.forward(obs);
  PolicySample s;
  s.action.resize(act_dim_);
  for (std::size_t i = 0; i < act_dim_; ++i) {
    const double ls = squash_log_std(out[act_dim_ + i]);
    const double u = out[i] + std::exp(ls) * noise[i];
    s.action[i] = nn::open_tanh(u);
    s.log_prob += -0.5 * noise[i] * noise[i] - ls - kHalfLog2Pi - log1m_tanh2(u);
  }
  return s;
}

std::vector<double> ActorCritic::act(std::span<const double> obs, bool deterministic, Rng& rng) const {
  if (obs.size() != obs_dim_) throw nn::DimensionError("policy obs", obs_dim_, obs.size());
  if (deterministic) {
    const auto out = policy_.forward(obs);
    std::vector<double> a(act_dim_);
    for (std::size_t i = 0; i < act_dim_; ++i) a[i] = nn::open_tanh(out[i]);
    return a;
  }
  std::vector<double> noise(act_dim_);
  for (auto& e : noise) e = rng.normal();
  return sample_action(obs, noise).action;
}

std::vector<double> ActorCritic::critic_target(std::span<const Transition> batch,
                                               std::span<const double> noise,
                                               std::span<const double> bonus) const {
  if (noise.size() != batch.size() * act_dim_)
    throw nn::DimensionError("critic target noise", batch.size() * act_dim_, noise.size());
  if (!bonus.empty() && bonus.size() != batch.size())
    throw nn::DimensionError("reward bonus", batch.size(), bonus.size());
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = batch[b];
    double r = t.reward_hat + (bonus.empty() ? 0.0 : bonus[b]);
    if (!t.done) {
      const auto next = sample_action(t.next_obs, noise.subspan(b * act_dim_, act_dim_));
      const auto in = concat(t.next_obs, next.action);
      const double q = std::min(q1_target_.forward(in)[0], q2_target_.forward(in)[0]);
      r += config_.gamma * (q - config_.entropy_coef * next.log_prob);
    }
    y[b] = r;
  }
  return y;
}

std::vector<double> ActorCritic::critic_target(std::span<const Transition> batch, Rng& rng,
                                               std::span<const double> bonus) const {
  std::vector<double> noise(batch.size() * act_dim_);
  for (auto& e : noise) e = rng.normal();
  return critic_target(batch, noise, bonus);
}

double ActorCritic::critic_loss(std::span<const Transition> batch, std::span<const double> targets,
                                std::span<double> grad_q1, std::span<double> grad_q2) const {
  if (targets.size() != batch.size())
    throw nn::DimensionError("critic targets", batch.size(), targets.size());
  if (batch.empty()) throw std::invalid_argument("critic loss needs a non-empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  nn::Tape tape;
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto in = concat(batch[b].obs, batch[b].action);
    q1_.forward(in, tape);
    const double e1 = tape.output()[0] - targets[b];
    if (!grad_q1.empty()) {
      const double up[1] = {2.0 * e1 * inv_b};
      q1_.backward(tape, up, grad_q1);
    }
    q2_.forward(in, tape);
    const double e2 = tape.output()[0] - targets[b];
    if (!grad_q2.empty()) {
      const double up[1] = {2.0 * e2 * inv_b};
      q2_.backward(tape, up, grad_q2);
    }
    loss += e1 * e1 + e2 * e2;
  }
  return loss * inv_b;
}

double ActorCritic::policy_loss(std::span<const Transition> batch, std::span<const double> noise,
                                std::span<double> grad) const {
  if (noise.size() != batch.size() * act_dim_)
    throw nn::DimensionError("policy noise", batch.size() * act_dim_, noise.size());
  if (batch.empty()) throw std::invalid_argument("policy loss needs a non-empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double alpha = config_.entropy_coef;
  nn::Tape ptape, qtape1, qtape2;
  std::vector<double> a(act_dim_), u(act_dim_), ls(act_dim_), raw_tanh(act_dim_);
  std::vector<double> q_in_grad(obs_dim_ + act_dim_), upstream(2 * act_dim_);
  std::vector<double> q_in(obs_dim_ + act_dim_);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto eps = noise.subspan(b * act_dim_, act_dim_);
    policy_.forward(batch[b].obs, ptape);
    const auto out = ptape.output();
    double logp = 0.0;
    for (std::size_t i = 0; i < act_dim_; ++i) {
      raw_tanh[i] = std::tanh(out[act_dim_ + i]);
      ls[i] = kLogStdMin + kLogStdHalfRange * (raw_tanh[i] + 1.0);
      u[i] = out[i] + std::exp(ls[i]) * eps[i];
      a[i] = nn::open_tanh(u[i]);
      logp += -0.5 * eps[i] * eps[i] - ls[i] - kHalfLog2Pi - log1m_tanh2(u[i]);
    }
    std::copy(batch[b].obs.begin(), batch[b].obs.end(), q_in.begin());
    std::copy(a.begin(), a.end(), q_in.begin() + static_cast<std::ptrdiff_t>(obs_dim_));
    q1_.forward(q_in, qtape1);
    q2_.forward(q_in, qtape2);
    const double v1 = qtape1.output()[0];
    const double v2 = qtape2.output()[0];
    const bool first = v1 <= v2;
    loss += alpha * logp - (first ? v1 : v2);
    if (grad.empty()) continue;

    const double one[1] = {1.0};
    if (first)
      q1_.backward(qtape1, one, {}, q_in_grad);
    else
      q2_.backward(qtape2, one, {}, q_in_grad);
    for (std::size_t i = 0; i < act_dim_; ++i) {
      const double dq_da = q_in_grad[obs_dim_ + i];
      const double dl_du = alpha * 2.0 * a[i] - dq_da * (1.0 - a[i] * a[i]);
      const double dl_dls = -alpha + dl_du * std::exp(ls[i]) * eps[i];
      upstream[i] = dl_du * inv_b;
      upstream[act_dim_ + i] =
          dl_dls * kLogStdHalfRange * (1.0 - raw_tanh[i] * raw_tanh[i]) * inv_b;
    }
    policy_.backward(ptape, upstream, grad);
  }
  return loss * inv_b;
}

UpdateLosses ActorCritic::update(std::span<const Transition> batch, Rng& rng,
                                 std::span<const double> bonus) {
  if (batch.empty()) throw std::invalid_argument("agent update needs a non-empty batch");
  UpdateLosses out;
  const auto targets = critic_target(batch, rng, bonus);

  std::vector<double> g1(q1_.params().size(), 0.0), g2(q2_.params().size(), 0.0);
  out.critic = critic_loss(batch, targets, g1, g2);
  require_finite(out.critic, "critic loss");
  nn::adam_step(q1_.params(), g1, q1_opt_);
  nn::adam_step(q2_.params(), g2, q2_opt_);

  std::vector<double> noise(batch.size() * act_dim_);
  for (auto& e : noise) e = rng.normal();
  std::vector<double> gp(policy_.params().size(), 0.0);
  out.policy = policy_loss(batch, noise, gp);
  require_finite(out.policy, "policy loss");
  nn::adam_step(policy_.params(), gp, policy_opt_);

  polyak(config_.tau);
  return out;
}

void ActorCritic::polyak(double tau) {
  auto blend = [tau](std::span<double> target, std::span<const double> online) {
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = (1.0 - tau) * target[i] + tau * online[i];
  };
  blend(q1_target_.params(), q1_.params());
  blend(q2_target_.params(), q2_.params());
}

std::vector<Transition> pretrain_collect(envs::Environment& env, std::size_t steps, Rng& rng,
                                         std::uint64_t first_episode_id) {
  std::vector<Transition> out;
  out.reserve(steps);
  const std::size_t act_dim = env.spec().act_dim;
  std::uint64_t episode = first_episode_id;
  std::vector<double> obs;
  bool need_reset = true;
  for (std::size_t s = 0; s < steps; ++s) {
    if (need_reset) {
      obs = env.reset(rng.next_u64());
      need_reset = false;
    }
    std::vector<double> a(act_dim);
    for (auto& c : a) c = rng.uniform(-1.0, 1.0);
    const std::size_t step_index = static_cast<std::size_t>(env.steps_taken());
    auto r = env.step(a);
    Transition t;
    t.obs = obs;
    t.action = std::move(a);
    t.next_obs = r.next_obs;
    t.reward_hat = 0.0;
    t.true_reward = r.true_reward;
    t.done = false;
    t.episode_id = episode;
    t.step_index = step_index;
    out.push_back(std::move(t));
    obs = std::move(r.next_obs);
    if (r.done) {
      need_reset = true;
      ++episode;
    }
  }
  return out;
}

double RuneSchedule::beta(std::uint64_t t) const {
  return beta0 * std::pow(decay, static_cast<double>(t));
}

double rune_bonus(const reward::RewardEnsemble& ensemble, std::span<const double> obs,
                  std::span<const double> action, const RuneSchedule& schedule, std::uint64_t t) {
  if (ensemble.size() < 2) throw std::invalid_argument("RUNE bonus needs at least two reward members");
  if (!schedule.enabled) return 0.0;
  const auto r = reward::member_step_rewards(ensemble, obs, action);
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double var = 0.0;
  for (double v : r) var += (v - mean) * (v - mean);
  return schedule.beta(t) * std::sqrt(var / static_cast<double>(r.size()));
}

}  // namespace mtpl::agent
