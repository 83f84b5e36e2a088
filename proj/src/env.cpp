#include "mtpl/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "mtpl/nn.hpp"
#include "mtpl/rng.hpp"

namespace mtpl::envs {

std::string to_string(EnvName name) {
  return name == EnvName::point_mass_easy ? "point_mass_easy" : "pendulum_swingup";
}

EnvName env_name_from_string(const std::string& s) {
  if (s == "point_mass_easy") return EnvName::point_mass_easy;
  if (s == "pendulum_swingup") return EnvName::pendulum_swingup;
  throw std::invalid_argument("unknown environment: " + s);
}

std::vector<double> Environment::reset(std::uint64_t seed) {
  reset_state(seed);
  steps_ = 0;
  started_ = true;
  return observe();
}

StepResult Environment::step(std::span<const double> action) {
  if (!started_) throw std::logic_error("step called before reset");
  if (finished()) throw std::logic_error("step called on a finished episode");
  if (action.size() != spec_.act_dim)
    throw nn::DimensionError("env action", spec_.act_dim, action.size());
  std::vector<double> a(action.begin(), action.end());
  for (double& c : a) {
    if (!std::isfinite(c)) throw std::invalid_argument("action must be finite");
    c = std::clamp(c, -1.0, 1.0);
  }
  StepResult r;
  r.true_reward = advance(a);
  ++steps_;
  r.next_obs = observe();
  r.done = finished();
  return r;
}

double point_mass_reward(double d) {
  if (d <= PointMass::kTargetRadius) return 1.0;
  const double z = (d - PointMass::kTargetRadius) / PointMass::kMargin;
  return std::exp(-0.5 * z * z);
}

double pendulum_reward(double theta) {
  return std::clamp((std::cos(theta) - 0.95) / 0.05, 0.0, 1.0);
}

PointMass::PointMass(int episode_len, double dt)
    : Environment(EnvSpec{EnvName::point_mass_easy, 4, 2, episode_len, dt}) {}

std::vector<double> PointMass::observe() const { return {x_, y_, vx_, vy_}; }

std::unique_ptr<Environment> PointMass::clone() const { return std::make_unique<PointMass>(*this); }

void PointMass::set_state(double x, double y, double vx, double vy) {
  x_ = x;
  y_ = y;
  vx_ = vx;
  vy_ = vy;
}

void PointMass::reset_state(std::uint64_t seed) {
  Rng rng(seed);
  x_ = rng.uniform(-1.0, 1.0);
  y_ = rng.uniform(-1.0, 1.0);
  vx_ = vy_ = 0.0;
}

double PointMass::advance(std::span<const double> a) {
  const double dt = spec().dt;
  vx_ = 0.95 * vx_ + 0.1 * dt * a[0];
  vy_ = 0.95 * vy_ + 0.1 * dt * a[1];
  x_ = std::clamp(x_ + dt * vx_, -1.0, 1.0);
  y_ = std::clamp(y_ + dt * vy_, -1.0, 1.0);
  return point_mass_reward(std::hypot(x_, y_));
}

Pendulum::Pendulum(int episode_len)
    : Environment(EnvSpec{EnvName::pendulum_swingup, 3, 1, episode_len, kDt}) {}

std::vector<double> Pendulum::observe() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

std::unique_ptr<Environment> Pendulum::clone() const { return std::make_unique<Pendulum>(*this); }

void Pendulum::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

void Pendulum::reset_state(std::uint64_t seed) {
  Rng rng(seed);
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = 0.0;
}

double Pendulum::advance(std::span<const double> a) {
  // -(g/l) sin(theta - pi) written as (g/l) sin(theta) so upright stays exact
  const double accel = kGravityOverLength * std::sin(theta_) + kTorqueGain * a[0];
  theta_dot_ = std::clamp(theta_dot_ + kDt * accel, -kMaxSpeed, kMaxSpeed);
  theta_ = std::remainder(theta_ + kDt * theta_dot_, 2.0 * std::numbers::pi);
  return pendulum_reward(theta_);
}

EnvSpec env_spec(EnvName name, int episode_len) { return make_env(name, episode_len)->spec(); }

std::unique_ptr<Environment> make_env(EnvName name, int episode_len) {
  if (episode_len <= 0) throw std::invalid_argument("episode_len must be positive");
  if (name == EnvName::point_mass_easy) return std::make_unique<PointMass>(episode_len);
  return std::make_unique<Pendulum>(episode_len);
}

double true_return(const Segment& segment) {
  double s = 0.0;
  for (double r : segment.true_rewards) s += r;
  return s;
}

void write_trajectory_jsonl(std::ostream& out, std::span<const TrajectoryStep> steps) {
  for (const auto& s : steps) {
    nlohmann::json j = {{"t", s.t}, {"obs", s.obs}, {"action", s.action}, {"true_reward", s.true_reward}};
    out << j.dump() << '\n';
  }
}

}  // namespace mtpl::envs
