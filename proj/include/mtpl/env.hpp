#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mtpl/segment.hpp"

namespace mtpl::envs {

enum class EnvName { point_mass_easy, pendulum_swingup };

std::string to_string(EnvName name);
EnvName env_name_from_string(const std::string& s);

struct EnvSpec {
  EnvName name = EnvName::point_mass_easy;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  int episode_len = 200;
  double dt = 0.0;
};

struct StepResult {
  std::vector<double> next_obs;
  double true_reward = 0.0;
  bool done = false;  // true exactly on the episode_len-th step
};

/// Deterministic analytic control task with a known reward in [0, 1].
class Environment {
public:
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }
  int steps_taken() const { return steps_; }
  bool finished() const { return steps_ >= spec_.episode_len; }

  std::vector<double> reset(std::uint64_t seed);
  /// Actions are clamped to [-1, 1] per component. Throws std::logic_error
  /// when called on a finished (or never reset) episode.
  StepResult step(std::span<const double> action);

  virtual std::vector<double> observe() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

protected:
  explicit Environment(EnvSpec spec) : spec_(spec) {}
  virtual void reset_state(std::uint64_t seed) = 0;
  /// Advances the state by one step and returns the reward of the new state.
  virtual double advance(std::span<const double> clamped_action) = 0;

private:
  EnvSpec spec_;
  int steps_ = 0;
  bool started_ = false;
};

/// 2D point with linear friction. obs = (x, y, vx, vy); target at the origin.
class PointMass final : public Environment {
public:
  static constexpr double kDefaultDt = 0.2;
  static constexpr double kTargetRadius = 0.05;
  static constexpr double kMargin = 0.1;

  explicit PointMass(int episode_len = 200, double dt = kDefaultDt);

  std::vector<double> observe() const override;
  std::unique_ptr<Environment> clone() const override;

  /// Overrides the current state (tests and the zero-step fixed point).
  void set_state(double x, double y, double vx, double vy);

protected:
  void reset_state(std::uint64_t seed) override;
  double advance(std::span<const double> a) override;

private:
  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
};

/// Torque-limited pendulum; theta = 0 is upright. obs = (cos, sin, theta_dot).
class Pendulum final : public Environment {
public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravityOverLength = 10.0;
  static constexpr double kTorqueGain = 3.0;
  static constexpr double kMaxSpeed = 8.0;

  explicit Pendulum(int episode_len = 200);

  std::vector<double> observe() const override;
  std::unique_ptr<Environment> clone() const override;

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

protected:
  void reset_state(std::uint64_t seed) override;
  double advance(std::span<const double> a) override;

private:
  double theta_ = 0, theta_dot_ = 0;
};

double point_mass_reward(double distance);
double pendulum_reward(double theta);

std::unique_ptr<Environment> make_env(EnvName name, int episode_len = 200);
EnvSpec env_spec(EnvName name, int episode_len = 200);

/// Sum of the per-step true rewards of a segment.
double true_return(const Segment& segment);

struct TrajectoryStep {
  int t = 0;
  std::vector<double> obs;
  std::vector<double> action;
  double true_reward = 0.0;
};

/// One JSON object per line: {"t", "obs", "action", "true_reward"}.
void write_trajectory_jsonl(std::ostream& out, std::span<const TrajectoryStep> steps);

}  // namespace mtpl::envs
