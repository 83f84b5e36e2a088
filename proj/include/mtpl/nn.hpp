#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpl/rng.hpp"

namespace mtpl::nn {

/// Thrown whenever a vector handed to a network or optimizer has the wrong
/// length. Carries both sizes so call sites can report them.
class DimensionError : public std::invalid_argument {
public:
  DimensionError(const std::string& what, std::size_t expected, std::size_t actual);
  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

private:
  std::size_t expected_;
  std::size_t actual_;
};

/// tanh kept inside the open interval (-1, 1); plain std::tanh rounds to
/// +-1 once |x| exceeds about 19.
inline double open_tanh(double x) {
  constexpr double kEdge = 1.0 - 0x1.0p-53;
  const double t = std::tanh(x);
  return t > kEdge ? kEdge : (t < -kEdge ? -kEdge : t);
}

enum class Activation { relu, tanh };
enum class OutputKind { linear, tanh, scaled_tanh };

std::string to_string(Activation a);
std::string to_string(OutputKind k);
Activation activation_from_string(const std::string& s);
OutputKind output_kind_from_string(const std::string& s);

/// Per-sample activations recorded by a forward pass, consumed by backward.
struct Tape {
  std::vector<std::vector<double>> pre;   // pre[l]: pre-activation of layer l+1
  std::vector<std::vector<double>> post;  // post[0] = input, post[l]: output of layer l
  std::span<const double> output() const { return post.back(); }
};

struct Gradients {
  std::vector<double> params;
  std::vector<double> input;
};

/// Fully connected network with a fixed flat parameter layout.
///
/// Layout: for each layer l (mapping layer_sizes[l] -> layer_sizes[l+1]) the
/// weight matrix is stored row-major as W[out][in], immediately followed by the
/// bias vector b[out]. Layers follow one another in order. Checkpoints store
/// this array verbatim, so it must not change.
class FeedforwardNet {
public:
  FeedforwardNet() = default;
  FeedforwardNet(std::vector<std::size_t> layer_sizes, Activation hidden, OutputKind output,
                 double output_scale = 1.0);

  static std::size_t param_count(std::span<const std::size_t> layer_sizes);

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  void init_uniform(Rng& rng);

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t num_layers() const { return layer_sizes_.size() - 1; }
  std::size_t input_size() const { return layer_sizes_.front(); }
  std::size_t output_size() const { return layer_sizes_.back(); }
  Activation hidden_activation() const { return hidden_; }
  OutputKind output_kind() const { return output_; }
  double output_scale() const { return output_scale_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + layer_sizes_[layer] * layer_sizes_[layer + 1];
  }

  std::vector<double> forward(std::span<const double> input) const;
  void forward(std::span<const double> input, Tape& tape) const;

  /// Accumulates d(upstream . output)/d(params) into param_grad and, if
  /// input_grad is non-empty, writes d/d(input) into it. An empty param_grad
  /// skips the parameter gradient.
  void backward(const Tape& tape, std::span<const double> upstream, std::span<double> param_grad,
                std::span<double> input_grad = {}) const;

  Gradients backward(std::span<const double> input, std::span<const double> upstream) const;

  bool operator==(const FeedforwardNet&) const = default;

private:
  std::vector<std::size_t> layer_sizes_;
  Activation hidden_ = Activation::relu;
  OutputKind output_ = OutputKind::linear;
  double output_scale_ = 1.0;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n, double lr);

/// One bias-corrected Adam update in place. Increments state.t.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Central-difference gradient of a scalar function of a parameter vector.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double h = 1e-5);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-6).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Checks the parameter gradient of sum(forward(input)) against central
/// differences and returns the max relative error.
double grad_check(const FeedforwardNet& net, std::span<const double> input, double h = 1e-5);

/// Same as grad_check but compares a caller-supplied analytic gradient.
double grad_check(const FeedforwardNet& net, std::span<const double> input,
                  std::span<const double> analytic, double h = 1e-5);

// Checkpoints. Doubles are written in shortest round-trip decimal form, so a
// save/load cycle reproduces every parameter bit for bit.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const FeedforwardNet& net);
FeedforwardNet net_from_json(const nlohmann::json& j);
void save_checkpoint(const FeedforwardNet& net, const std::string& path);
FeedforwardNet load_checkpoint(const std::string& path);

}  // namespace mtpl::nn
