#include "mtpl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtpl::nn {

namespace {

std::string dim_message(const std::string& what, std::size_t expected, std::size_t actual) {
  std::ostringstream os;
  os << what << ": expected size " << expected << ", got " << actual;
  return os.str();
}

void check_size(const char* what, std::size_t expected, std::size_t actual) {
  if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace

DimensionError::DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
    : std::invalid_argument(dim_message(what, expected, actual)),
      expected_(expected),
      actual_(actual) {}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(OutputKind k) {
  switch (k) {
    case OutputKind::linear: return "linear";
    case OutputKind::tanh: return "tanh";
    case OutputKind::scaled_tanh: return "scaled_tanh";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown hidden activation: " + s);
}

OutputKind output_kind_from_string(const std::string& s) {
  if (s == "linear") return OutputKind::linear;
  if (s == "tanh") return OutputKind::tanh;
  if (s == "scaled_tanh") return OutputKind::scaled_tanh;
  throw std::invalid_argument("unknown output activation: " + s);
}

FeedforwardNet::FeedforwardNet(std::vector<std::size_t> layer_sizes, Activation hidden,
                               OutputKind output, double output_scale)
    : layer_sizes_(std::move(layer_sizes)),
      hidden_(hidden),
      output_(output),
      output_scale_(output_scale) {
  if (layer_sizes_.size() < 2) throw std::invalid_argument("network needs at least two layer sizes");
  for (auto s : layer_sizes_)
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  if (output_ == OutputKind::scaled_tanh && !(output_scale_ > 0.0))
    throw std::invalid_argument("scaled_tanh needs a positive scale");
  offsets_.resize(num_layers());
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    offsets_[l] = off;
    off += (layer_sizes_[l] + 1) * layer_sizes_[l + 1];
  }
  params_.assign(off, 0.0);
}

std::size_t FeedforwardNet::param_count(std::span<const std::size_t> layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  return n;
}

void FeedforwardNet::init_uniform(Rng& rng) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    double* w = params_.data() + weight_offset(l);
    for (std::size_t k = 0; k < in * out; ++k) w[k] = rng.uniform(-bound, bound);
    std::fill_n(params_.data() + bias_offset(l), out, 0.0);
  }
}

void FeedforwardNet::forward(std::span<const double> input, Tape& tape) const {
  check_size("forward input", input_size(), input.size());
  const std::size_t L = num_layers();
  tape.pre.resize(L);
  tape.post.resize(L + 1);
  tape.post[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const double* x = tape.post[l].data();
    auto& z = tape.pre[l];
    auto& a = tape.post[l + 1];
    z.resize(out);
    a.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
    if (l + 1 < L) {
      if (hidden_ == Activation::relu) {
        for (std::size_t o = 0; o < out; ++o) a[o] = z[o] > 0.0 ? z[o] : 0.0;
      } else {
        for (std::size_t o = 0; o < out; ++o) a[o] = std::tanh(z[o]);
      }
    } else {
      switch (output_) {
        case OutputKind::linear: a = z; break;
        case OutputKind::tanh:
          for (std::size_t o = 0; o < out; ++o) a[o] = open_tanh(z[o]);
          break;
        case OutputKind::scaled_tanh:
          for (std::size_t o = 0; o < out; ++o) a[o] = output_scale_ * open_tanh(z[o]);
          break;
      }
    }
  }
}

std::vector<double> FeedforwardNet::forward(std::span<const double> input) const {
  Tape tape;
  forward(input, tape);
  return std::move(tape.post.back());
}

void FeedforwardNet::backward(const Tape& tape, std::span<const double> upstream,
                              std::span<double> param_grad, std::span<double> input_grad) const {
  check_size("backward upstream", output_size(), upstream.size());
  const bool want_params = !param_grad.empty();
  if (want_params) check_size("backward param_grad", params_.size(), param_grad.size());
  if (!input_grad.empty()) check_size("backward input_grad", input_size(), input_grad.size());

  const std::size_t L = num_layers();
  std::vector<double> delta(upstream.begin(), upstream.end());
  {
    const auto& y = tape.post[L];
    switch (output_) {
      case OutputKind::linear: break;
      case OutputKind::tanh:
        for (std::size_t o = 0; o < delta.size(); ++o) delta[o] *= 1.0 - y[o] * y[o];
        break;
      case OutputKind::scaled_tanh:
        for (std::size_t o = 0; o < delta.size(); ++o) {
          const double t = y[o] / output_scale_;
          delta[o] *= output_scale_ * (1.0 - t * t);
        }
        break;
    }
  }

  std::vector<double> prev;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = layer_sizes_[l];
    const std::size_t out = layer_sizes_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    if (want_params) {
      double* gw = param_grad.data() + weight_offset(l);
      double* gb = param_grad.data() + bias_offset(l);
      const double* x = tape.post[l].data();
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
        gb[o] += d;
      }
    }
    if (l == 0 && input_grad.empty()) break;
    prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    if (l == 0) {
      std::copy(prev.begin(), prev.end(), input_grad.begin());
      break;
    }
    // derivative of the hidden activation feeding layer l
    const auto& z = tape.pre[l - 1];
    const auto& a = tape.post[l];
    if (hidden_ == Activation::relu) {
      for (std::size_t i = 0; i < in; ++i)
        if (!(z[i] > 0.0)) prev[i] = 0.0;
    } else {
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
    }
    delta.swap(prev);
  }
}

Gradients FeedforwardNet::backward(std::span<const double> input,
                                   std::span<const double> upstream) const {
  Tape tape;
  forward(input, tape);
  Gradients g;
  g.params.assign(params_.size(), 0.0);
  g.input.assign(input_size(), 0.0);
  backward(tape, upstream, g.params, g.input);
  return g;
}

AdamState make_adam(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  check_size("adam grads", params.size(), grads.size());
  check_size("adam first moments", params.size(), state.m.size());
  check_size("adam second moments", params.size(), state.v.size());
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double h) {
  std::vector<double> work(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double fp = f(work);
    work[i] = orig - h;
    const double fm = f(work);
    work[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  check_size("max_relative_error", analytic.size(), numeric.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

namespace {

double sum_output(const FeedforwardNet& proto, std::span<const double> params,
                  std::span<const double> input) {
  FeedforwardNet net = proto;
  std::copy(params.begin(), params.end(), net.params().begin());
  double s = 0.0;
  for (double y : net.forward(input)) s += y;
  return s;
}

}  // namespace

double grad_check(const FeedforwardNet& net, std::span<const double> input,
                  std::span<const double> analytic, double h) {
  auto numeric = finite_difference_gradient(
      [&](std::span<const double> p) { return sum_output(net, p, input); }, net.params(), h);
  return max_relative_error(analytic, numeric);
}

double grad_check(const FeedforwardNet& net, std::span<const double> input, double h) {
  std::vector<double> ones(net.output_size(), 1.0);
  auto g = net.backward(input, ones);
  return grad_check(net, input, g.params, h);
}

nlohmann::json to_json(const FeedforwardNet& net) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["layer_sizes"] = net.layer_sizes();
  j["activations"] = {{"hidden", to_string(net.hidden_activation())},
                      {"output", to_string(net.output_kind())},
                      {"scale", net.output_scale()}};
  j["params"] = std::vector<double>(net.params().begin(), net.params().end());
  return j;
}

FeedforwardNet net_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint format_version");
  const auto& acts = j.at("activations");
  FeedforwardNet net(j.at("layer_sizes").get<std::vector<std::size_t>>(),
                     activation_from_string(acts.at("hidden").get<std::string>()),
                     output_kind_from_string(acts.at("output").get<std::string>()),
                     acts.at("scale").get<double>());
  const auto params = j.at("params").get<std::vector<double>>();
  check_size("checkpoint params", net.params().size(), params.size());
  for (double p : params)
    if (!std::isfinite(p)) throw std::runtime_error("checkpoint contains non-finite parameter");
  std::copy(params.begin(), params.end(), net.params().begin());
  return net;
}

void save_checkpoint(const FeedforwardNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << to_json(net).dump() << '\n';
}

FeedforwardNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  return net_from_json(nlohmann::json::parse(in));
}

}  // namespace mtpl::nn
