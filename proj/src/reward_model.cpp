#include "mtpl/reward_model.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

namespace mtpl::reward {

using nn::FeedforwardNet;

RewardEnsemble::RewardEnsemble(std::size_t obs_dim, std::size_t act_dim, std::size_t k,
                               const std::vector<std::size_t>& hidden, Rng& rng, double lr)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  if (k == 0) throw std::invalid_argument("ensemble needs at least one member");
  std::vector<std::size_t> sizes{obs_dim + act_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (std::size_t i = 0; i < k; ++i) {
    FeedforwardNet net(sizes, nn::Activation::relu, nn::OutputKind::scaled_tanh, 1.0);
    net.init_uniform(rng);
    optimizers_.push_back(nn::make_adam(net.params().size(), lr));
    members_.push_back(std::move(net));
  }
}

RewardEnsemble::RewardEnsemble(std::size_t obs_dim, std::size_t act_dim,
                               std::vector<FeedforwardNet> members, double lr)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  set_members(std::move(members), lr);
}

void RewardEnsemble::set_learning_rate(double lr) {
  for (auto& o : optimizers_) o.lr = lr;
}

void RewardEnsemble::set_members(std::vector<FeedforwardNet> members, double lr) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  for (const auto& m : members) {
    if (m.layer_sizes() != members.front().layer_sizes() || m.output_size() != 1)
      throw std::invalid_argument("ensemble members must share one scalar-output architecture");
  }
  if (members.front().input_size() != obs_dim_ + act_dim_)
    throw nn::DimensionError("ensemble member input", obs_dim_ + act_dim_,
                             members.front().input_size());
  optimizers_.clear();
  for (const auto& m : members) optimizers_.push_back(nn::make_adam(m.params().size(), lr));
  members_ = std::move(members);
}

std::string to_string(Source s) { return s == Source::sim ? "sim" : "human"; }

bool is_valid_label(double y) { return y == 0.0 || y == 0.5 || y == 1.0; }

void PreferenceDatasets::add(PreferenceRecord record) {
  if (!is_valid_label(record.y)) throw std::invalid_argument("preference label must be 0, 0.5 or 1");
  if (record.y == 0.5)
    epd.push_back(std::move(record));
  else
    ppd.push_back(std::move(record));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

/// Reusable per-call scratch: one tape per step of each of the two segments.
struct Workspace {
  std::vector<nn::Tape> tapes0;
  std::vector<nn::Tape> tapes1;
  std::vector<double> input;
};

void fill_input(const Segment& s, std::size_t t, std::vector<double>& input) {
  input.resize(s.obs_dim + s.act_dim);
  auto o = s.obs_at(t);
  auto a = s.action_at(t);
  std::copy(o.begin(), o.end(), input.begin());
  std::copy(a.begin(), a.end(), input.begin() + static_cast<std::ptrdiff_t>(s.obs_dim));
}

double segment_sum(const FeedforwardNet& m, const Segment& s, std::vector<nn::Tape>* tapes,
                   std::vector<double>& input) {
  if (s.length() == 0) throw std::invalid_argument("segment must be nonempty");
  double sum = 0.0;
  if (tapes) {
    tapes->resize(s.length());
    for (std::size_t t = 0; t < s.length(); ++t) {
      fill_input(s, t, input);
      m.forward(input, (*tapes)[t]);
      sum += (*tapes)[t].output()[0];
    }
  } else {
    nn::Tape tape;
    for (std::size_t t = 0; t < s.length(); ++t) {
      fill_input(s, t, input);
      m.forward(input, tape);
      sum += tape.output()[0];
    }
  }
  return sum;
}

void segment_backward(const FeedforwardNet& m, const std::vector<nn::Tape>& tapes,
                      std::size_t len, double coef, std::span<double> grad) {
  const double up[1] = {coef};
  for (std::size_t t = 0; t < len; ++t) m.backward(tapes[t], up, grad);
}

template <class Indexer>
double explicit_part(const FeedforwardNet& m, std::size_t n, Indexer rec, double weight,
                     std::span<double> grad, Workspace& ws) {
  if (n == 0) return 0.0;
  const bool want_grad = !grad.empty() && weight != 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const PreferenceRecord& r = rec(i);
    if (r.y != 0.0 && r.y != 1.0)
      throw std::invalid_argument("explicit loss received a record that is not labelled 0 or 1");
    const double r0 = segment_sum(m, r.seg0, want_grad ? &ws.tapes0 : nullptr, ws.input);
    const double r1 = segment_sum(m, r.seg1, want_grad ? &ws.tapes1 : nullptr, ws.input);
    const double d = r0 - r1;
    double dldd;
    if (r.y == 0.0) {
      sum += softplus(-d);  // -log sigmoid(d)
      dldd = -sigmoid(-d);
    } else {
      sum += softplus(d);  // -log sigmoid(-d)
      dldd = sigmoid(d);
    }
    if (want_grad) {
      const double c = weight * dldd / static_cast<double>(n);
      segment_backward(m, ws.tapes0, r.seg0.length(), c, grad);
      segment_backward(m, ws.tapes1, r.seg1.length(), -c, grad);
    }
  }
  return sum / static_cast<double>(n);
}

template <class Indexer>
double equal_part(const FeedforwardNet& m, std::size_t n, Indexer rec, double weight,
                  std::span<double> grad, Workspace& ws) {
  if (n == 0) return 0.0;
  const bool want_grad = !grad.empty() && weight != 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const PreferenceRecord& r = rec(i);
    if (r.y != 0.5) throw std::invalid_argument("equal loss received an explicitly labelled record");
    const double r0 = segment_sum(m, r.seg0, want_grad ? &ws.tapes0 : nullptr, ws.input);
    const double r1 = segment_sum(m, r.seg1, want_grad ? &ws.tapes1 : nullptr, ws.input);
    const double gap = r0 - r1;
    sum += gap * gap;
    if (want_grad) {
      const double c = weight * 2.0 * gap / static_cast<double>(n);
      segment_backward(m, ws.tapes0, r.seg0.length(), c, grad);
      segment_backward(m, ws.tapes1, r.seg1.length(), -c, grad);
    }
  }
  return sum / static_cast<double>(n);
}

template <class PpdIdx, class EpdIdx>
MtplLoss loss_core(const FeedforwardNet& m, std::size_t n_ppd, PpdIdx ppd, std::size_t n_epd,
                   EpdIdx epd, const MtplWeights& w, std::span<double> grad, Workspace& ws) {
  if (w.alpha_explicit < 0.0 || w.alpha_equal < 0.0)
    throw std::invalid_argument("MTPL weights must be non-negative");
  if (n_ppd == 0 && n_epd == 0) throw std::invalid_argument("MTPL loss needs at least one record");
  MtplLoss out;
  out.explicit_part = explicit_part(m, n_ppd, ppd, w.alpha_explicit, grad, ws);
  out.equal_part = equal_part(m, n_epd, epd, w.alpha_equal, grad, ws);
  out.total = w.alpha_explicit * out.explicit_part + w.alpha_equal * out.equal_part;
  return out;
}

auto span_indexer(std::span<const PreferenceRecord> s) {
  return [s](std::size_t i) -> const PreferenceRecord& { return s[i]; };
}

}  // namespace

double member_step_reward(const FeedforwardNet& member, std::span<const double> obs,
                          std::span<const double> action) {
  std::vector<double> input(obs.begin(), obs.end());
  input.insert(input.end(), action.begin(), action.end());
  return member.forward(input)[0];
}

std::vector<double> member_step_rewards(const RewardEnsemble& ensemble,
                                        std::span<const double> obs,
                                        std::span<const double> action) {
  if (obs.size() != ensemble.obs_dim())
    throw nn::DimensionError("reward obs", ensemble.obs_dim(), obs.size());
  if (action.size() != ensemble.act_dim())
    throw nn::DimensionError("reward action", ensemble.act_dim(), action.size());
  std::vector<double> input(obs.begin(), obs.end());
  input.insert(input.end(), action.begin(), action.end());
  std::vector<double> out;
  out.reserve(ensemble.size());
  nn::Tape tape;
  for (const auto& m : ensemble.members()) {
    m.forward(input, tape);
    out.push_back(tape.output()[0]);
  }
  return out;
}

double predict_step_reward(const RewardEnsemble& ensemble, std::span<const double> obs,
                           std::span<const double> action) {
  const auto r = member_step_rewards(ensemble, obs, action);
  double s = 0.0;
  for (double v : r) s += v;
  return s / static_cast<double>(r.size());
}

double segment_return_hat(const FeedforwardNet& member, const Segment& segment) {
  std::vector<double> input;
  return segment_sum(member, segment, nullptr, input);
}

double preference_prob(const FeedforwardNet& member, const Segment& seg0, const Segment& seg1) {
  return sigmoid(segment_return_hat(member, seg0) - segment_return_hat(member, seg1));
}

double explicit_loss(const FeedforwardNet& member, std::span<const PreferenceRecord> batch) {
  Workspace ws;
  return explicit_part(member, batch.size(), span_indexer(batch), 1.0, {}, ws);
}

double equal_loss(const FeedforwardNet& member, std::span<const PreferenceRecord> batch) {
  Workspace ws;
  return equal_part(member, batch.size(), span_indexer(batch), 1.0, {}, ws);
}

MtplLoss mtpl_loss(const FeedforwardNet& member, std::span<const PreferenceRecord> ppd_batch,
                   std::span<const PreferenceRecord> epd_batch, const MtplWeights& weights) {
  Workspace ws;
  return loss_core(member, ppd_batch.size(), span_indexer(ppd_batch), epd_batch.size(),
                   span_indexer(epd_batch), weights, {}, ws);
}

MtplLoss mtpl_loss_grad(const FeedforwardNet& member, std::span<const PreferenceRecord> ppd_batch,
                        std::span<const PreferenceRecord> epd_batch, const MtplWeights& weights,
                        std::span<double> grad) {
  if (grad.size() != member.params().size())
    throw nn::DimensionError("mtpl gradient", member.params().size(), grad.size());
  Workspace ws;
  return loss_core(member, ppd_batch.size(), span_indexer(ppd_batch), epd_batch.size(),
                   span_indexer(epd_batch), weights, grad, ws);
}

namespace {

struct MemberHistory {
  std::vector<MtplLoss> epochs;
  std::size_t minibatches = 0;
};

MemberHistory train_member(FeedforwardNet& m, nn::AdamState& opt, const PreferenceDatasets& data,
                           const MtplWeights& w, std::size_t batch_size,
                           const std::vector<std::vector<std::size_t>>& perms) {
  const std::size_t n_ppd = data.ppd.size();
  Workspace ws;
  std::vector<double> grad(m.params().size());
  std::vector<std::size_t> ppd_idx, epd_idx;
  MemberHistory hist;
  for (const auto& perm : perms) {
    MtplLoss acc;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
      const std::size_t stop = std::min(perm.size(), start + batch_size);
      ppd_idx.clear();
      epd_idx.clear();
      for (std::size_t i = start; i < stop; ++i) {
        if (perm[i] < n_ppd)
          ppd_idx.push_back(perm[i]);
        else
          epd_idx.push_back(perm[i] - n_ppd);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      const MtplLoss l = loss_core(
          m, ppd_idx.size(),
          [&](std::size_t i) -> const PreferenceRecord& { return data.ppd[ppd_idx[i]]; },
          epd_idx.size(),
          [&](std::size_t i) -> const PreferenceRecord& { return data.epd[epd_idx[i]]; }, w, grad,
          ws);
      if (!std::isfinite(l.total)) throw std::runtime_error("reward training produced a non-finite loss");
      for (double g : grad)
        if (!std::isfinite(g)) throw std::runtime_error("reward training produced a non-finite gradient");
      nn::adam_step(m.params(), grad, opt);
      acc.total += l.total;
      acc.explicit_part += l.explicit_part;
      acc.equal_part += l.equal_part;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    hist.epochs.push_back({acc.total / nb, acc.explicit_part / nb, acc.equal_part / nb});
    hist.minibatches += batches;
  }
  return hist;
}

TrainStats train_impl(RewardEnsemble& ens, const PreferenceDatasets& data, const MtplWeights& w,
                      const RewardTrainConfig& cfg, Rng& rng, bool parallel) {
  if (data.size() == 0) throw std::invalid_argument("reward training needs at least one record");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  for (const auto& r : data.ppd)
    if (r.y != 0.0 && r.y != 1.0) throw std::invalid_argument("PPD holds a non-explicit label");
  for (const auto& r : data.epd)
    if (r.y != 0.5) throw std::invalid_argument("EPD holds a non-equal label");

  // Minibatch order is drawn up front so member scheduling cannot affect it.
  const std::size_t n = data.size();
  std::vector<std::vector<std::size_t>> perms(static_cast<std::size_t>(cfg.epochs));
  for (auto& p : perms) {
    p.resize(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i-- > 1;) std::swap(p[i], p[rng.uniform_index(i + 1)]);
  }
  ens.set_learning_rate(cfg.lr);

  const std::size_t k_count = ens.size();
  std::vector<MemberHistory> hist(k_count);
  std::vector<std::exception_ptr> errors(k_count);
  auto run = [&](std::size_t k) {
    try {
      hist[k] = train_member(ens.member(k), ens.optimizer(k), data, w, cfg.batch_size, perms);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < k_count; ++k) run(k);
  } else {
    for (std::size_t k = 0; k < k_count; ++k) run(k);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  TrainStats stats;
  const double kd = static_cast<double>(k_count);
  for (std::size_t e = 0; e < perms.size(); ++e) {
    double t = 0, x = 0, q = 0;
    for (const auto& h : hist) {
      t += h.epochs[e].total;
      x += h.epochs[e].explicit_part;
      q += h.epochs[e].equal_part;
    }
    stats.epoch_total.push_back(t / kd);
    stats.epoch_explicit.push_back(x / kd);
    stats.epoch_equal.push_back(q / kd);
  }
  stats.minibatches = hist.front().minibatches;
  stats.ppd_accuracy = ppd_accuracy(ens, data.ppd);
  return stats;
}

}  // namespace

TrainStats train_reward(RewardEnsemble& ensemble, const PreferenceDatasets& data,
                        const MtplWeights& weights, const RewardTrainConfig& config, Rng& rng) {
  return train_impl(ensemble, data, weights, config, rng, true);
}

TrainStats train_reward_serial(RewardEnsemble& ensemble, const PreferenceDatasets& data,
                               const MtplWeights& weights, const RewardTrainConfig& config,
                               Rng& rng) {
  return train_impl(ensemble, data, weights, config, rng, false);
}

namespace {

double mean_return_hat(const RewardEnsemble& ens, const Segment& s) {
  double sum = 0.0;
  for (const auto& m : ens.members()) sum += segment_return_hat(m, s);
  return sum / static_cast<double>(ens.size());
}

}  // namespace

double ppd_accuracy(const RewardEnsemble& ensemble, std::span<const PreferenceRecord> ppd) {
  if (ppd.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : ppd) {
    const double d = mean_return_hat(ensemble, r.seg0) - mean_return_hat(ensemble, r.seg1);
    if ((r.y == 0.0 && d > 0.0) || (r.y == 1.0 && d < 0.0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ppd.size());
}

double mean_equal_gap(const RewardEnsemble& ensemble, std::span<const PreferenceRecord> epd) {
  if (epd.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& m : ensemble.members())
    for (const auto& r : epd) sum += std::abs(segment_return_hat(m, r.seg0) - segment_return_hat(m, r.seg1));
  return sum / static_cast<double>(ensemble.size() * epd.size());
}

double disagreement(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1) {
  if (ensemble.size() < 2) throw std::invalid_argument("disagreement needs at least two members");
  std::vector<double> gaps;
  gaps.reserve(ensemble.size());
  double mean = 0.0;
  for (const auto& m : ensemble.members()) {
    gaps.push_back(segment_return_hat(m, seg0) - segment_return_hat(m, seg1));
    mean += gaps.back();
  }
  mean /= static_cast<double>(gaps.size());
  double var = 0.0;
  for (double g : gaps) var += (g - mean) * (g - mean);
  return std::sqrt(var / static_cast<double>(gaps.size()));
}

nlohmann::json to_json(const RewardEnsemble& ensemble) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : ensemble.members()) members.push_back(nn::to_json(m));
  return {{"K", ensemble.size()},
          {"obs_dim", ensemble.obs_dim()},
          {"act_dim", ensemble.act_dim()},
          {"members", members}};
}

RewardEnsemble ensemble_from_json(const nlohmann::json& j) {
  const auto k = j.at("K").get<std::size_t>();
  const auto& arr = j.at("members");
  if (arr.size() != k) throw std::runtime_error("ensemble checkpoint: K does not match member count");
  std::vector<FeedforwardNet> members;
  for (const auto& m : arr) members.push_back(nn::net_from_json(m));
  return RewardEnsemble(j.at("obs_dim").get<std::size_t>(), j.at("act_dim").get<std::size_t>(),
                        std::move(members));
}

}  // namespace mtpl::reward
