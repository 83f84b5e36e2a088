#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtpl/nn.hpp"
#include "mtpl/rng.hpp"
#include "mtpl/segment.hpp"

namespace mtpl::reward {

/// K independently initialised reward networks over obs (+) action, each with
/// a tanh output so per-step predictions stay in (-1, 1).
class RewardEnsemble {
public:
  RewardEnsemble() = default;
  RewardEnsemble(std::size_t obs_dim, std::size_t act_dim, std::size_t k,
                 const std::vector<std::size_t>& hidden, Rng& rng, double lr = 3e-4);
  /// Wraps existing members (e.g. loaded from a checkpoint).
  RewardEnsemble(std::size_t obs_dim, std::size_t act_dim, std::vector<nn::FeedforwardNet> members,
                 double lr = 3e-4);

  std::size_t size() const { return members_.size(); }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }

  nn::FeedforwardNet& member(std::size_t k) { return members_[k]; }
  const nn::FeedforwardNet& member(std::size_t k) const { return members_[k]; }
  std::vector<nn::FeedforwardNet>& members() { return members_; }
  const std::vector<nn::FeedforwardNet>& members() const { return members_; }
  nn::AdamState& optimizer(std::size_t k) { return optimizers_[k]; }
  void set_learning_rate(double lr);

  /// Replaces all members; they must share one architecture.
  void set_members(std::vector<nn::FeedforwardNet> members, double lr = 3e-4);

private:
  std::size_t obs_dim_ = 0;
  std::size_t act_dim_ = 0;
  std::vector<nn::FeedforwardNet> members_;
  std::vector<nn::AdamState> optimizers_;
};

enum class Source { sim, human };
std::string to_string(Source s);

struct PreferenceRecord {
  Segment seg0;
  Segment seg1;
  double y = 0.0;  // 0: seg0 preferred, 1: seg1 preferred, 0.5: equal
  Source source = Source::sim;
};

bool is_valid_label(double y);

/// Explicit (PPD) and equal (EPD) preference datasets. add() routes each
/// record by its label so the two sets stay an exact partition.
struct PreferenceDatasets {
  std::vector<PreferenceRecord> ppd;
  std::vector<PreferenceRecord> epd;

  void add(PreferenceRecord record);
  std::size_t size() const { return ppd.size() + epd.size(); }
};

struct MtplWeights {
  double alpha_explicit = 1.0;
  double alpha_equal = 0.05;
};

struct MtplLoss {
  double total = 0.0;
  double explicit_part = 0.0;
  double equal_part = 0.0;
};

double member_step_reward(const nn::FeedforwardNet& member, std::span<const double> obs,
                          std::span<const double> action);

/// Mean of the member predictions for one (obs, action).
double predict_step_reward(const RewardEnsemble& ensemble, std::span<const double> obs,
                           std::span<const double> action);

/// Per-member predictions for one (obs, action).
std::vector<double> member_step_rewards(const RewardEnsemble& ensemble,
                                        std::span<const double> obs,
                                        std::span<const double> action);

/// Sum of per-step predictions over the segment.
double segment_return_hat(const nn::FeedforwardNet& member, const Segment& segment);

/// Bradley-Terry probability that seg0 is preferred, sigmoid(R0 - R1).
double preference_prob(const nn::FeedforwardNet& member, const Segment& seg0, const Segment& seg1);

/// Numerically stable logistic function and log(1 + exp(x)).
double sigmoid(double x);
double softplus(double x);

/// Cross-entropy over explicit records; y = 0 pushes P(seg0 > seg1) up.
/// Throws std::invalid_argument if any record is not explicitly labelled.
double explicit_loss(const nn::FeedforwardNet& member, std::span<const PreferenceRecord> batch);

/// Mean squared gap between summed predictions of equal-labelled pairs.
double equal_loss(const nn::FeedforwardNet& member, std::span<const PreferenceRecord> batch);

MtplLoss mtpl_loss(const nn::FeedforwardNet& member, std::span<const PreferenceRecord> ppd_batch,
                   std::span<const PreferenceRecord> epd_batch, const MtplWeights& weights);

/// mtpl_loss plus its gradient w.r.t. the member parameters, accumulated into
/// grad (which must have the member's parameter count).
MtplLoss mtpl_loss_grad(const nn::FeedforwardNet& member,
                        std::span<const PreferenceRecord> ppd_batch,
                        std::span<const PreferenceRecord> epd_batch, const MtplWeights& weights,
                        std::span<double> grad);

struct RewardTrainConfig {
  int epochs = 50;
  std::size_t batch_size = 32;
  double lr = 3e-4;
};

struct TrainStats {
  std::vector<double> epoch_total;  // member-averaged mean minibatch loss
  std::vector<double> epoch_explicit;
  std::vector<double> epoch_equal;
  double ppd_accuracy = 0.0;
  std::size_t minibatches = 0;
};

/// Trains every member on the same pre-drawn minibatch sequence. One epoch is
/// one pass over a joint shuffle of PPD and EPD, so each minibatch mixes the
/// two in proportion to their sizes. Members run in parallel (OpenMP); the
/// result is bitwise identical to train_reward_serial.
TrainStats train_reward(RewardEnsemble& ensemble, const PreferenceDatasets& data,
                        const MtplWeights& weights, const RewardTrainConfig& config, Rng& rng);

/// Reference single-threaded version of train_reward.
TrainStats train_reward_serial(RewardEnsemble& ensemble, const PreferenceDatasets& data,
                               const MtplWeights& weights, const RewardTrainConfig& config,
                               Rng& rng);

/// Fraction of explicit records whose preferred segment has the larger
/// ensemble-mean predicted return. Empty PPD gives 0.
double ppd_accuracy(const RewardEnsemble& ensemble, std::span<const PreferenceRecord> ppd);

/// Mean over members and records of |R_hat(seg0) - R_hat(seg1)|.
double mean_equal_gap(const RewardEnsemble& ensemble, std::span<const PreferenceRecord> epd);

/// Population std over members of R_hat_k(seg0) - R_hat_k(seg1). Needs K >= 2.
double disagreement(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1);

nlohmann::json to_json(const RewardEnsemble& ensemble);
RewardEnsemble ensemble_from_json(const nlohmann::json& j);

}  // namespace mtpl::reward
