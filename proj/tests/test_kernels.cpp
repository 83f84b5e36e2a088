#include <doctest.h>

#include <omp.h>

#include "helpers.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"

using namespace mtpl;

namespace {

reward::PreferenceDatasets labelled_pairs(std::size_t n, Rng& rng) {
  reward::PreferenceDatasets d;
  for (std::size_t i = 0; i < n; ++i) {
    auto a = testing::random_segment(rng, 10, 4, 2, 2 * i);
    auto b = testing::random_segment(rng, 10, 4, 2, 2 * i + 1);
    const double gap = a.true_return - b.true_return;
    const double y = std::abs(gap) < 0.3 ? 0.5 : (gap > 0 ? 0.0 : 1.0);
    d.add({std::move(a), std::move(b), y, reward::Source::sim});
  }
  return d;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel relabel matches the serial reference bit for bit") {
  auto a = testing::point_mass_buffer(3000, 5);
  auto b = a;
  Rng rng(1);
  reward::RewardEnsemble ens(4, 2, 3, {16, 16}, rng);
  CHECK(replay::relabel_all(a, ens) == replay::relabel_all_serial(b, ens));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i).reward_hat == b.at(i).reward_hat);
}

TEST_CASE("parallel reward training matches the serial reference bit for bit") {
  Rng data_rng(2);
  const auto data = labelled_pairs(60, data_rng);
  REQUIRE(data.epd.size() > 0);
  REQUIRE(data.ppd.size() > 0);
  Rng init(3);
  reward::RewardEnsemble par(4, 2, 3, {16, 16}, init);
  auto ser = par;
  Rng r1(4), r2(4);
  const reward::RewardTrainConfig cfg{4, 16, 1e-3};
  const auto sp = reward::train_reward(par, data, {1.0, 0.05}, cfg, r1);
  const auto ss = reward::train_reward_serial(ser, data, {1.0, 0.05}, cfg, r2);
  CHECK(sp.epoch_total == ss.epoch_total);
  CHECK(sp.epoch_explicit == ss.epoch_explicit);
  CHECK(sp.epoch_equal == ss.epoch_equal);
  CHECK(sp.ppd_accuracy == ss.ppd_accuracy);
  for (std::size_t k = 0; k < par.size(); ++k) CHECK(par.member(k) == ser.member(k));
  CHECK(r1.uniform() == r2.uniform());
}

TEST_CASE("results do not depend on the thread count") {
  auto a = testing::point_mass_buffer(2000, 6);
  auto b = a;
  Rng rng(7);
  reward::RewardEnsemble ens(4, 2, 3, {8, 8}, rng);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  replay::relabel_all(a, ens);
  omp_set_num_threads(4);
  replay::relabel_all(b, ens);
  omp_set_num_threads(saved);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i).reward_hat == b.at(i).reward_hat);
}

}  // TEST_SUITE
