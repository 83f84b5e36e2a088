#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"

using namespace mtpl;
using replay::ReplayBuffer;
using replay::Transition;

namespace {

Transition tr(std::uint64_t episode, std::size_t step, double tag = 0.0) {
  Transition t;
  t.obs = {tag, static_cast<double>(step)};
  t.action = {0.0};
  t.next_obs = {tag, static_cast<double>(step + 1)};
  t.true_reward = 0.5;
  t.episode_id = episode;
  t.step_index = step;
  return t;
}

void check_segment_integrity(const Segment& s, const ReplayBuffer& buf) {
  const auto first = buf.global_index(0);
  const auto pos = s.segment_id - first;
  for (std::size_t i = 0; i < s.length(); ++i) {
    const auto& t = buf.at(pos + i);
    REQUIRE(t.episode_id == s.episode_id);
    REQUIRE(t.step_index == s.start_step + i);
  }
}

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("zero capacity is rejected") { CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument); }

TEST_CASE("fifo eviction keeps size at capacity") {
  ReplayBuffer buf(5);
  for (std::size_t i = 0; i < 6; ++i) {
    buf.push(tr(0, i, static_cast<double>(i)));
    CHECK(buf.size() <= 5);
  }
  CHECK(buf.size() == 5);
  CHECK(buf.at(0).obs[0] == 1.0);  // item 0 evicted
  CHECK(buf.at(4).obs[0] == 5.0);
  CHECK(buf.global_index(0) == 1);
  CHECK(buf.total_pushed() == 6);
}

TEST_CASE("episode index shrinks with eviction and no segment touches evicted steps") {
  ReplayBuffer buf(25);
  for (std::uint64_t ep = 0; ep < 4; ++ep) {
    for (std::size_t s = 0; s < 10; ++s) buf.push(tr(ep, s));
  }
  // retained: episode 1 steps 5..9, episodes 2 and 3
  const auto& spans = buf.episodes();
  REQUIRE(spans.size() == 3);
  CHECK(spans.front().episode_id == 1);
  CHECK(spans.front().first_step == 5);
  CHECK(spans.front().length == 5);
  CHECK(buf.count_windows(10) == 2);
  CHECK(buf.count_windows(5) == 1 + 6 + 6);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto s = buf.sample_segment(6, rng);
    CHECK(s.episode_id >= 2);  // episode 1 has only 5 retained steps
    check_segment_integrity(s, buf);
  }
}

TEST_CASE("sample_batch: n = 0, underfull, determinism") {
  ReplayBuffer buf(10);
  Rng rng(3);
  CHECK(buf.sample_batch(0, rng).empty());
  CHECK_THROWS_AS(buf.sample_batch(1, rng), std::runtime_error);
  for (std::size_t i = 0; i < 10; ++i) buf.push(tr(0, i, static_cast<double>(i)));
  Rng a(8), b(8);
  const auto x = buf.sample_indices(50, a);
  CHECK(x == buf.sample_indices(50, b));
}

TEST_CASE("sample_batch is uniform (chi-square over 1e5 draws)") {
  ReplayBuffer buf(10);
  for (std::size_t i = 0; i < 10; ++i) buf.push(tr(0, i, static_cast<double>(i)));
  Rng rng(2024);
  std::vector<double> counts(10, 0.0);
  for (const auto& t : buf.sample_batch(100000, rng)) counts[static_cast<std::size_t>(t.obs[0])] += 1;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  // 9 degrees of freedom: P(chi2 > 27.88) = 0.001
  CHECK(chi2 < 27.88);
}

TEST_CASE("segment of full episode length returns the whole episode") {
  auto buf = testing::point_mass_buffer(600);
  Rng rng(4);
  const auto s = buf.sample_segment(200, rng);
  CHECK(s.start_step == 0);
  CHECK(s.length() == 200);
  check_segment_integrity(s, buf);
}

TEST_CASE("sampled segments never cross episodes over 1e4 draws and cache true return") {
  auto buf = testing::point_mass_buffer(1000, 5, 900);  // evicted prefix too
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const auto s = buf.sample_segment(50, rng);
    check_segment_integrity(s, buf);
    double sum = 0.0;
    for (double r : s.true_rewards) sum += r;
    REQUIRE(s.true_return == sum);
  }
}

TEST_CASE("sample_segment is deterministic and errors without an eligible episode") {
  auto buf = testing::point_mass_buffer(400);
  Rng a(1), b(1);
  CHECK(buf.sample_segment(50, a).segment_id == buf.sample_segment(50, b).segment_id);
  ReplayBuffer small(20);
  for (std::size_t i = 0; i < 20; ++i) small.push(tr(i, 0));
  CHECK_THROWS_AS(small.sample_segment(2, a), std::runtime_error);
}

TEST_CASE("recent segments come from the newest episodes") {
  auto buf = testing::point_mass_buffer(2000);
  Rng rng(7);
  const auto newest = buf.episodes().back().episode_id;
  for (int i = 0; i < 200; ++i) {
    const auto s = buf.sample_recent_segment(50, 2, rng);
    CHECK(s.episode_id + 1 >= newest);
  }
}

TEST_CASE("extract_segment rejects windows that cross episodes or are evicted") {
  ReplayBuffer buf(30);
  for (std::uint64_t ep = 0; ep < 4; ++ep) {
    for (std::size_t s = 0; s < 10; ++s) buf.push(tr(ep, s));
  }
  CHECK_THROWS_AS(buf.extract_segment(0, 5), std::out_of_range);
  CHECK_THROWS_AS(buf.extract_segment(18, 5), std::invalid_argument);
  const auto s = buf.extract_segment(20, 10);
  CHECK(s.episode_id == 2);
  CHECK(s.start_step == 0);
}

TEST_CASE("relabel_all matches predict_step_reward and is idempotent") {
  auto buf = testing::point_mass_buffer(1000);
  Rng rng(9);
  reward::RewardEnsemble ens(4, 2, 3, {16, 16}, rng);
  CHECK(replay::relabel_all(buf, ens) == 1000);
  for (int i = 0; i < 100; ++i) {
    const auto& t = buf.at(rng.uniform_index(buf.size()));
    CHECK(std::abs(t.reward_hat - reward::predict_step_reward(ens, t.obs, t.action)) < 1e-9);
  }
  std::vector<double> first;
  for (std::size_t i = 0; i < buf.size(); ++i) first.push_back(buf.at(i).reward_hat);
  replay::relabel_all(buf, ens);
  for (std::size_t i = 0; i < buf.size(); ++i) CHECK(buf.at(i).reward_hat == first[i]);
}

TEST_CASE("relabel of an empty buffer visits nothing") {
  ReplayBuffer buf(4);
  Rng rng(1);
  reward::RewardEnsemble ens(4, 2, 2, {4}, rng);
  CHECK(replay::relabel_all(buf, ens) == 0);
  CHECK(replay::relabel_all_serial(buf, ens) == 0);
}

}  // TEST_SUITE
