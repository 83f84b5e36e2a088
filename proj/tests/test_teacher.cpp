#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mtpl/teacher.hpp"

using namespace mtpl;
using teacher::equal_threshold;
using teacher::sim_label;

namespace {

Segment seg_with_return(double r) {
  Segment s;
  s.true_rewards = {r};
  s.true_return = r;
  return s;
}

std::vector<SegmentPair> pairs_from(Rng& rng, std::size_t n) {
  std::vector<SegmentPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({testing::random_segment(rng, 5, 2, 1, 2 * i),
                   testing::random_segment(rng, 5, 2, 1, 2 * i + 1)});
  }
  return out;
}

// Scripted human: answers the first `answered` pairs with a fixed label.
class ScriptedChannel : public teacher::LabelChannel {
public:
  ScriptedChannel(double y, std::size_t answered) : y_(y), answered_(answered) {}
  bool running() const override { return true; }
  std::vector<teacher::HumanLabel> collect(std::span<const SegmentPair> pairs, const std::string&,
                                           std::chrono::milliseconds) override {
    std::vector<teacher::HumanLabel> out;
    for (std::size_t i = 0; i < std::min(answered_, pairs.size()); ++i) {
      out.push_back({i, y_, "script"});
    }
    return out;
  }

private:
  double y_;
  std::size_t answered_;
};

class StoppedChannel : public teacher::LabelChannel {
public:
  bool running() const override { return false; }
  std::vector<teacher::HumanLabel> collect(std::span<const SegmentPair>, const std::string&,
                                           std::chrono::milliseconds) override {
    return {};
  }
};

}  // namespace

TEST_SUITE("teacher") {

TEST_CASE("threshold formula") {
  CHECK(equal_threshold(0.1, 500, 50, 1000) == 2.5);
  CHECK(equal_threshold(0.0, 123.4, 50, 200) == 0.0);
  CHECK(equal_threshold(0.3, 0.0, 50, 200) == 0.0);
  CHECK_THROWS_AS(equal_threshold(0.1, 10, 50, 0), std::invalid_argument);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(0, 1), r = rng.uniform(0, 1000);
    const int ls = 1 + static_cast<int>(rng.uniform_index(100));
    const int le = ls + static_cast<int>(rng.uniform_index(1000));
    CHECK(equal_threshold(a, r, ls, le) == a * r * ls / le);
  }
}

TEST_CASE("sim_label examples and boundary") {
  CHECK(sim_label(seg_with_return(10), seg_with_return(9), 2.5) == 0.5);
  CHECK(sim_label(seg_with_return(10), seg_with_return(3), 2.5) == 0.0);
  CHECK(sim_label(seg_with_return(3), seg_with_return(10), 2.5) == 1.0);
  CHECK(sim_label(seg_with_return(4), seg_with_return(4), 0.0) == 0.5);
  // |dR| == delta is explicit
  CHECK(sim_label(seg_with_return(5), seg_with_return(3), 2.0) == 0.0);
}

TEST_CASE("sim_label antisymmetry and monotonicity in delta over 1e4 pairs") {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const auto a = seg_with_return(rng.uniform(0, 50));
    const auto b = seg_with_return(rng.uniform(0, 50));
    const double d = rng.uniform(0, 10);
    const double ab = sim_label(a, b, d), ba = sim_label(b, a, d);
    if (ab == 0.5) {
      CHECK(ba == 0.5);
    } else {
      CHECK(ba == 1.0 - ab);
    }
    if (ab == 0.5) CHECK(sim_label(a, b, d + rng.uniform(0, 10)) == 0.5);
  }
}

TEST_CASE("running return is the exact arithmetic mean") {
  teacher::RunningReturnStats s;
  CHECK(s.mean_return == 0.0);
  s = teacher::update_running_return(s, 100);
  CHECK(s.mean_return == 100.0);
  s = teacher::update_running_return(s, 200);
  CHECK(s.mean_return == 150.0);
  CHECK(s.episode_count == 2);
}

TEST_CASE("delta starts at zero and tracks completed episodes") {
  teacher::Teacher t({0.1, 50, 200, teacher::Mode::sim});
  CHECK(t.delta() == 0.0);
  t.observe_episode_return(80);
  t.observe_episode_return(120);
  CHECK(t.delta() == equal_threshold(0.1, 100, 50, 200));
}

TEST_CASE("invalid teacher configs are rejected") {
  CHECK_THROWS_AS(teacher::Teacher({-0.1, 50, 200}), std::invalid_argument);
  CHECK_THROWS_AS(teacher::Teacher({0.1, 300, 200}), std::invalid_argument);
}

TEST_CASE("sim mode labels every pair synchronously") {
  Rng rng(3);
  teacher::Teacher t({0.1, 5, 200});
  t.observe_episode_return(50);
  const auto pairs = pairs_from(rng, 10);
  const auto recs = t.request_labels(pairs);
  REQUIRE(recs.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(recs[i].y == sim_label(pairs[i].first, pairs[i].second, t.delta()));
    CHECK(recs[i].source == reward::Source::sim);
  }
}

TEST_CASE("human mode needs a running channel") {
  Rng rng(4);
  const auto pairs = pairs_from(rng, 2);
  teacher::Teacher none({0.1, 5, 200, teacher::Mode::human});
  CHECK_THROWS_AS(none.request_labels(pairs), std::runtime_error);
  StoppedChannel stopped;
  teacher::Teacher down({0.1, 5, 200, teacher::Mode::human}, &stopped);
  CHECK_THROWS_AS(down.request_labels(pairs), std::runtime_error);
}

TEST_CASE("human mode with a scripted equal responder") {
  Rng rng(5);
  ScriptedChannel ch(0.5, 100);
  teacher::Teacher t({0.1, 5, 200, teacher::Mode::human}, &ch);
  const auto recs = t.request_labels(pairs_from(rng, 6));
  CHECK(recs.size() == 6);
  for (const auto& r : recs) {
    CHECK(r.y == 0.5);
    CHECK(r.source == reward::Source::human);
  }
  CHECK(t.dropped() == 0);
}

TEST_CASE("human mode partial answers: 3 of 10 kept, 7 dropped") {
  Rng rng(6);
  ScriptedChannel ch(1.0, 3);
  teacher::Teacher t({0.1, 5, 200, teacher::Mode::human}, &ch);
  const auto pairs = pairs_from(rng, 10);
  const auto recs = t.request_labels(pairs);
  CHECK(recs.size() == 3);
  CHECK(t.dropped() == 7);
  CHECK(recs[2].seg0.segment_id == pairs[2].first.segment_id);
}

TEST_CASE("mode names") {
  CHECK(teacher::mode_from_string("human") == teacher::Mode::human);
  CHECK(teacher::to_string(teacher::Mode::sim) == "sim");
  CHECK_THROWS_AS(teacher::mode_from_string("oracle"), std::invalid_argument);
}

}  // TEST_SUITE
