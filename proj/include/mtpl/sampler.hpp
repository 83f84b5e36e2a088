#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/rng.hpp"
#include "mtpl/segment.hpp"

namespace mtpl::sampler {

enum class Strategy { uniform, seqrank, disagreement };
std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct QueryBatch {
  std::vector<SegmentPair> pairs;
  Strategy strategy = Strategy::uniform;
};

/// n pairs of independently, uniformly sampled segments. The two members of a
/// pair are always distinct windows.
QueryBatch uniform_pairs(const replay::ReplayBuffer& buffer, std::size_t n, std::size_t length,
                         Rng& rng);

struct SeqRankState {
  std::optional<Segment> anchor;
};

struct SeqRankDraw {
  QueryBatch batch;
  SeqRankState state;
};

/// Pairs (anchor, fresh) where fresh comes from the `recent` newest episodes.
/// The first call samples the anchor itself.
SeqRankDraw seqrank_pairs(const replay::ReplayBuffer& buffer, std::size_t n, std::size_t length,
                          SeqRankState state, Rng& rng, std::size_t recent = 5);

/// Anchor update after a label on (anchor, fresh): the fresh segment takes
/// over only when it was preferred (y = 1). Equal or y = 0 keeps the anchor.
/// Records whose seg0 is not the current anchor are ignored.
SeqRankState seqrank_update(SeqRankState state, const reward::PreferenceRecord& record);

/// Draws candidate_factor * n uniform pairs and keeps the n with the largest
/// ensemble disagreement; ties keep candidate order.
QueryBatch disagreement_pairs(const replay::ReplayBuffer& buffer, std::size_t n,
                              std::size_t length, const reward::RewardEnsemble& ensemble,
                              std::size_t candidate_factor, Rng& rng);

}  // namespace mtpl::sampler
