#include "mtpl/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mtpl::sampler {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::seqrank: return "seqrank";
    case Strategy::disagreement: return "disagreement";
  }
  return "uniform";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "uniform") return Strategy::uniform;
  if (s == "seqrank") return Strategy::seqrank;
  if (s == "disagreement") return Strategy::disagreement;
  throw std::invalid_argument("unknown sampler: " + s);
}

QueryBatch uniform_pairs(const replay::ReplayBuffer& buffer, std::size_t n, std::size_t length,
                         Rng& rng) {
  QueryBatch batch{{}, Strategy::uniform};
  if (n == 0) return batch;
  if (buffer.count_windows(length) < 2)
    throw std::runtime_error("need at least two eligible segments to form a query pair");
  batch.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Segment a = buffer.sample_segment(length, rng);
    Segment b = buffer.sample_segment(length, rng);
    while (b.segment_id == a.segment_id) b = buffer.sample_segment(length, rng);
    batch.pairs.push_back({std::move(a), std::move(b)});
  }
  return batch;
}

SeqRankDraw seqrank_pairs(const replay::ReplayBuffer& buffer, std::size_t n, std::size_t length,
                          SeqRankState state, Rng& rng, std::size_t recent) {
  if (buffer.count_windows(length) < 2)
    throw std::runtime_error("need at least two eligible segments to form a query pair");
  if (!state.anchor) state.anchor = buffer.sample_segment(length, rng);
  if (state.anchor->length() != length) throw std::invalid_argument("anchor length differs from requested length");
  QueryBatch batch{{}, Strategy::seqrank};
  for (std::size_t i = 0; i < n; ++i) {
    Segment fresh = buffer.sample_recent_segment(length, recent, rng);
    // the recent region may only hold the anchor itself; widen to the whole buffer then
    for (int tries = 0; fresh.segment_id == state.anchor->segment_id; ++tries)
      fresh = tries < 8 ? buffer.sample_recent_segment(length, recent, rng)
                        : buffer.sample_segment(length, rng);
    batch.pairs.push_back({*state.anchor, std::move(fresh)});
  }
  return {std::move(batch), std::move(state)};
}

SeqRankState seqrank_update(SeqRankState state, const reward::PreferenceRecord& record) {
  if (!state.anchor || record.seg0.segment_id != state.anchor->segment_id) return state;
  if (record.y == 1.0) state.anchor = record.seg1;
  return state;
}

QueryBatch disagreement_pairs(const replay::ReplayBuffer& buffer, std::size_t n,
                              std::size_t length, const reward::RewardEnsemble& ensemble,
                              std::size_t candidate_factor, Rng& rng) {
  if (ensemble.size() < 2) throw std::invalid_argument("disagreement sampling needs K >= 2");
  if (candidate_factor == 0) throw std::invalid_argument("candidate_factor must be positive");
  QueryBatch candidates = uniform_pairs(buffer, n * candidate_factor, length, rng);
  std::vector<double> score(candidates.pairs.size());
  for (std::size_t i = 0; i < score.size(); ++i)
    score[i] = reward::disagreement(ensemble, candidates.pairs[i].first, candidates.pairs[i].second);
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  QueryBatch out{{}, Strategy::disagreement};
  for (std::size_t i = 0; i < n && i < order.size(); ++i)
    out.pairs.push_back(std::move(candidates.pairs[order[i]]));
  return out;
}

}  // namespace mtpl::sampler
