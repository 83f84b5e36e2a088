#include "mtpl/replay.hpp"

#include <stdexcept>

namespace mtpl::replay {

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  slots_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (size_ == slots_.size()) {
    // evict the oldest step and shrink its episode run
    head_ = (head_ + 1) % slots_.size();
    --size_;
    EpisodeSpan& front = spans_.front();
    ++front.first_global;
    ++front.first_step;
    if (--front.length == 0) spans_.pop_front();
  }
  const std::uint64_t g = total_pushed_++;
  const bool extends = !spans_.empty() && spans_.back().episode_id == t.episode_id &&
                       spans_.back().first_global + spans_.back().length == g &&
                       spans_.back().first_step + spans_.back().length == t.step_index;
  if (extends)
    ++spans_.back().length;
  else
    spans_.push_back(EpisodeSpan{t.episode_id, g, t.step_index, 1});
  slots_[physical(size_)] = std::move(t);
  ++size_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (n > 0 && size_ == 0) throw std::runtime_error("cannot sample from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(size_));
  return idx;
}

std::vector<Transition> ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(n);
  for (auto i : sample_indices(n, rng)) out.push_back(at(i));
  return out;
}

std::size_t ReplayBuffer::count_windows(std::size_t length) const {
  if (length == 0) return 0;
  std::size_t w = 0;
  for (const auto& s : spans_)
    if (s.length >= length) w += s.length - length + 1;
  return w;
}

Segment ReplayBuffer::sample_from_spans(std::size_t length, std::size_t first_span, Rng& rng) const {
  if (length == 0) throw std::invalid_argument("segment length must be positive");
  std::size_t windows = 0;
  for (std::size_t i = first_span; i < spans_.size(); ++i)
    if (spans_[i].length >= length) windows += spans_[i].length - length + 1;
  if (windows == 0) throw std::runtime_error("no stored episode has enough consecutive steps for a segment");
  std::size_t pick = static_cast<std::size_t>(rng.uniform_index(windows));
  for (std::size_t i = first_span; i < spans_.size(); ++i) {
    const auto& s = spans_[i];
    if (s.length < length) continue;
    const std::size_t n = s.length - length + 1;
    if (pick < n) return extract_segment(s.first_global + pick, length);
    pick -= n;
  }
  throw std::logic_error("window selection out of range");
}

Segment ReplayBuffer::sample_segment(std::size_t length, Rng& rng) const {
  return sample_from_spans(length, 0, rng);
}

Segment ReplayBuffer::sample_recent_segment(std::size_t length, std::size_t recent, Rng& rng) const {
  if (recent == 0) throw std::invalid_argument("recent episode count must be positive");
  std::size_t first = spans_.size();
  std::size_t found = 0;
  while (first > 0 && found < recent) {
    --first;
    if (spans_[first].length >= length) ++found;
  }
  return sample_from_spans(length, first, rng);
}

Segment ReplayBuffer::extract_segment(std::uint64_t first_global, std::size_t length) const {
  const std::uint64_t oldest = total_pushed_ - size_;
  if (length == 0 || first_global < oldest || first_global + length > total_pushed_)
    throw std::out_of_range("segment window is not retained in the buffer");
  const std::size_t pos = static_cast<std::size_t>(first_global - oldest);
  const Transition& first = at(pos);
  Segment seg;
  seg.segment_id = first_global;
  seg.episode_id = first.episode_id;
  seg.start_step = first.step_index;
  seg.obs_dim = first.obs.size();
  seg.act_dim = first.action.size();
  seg.obs.reserve(length * seg.obs_dim);
  seg.actions.reserve(length * seg.act_dim);
  seg.true_rewards.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const Transition& tr = at(pos + t);
    if (tr.episode_id != seg.episode_id || tr.step_index != seg.start_step + t)
      throw std::invalid_argument("segment window crosses an episode boundary");
    seg.obs.insert(seg.obs.end(), tr.obs.begin(), tr.obs.end());
    seg.actions.insert(seg.actions.end(), tr.action.begin(), tr.action.end());
    seg.true_rewards.push_back(tr.true_reward);
    seg.true_return += tr.true_reward;
  }
  return seg;
}

std::size_t relabel_all(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(buffer.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Transition& t = buffer.at(static_cast<std::size_t>(i));
    t.reward_hat = reward::predict_step_reward(ensemble, t.obs, t.action);
  }
  return buffer.size();
}

std::size_t relabel_all_serial(ReplayBuffer& buffer, const reward::RewardEnsemble& ensemble) {
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    Transition& t = buffer.at(i);
    t.reward_hat = reward::predict_step_reward(ensemble, t.obs, t.action);
  }
  return buffer.size();
}

}  // namespace mtpl::replay
