#include "mtpl/teacher.hpp"

#include <cmath>
#include <stdexcept>

namespace mtpl::teacher {

std::string to_string(Mode m) { return m == Mode::sim ? "sim" : "human"; }

Mode mode_from_string(const std::string& s) {
  if (s == "sim") return Mode::sim;
  if (s == "human") return Mode::human;
  throw std::invalid_argument("unknown teacher mode: " + s);
}

RunningReturnStats update_running_return(RunningReturnStats stats, double episode_return) {
  stats.episode_count += 1;
  stats.return_sum += episode_return;
  stats.mean_return = stats.return_sum / static_cast<double>(stats.episode_count);
  return stats;
}

double equal_threshold(double alpha, double avgret, int len_seg, int len_env) {
  if (len_env <= 0) throw std::invalid_argument("len_env must be positive");
  return alpha * avgret * len_seg / len_env;
}

double sim_label(const Segment& seg0, const Segment& seg1, double delta) {
  const double r0 = seg0.true_return;
  const double r1 = seg1.true_return;
  if (std::abs(r0 - r1) < delta || r0 == r1) return 0.5;
  return r0 > r1 ? 0.0 : 1.0;
}

Teacher::Teacher(TeacherConfig config, LabelChannel* channel)
    : config_(config), channel_(channel) {
  if (config_.alpha < 0.0) throw std::invalid_argument("teacher alpha must be non-negative");
  if (config_.len_seg > config_.len_env)
    throw std::invalid_argument("segment length cannot exceed episode length");
}

void Teacher::observe_episode_return(double episode_return) {
  stats_ = update_running_return(stats_, episode_return);
}

double Teacher::delta() const {
  return equal_threshold(config_.alpha, stats_.mean_return, config_.len_seg, config_.len_env);
}

std::vector<reward::PreferenceRecord> Teacher::request_labels(std::span<const SegmentPair> pairs,
                                                              const std::string& env_name,
                                                              std::chrono::milliseconds timeout) {
  std::vector<reward::PreferenceRecord> out;
  if (config_.mode == Mode::sim) {
    const double d = delta();
    out.reserve(pairs.size());
    for (const auto& p : pairs)
      out.push_back({p.first, p.second, sim_label(p.first, p.second, d), reward::Source::sim});
    return out;
  }
  if (channel_ == nullptr || !channel_->running())
    throw std::runtime_error("human teacher mode needs a running label service");
  const auto labels = channel_->collect(pairs, env_name, timeout);
  for (const auto& l : labels) {
    if (l.pair_index >= pairs.size()) throw std::logic_error("label refers to an unknown pair");
    if (!reward::is_valid_label(l.y)) throw std::logic_error("label service delivered an invalid label");
    out.push_back({pairs[l.pair_index].first, pairs[l.pair_index].second, l.y, reward::Source::human});
  }
  dropped_ += pairs.size() - out.size();
  return out;
}

}  // namespace mtpl::teacher
