#include "mtpl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtpl::analysis {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: inputs differ in length");
  if (xs.size() < 2) throw UndefinedResult("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedResult("pearson: zero variance input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean((i+1)..j)
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: inputs differ in length");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double equal_proportion(std::span<const double> labels) {
  if (labels.empty()) throw UndefinedResult("equal_proportion: no records");
  const auto equal = std::count(labels.begin(), labels.end(), 0.5);
  return static_cast<double>(equal) / static_cast<double>(labels.size());
}

double equal_proportion(std::span<const reward::PreferenceRecord> records) {
  std::vector<double> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.y);
  return equal_proportion(labels);
}

double gain(double baseline_mean, double mtpl_mean) {
  if (baseline_mean == 0.0) throw UndefinedResult("gain: baseline mean is zero");
  return (mtpl_mean - baseline_mean) / baseline_mean * 100.0;
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw UndefinedResult("mean_std: empty input");
  MeanStd out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  for (double x : xs) out.std += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(xs.size()));
  return out;
}

}  // namespace mtpl::analysis
