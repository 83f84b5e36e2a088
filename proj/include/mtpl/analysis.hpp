#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtpl/reward_model.hpp"

namespace mtpl::analysis {

/// Raised when a statistic has no defined value for the given input
/// (zero variance, zero baseline, empty input).
class UndefinedResult : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Product-moment correlation. Needs equal lengths >= 2 and non-zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// 1-based ranks with ties sharing the average of their positions.
std::vector<double> average_ranks(std::span<const double> xs);

/// Pearson correlation of the average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

/// Share of records labelled 0.5.
double equal_proportion(std::span<const reward::PreferenceRecord> records);
double equal_proportion(std::span<const double> labels);

/// Percentage improvement of mtpl_mean over baseline_mean.
double gain(double baseline_mean, double mtpl_mean);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std
};
MeanStd mean_std(std::span<const double> xs);

}  // namespace mtpl::analysis
