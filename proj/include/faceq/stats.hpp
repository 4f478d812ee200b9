#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace faceq {

/// Neumaier-compensated running sum; the result does not drift with the
/// number of terms, so reductions over large sets stay well under 1e-12.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double compensated_sum(std::span<const double> values);

double mean(std::span<const double> values);

/// Population (divide-by-N) standard deviation.
double population_std(std::span<const double> values);

/// 1-based ranks with ties receiving their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation (Pearson on average ranks). Returns 0 when
/// either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

/// floor(fraction * n) with a small allowance for decimal fractions that are
/// not exactly representable (0.29 * 100 evaluates to 28.999999999999996).
std::size_t floor_count(double fraction, std::size_t n);

}  // namespace faceq
