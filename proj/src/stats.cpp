#include "faceq/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faceq/error.hpp"

namespace faceq {

void CompensatedSum::add(double x) noexcept {
  double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    compensation_ += (sum_ - t) + x;
  else
    compensation_ += (x - t) + sum_;
  sum_ = t;
}

double compensated_sum(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error("mean of an empty set");
  return compensated_sum(values) / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  double m = mean(values);
  CompensatedSum s;
  for (double v : values) s.add((v - m) * (v - m));
  return std::sqrt(s.value() / static_cast<double>(values.size()));
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("pearson: length mismatch");
  if (a.size() < 2) throw Error("pearson: need at least two samples");
  double ma = mean(a);
  double mb = mean(b);
  CompensatedSum sab, saa, sbb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab.add((a[i] - ma) * (b[i] - mb));
    saa.add((a[i] - ma) * (a[i] - ma));
    sbb.add((b[i] - mb) * (b[i] - mb));
  }
  if (saa.value() <= 0.0 || sbb.value() <= 0.0) return 0.0;
  return sab.value() / std::sqrt(saa.value() * sbb.value());
}

double spearman(std::span<const double> a, std::span<const double> b) {
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  return pearson(ra, rb);
}

std::size_t floor_count(double fraction, std::size_t n) {
  double x = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::floor(x + 1e-9));
  return std::min(k, n);
}

}  // namespace faceq
