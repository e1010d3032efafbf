#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "qrlob/errors.hpp"

namespace qrlob {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Population variance.
inline double variance(std::span<const double> xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

// One-sample Kolmogorov-Smirnov statistic against a theoretical CDF.
inline double ks_statistic_one_sample(
    std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw DataError("KS statistic of empty sample");
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

// Asymptotic one-sample KS critical value at significance alpha.
inline double ks_critical_value(std::size_t n, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c / std::sqrt(static_cast<double>(n));
}

}  // namespace qrlob
