#pragma once

#include <algorithm>
#include <array>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrlob/errors.hpp"
#include "qrlob/model.hpp"
#include "qrlob/record.hpp"
#include "qrlob/stats.hpp"

namespace qrlob {

// -------------------------------------------------------------------------
// Price series
// -------------------------------------------------------------------------

// Mid price sampled on a uniform grid, last observation carried forward.
struct PriceSeries {
  double period = 1.0;              // seconds between samples
  double t0_tod_seconds = 32400.0;  // time of day of the first sample
  std::vector<double> values;
};

inline PriceSeries sample_mid_series(const EventLogData& log, double period) {
  if (!(period > 0.0)) throw DataError("sampling period must be positive");
  if (log.records.empty()) throw DataError("cannot sample an empty log");
  PriceSeries series;
  series.period = period;
  series.t0_tod_seconds =
      static_cast<double>(log.meta.t0_ns % kNsPerDay) * 1e-9;
  const std::int64_t t0 = log.meta.t0_ns;
  const double span =
      log.meta.horizon > 0.0
          ? log.meta.horizon
          : static_cast<double>(log.records.back().ev.ts_ns - t0) * 1e-9;
  const auto n = static_cast<std::size_t>(std::floor(span / period)) + 1;
  series.values.reserve(n);
  double current = log.init_state ? log.init_state->mid_price()
                                  : log.records.front().mid_price;
  std::size_t next_rec = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * period;
    const auto t_ns = t0 + static_cast<std::int64_t>(std::llround(t * 1e9));
    while (next_rec < log.records.size() &&
           log.records[next_rec].ev.ts_ns <= t_ns) {
      current = log.records[next_rec].mid_price;
      ++next_rec;
    }
    series.values.push_back(current);
  }
  return series;
}

// Restricts a series to samples whose time of day falls in [start, end).
inline PriceSeries slice_by_time_of_day(const PriceSeries& s, double start_tod,
                                        double end_tod) {
  PriceSeries out;
  out.period = s.period;
  out.t0_tod_seconds = start_tod;
  bool first = true;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double tod = s.t0_tod_seconds + static_cast<double>(i) * s.period;
    if (tod < start_tod || tod >= end_tod) continue;
    if (first) {
      out.t0_tod_seconds = tod;
      first = false;
    }
    out.values.push_back(s.values[i]);
  }
  return out;
}

// -------------------------------------------------------------------------
// Volatility
// -------------------------------------------------------------------------

inline constexpr double kTradingSecondsPerYear = 252.0 * 9.0 * 3600.0;

struct VolatilityOptions {
  double window_seconds = 600.0;
  double seconds_per_year = kTradingSecondsPerYear;
  int stride_samples = 1;  // rolling by default
};

// Rolling standard deviation of one-period log returns, annualized by the
// square root of periods per year. One value per window position.
inline std::vector<double> realized_volatility(const PriceSeries& series,
                                               const VolatilityOptions& opt) {
  const double ratio = opt.window_seconds / series.period;
  const auto w = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(w)) > 1e-9 || w < 2)
    throw DataError("window must be a multiple of the sampling period");
  if (series.values.size() < w + 1)
    throw DataError("series shorter than the volatility window");
  std::vector<double> returns(series.values.size() - 1);
  for (std::size_t i = 0; i + 1 < series.values.size(); ++i)
    returns[i] = std::log(series.values[i + 1] / series.values[i]);
  const double annualize =
      std::sqrt(opt.seconds_per_year / series.period);
  std::vector<double> out;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    sum += returns[i];
    sum2 += returns[i] * returns[i];
    if (i + 1 < w) continue;
    if (i >= w) {
      sum -= returns[i - w];
      sum2 -= returns[i - w] * returns[i - w];
    }
    const std::size_t pos = i + 1 - w;
    if (pos % static_cast<std::size_t>(opt.stride_samples) != 0) continue;
    const double m = sum / static_cast<double>(w);
    const double var = std::max(sum2 / static_cast<double>(w) - m * m, 0.0);
    out.push_back(std::sqrt(var) * annualize);
  }
  return out;
}

struct SeriesComparison {
  double relative_difference_pct = 0.0;
  double quadratic_error = 0.0;
  std::size_t excluded = 0;  // reference values of zero
};

inline SeriesComparison compare_vol(std::span<const double> sim,
                                    std::span<const double> real) {
  if (sim.size() != real.size())
    throw DataError("volatility series are not aligned");
  if (sim.empty()) throw DataError("empty volatility series");
  SeriesComparison out;
  double rel = 0.0, quad = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    if (real[i] == 0.0) {
      ++out.excluded;
      continue;
    }
    rel += 100.0 * (sim[i] - real[i]) / real[i];
    quad += (sim[i] - real[i]) * (sim[i] - real[i]);
    ++used;
  }
  if (used == 0) throw DataError("no comparable volatility samples");
  out.relative_difference_pct = rel / static_cast<double>(used);
  out.quadratic_error = quad / static_cast<double>(used);
  return out;
}

// -------------------------------------------------------------------------
// Activity
// -------------------------------------------------------------------------

// Summed trade sizes per fixed window across the log's span.
inline std::vector<double> traded_volumes(const EventLogData& log,
                                          double window_seconds) {
  if (!(window_seconds > 0.0)) throw DataError("window must be positive");
  const std::int64_t t0 = log.meta.t0_ns;
  double span = log.meta.horizon;
  if (!(span > 0.0) && !log.records.empty())
    span = static_cast<double>(log.records.back().ev.ts_ns - t0) * 1e-9;
  const auto n_windows =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / window_seconds)));
  std::vector<double> out(n_windows, 0.0);
  for (const auto& rec : log.records) {
    if (rec.ref_move || !is_trade(rec.ev.eta)) continue;
    const double t = static_cast<double>(rec.ev.ts_ns - t0) * 1e-9;
    auto w = static_cast<std::size_t>(t / window_seconds);
    if (w >= n_windows) w = n_windows - 1;
    out[w] += static_cast<double>(rec.ev.size);
  }
  return out;
}

// -------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov distance
// -------------------------------------------------------------------------

// Exact sup over the merged support of the two empirical CDFs.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DataError("KS statistic of empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (i >= a.size()) x = b[j];
    else if (j >= b.size()) x = a[i];
    else x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    const double diff = std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb);
    d = std::max(d, diff);
  }
  return d;
}

// -------------------------------------------------------------------------
// Distribution fits
// -------------------------------------------------------------------------

struct GammaFit {
  double shape = 0.0;
  double scale = 0.0;
  double ks = 0.0;  // sample vs fitted CDF
};

// Method-of-moments gamma fit; the KS distance against the fitted CDF is
// reported for the distribution comparisons.
inline GammaFit fit_gamma(std::span<const double> sample) {
  if (sample.size() < 30) throw DataError("gamma fit needs at least 30 points");
  for (double x : sample)
    if (!(x > 0.0)) throw DataError("gamma fit needs a positive sample");
  const double m = mean(sample);
  const double v = variance(sample);
  if (!(v > 0.0)) throw NumericalError("gamma fit of a constant sample");
  GammaFit fit;
  fit.shape = m * m / v;
  fit.scale = v / m;
  std::vector<double> xs(sample.begin(), sample.end());
  fit.ks = ks_statistic_one_sample(std::move(xs), [&](double x) {
    return boost::math::gamma_p(fit.shape, x / fit.scale);
  });
  return fit;
}

struct WeibullFit {
  double shape = 0.0;
  double scale = 0.0;
  double ks_weibull = 0.0;
  double ks_exponential = 0.0;  // exponential fit of the same sample
};

// Maximum likelihood Weibull fit: the shape solves a one-dimensional fixed
// point, then the scale follows in closed form.
inline WeibullFit fit_weibull(std::span<const double> sample) {
  if (sample.size() < 10) throw DataError("weibull fit needs at least 10 points");
  double log_mean = 0.0;
  for (double x : sample) {
    if (!(x > 0.0)) throw DataError("weibull fit needs a positive sample");
    log_mean += std::log(x);
  }
  log_mean /= static_cast<double>(sample.size());
  if (!(variance(sample) > 0.0))
    throw NumericalError("weibull fit of a constant sample");

  auto g = [&](double k) {
    double num = 0.0, den = 0.0;
    for (double x : sample) {
      const double xk = std::pow(x, k);
      num += xk * std::log(x);
      den += xk;
    }
    return num / den - 1.0 / k - log_mean;
  };
  double lo = 1e-3, hi = 1.0;
  while (g(hi) < 0.0 && hi < 512.0) hi *= 2.0;
  if (g(hi) < 0.0) throw NumericalError("weibull shape search failed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  WeibullFit fit;
  fit.shape = 0.5 * (lo + hi);
  double sum_k = 0.0;
  for (double x : sample) sum_k += std::pow(x, fit.shape);
  fit.scale =
      std::pow(sum_k / static_cast<double>(sample.size()), 1.0 / fit.shape);

  std::vector<double> xs(sample.begin(), sample.end());
  fit.ks_weibull = ks_statistic_one_sample(xs, [&](double x) {
    return 1.0 - std::exp(-std::pow(x / fit.scale, fit.shape));
  });
  const double rate = 1.0 / mean(sample);
  fit.ks_exponential = ks_statistic_one_sample(std::move(xs), [&](double x) {
    return 1.0 - std::exp(-rate * x);
  });
  return fit;
}

struct PowerLawTail {
  double exponent = 0.0;  // survival-function slope magnitude
  double r2 = 0.0;
  std::size_t tail_n = 0;
};

// Tail exponent from the log survival function above the cutoff. A cutoff
// of zero or below selects the sample median.
inline PowerLawTail fit_power_law(std::span<const double> sizes,
                                  double cutoff = 0.0,
                                  std::size_t min_tail = 100) {
  if (sizes.empty()) throw DataError("power-law fit of an empty sample");
  std::vector<double> xs(sizes.begin(), sizes.end());
  std::sort(xs.begin(), xs.end());
  if (cutoff <= 0.0) cutoff = xs[xs.size() / 2];
  const auto first =
      std::lower_bound(xs.begin(), xs.end(), cutoff) - xs.begin();
  const auto tail_n = xs.size() - static_cast<std::size_t>(first);
  if (tail_n < min_tail)
    throw DataError("insufficient tail above the cutoff: " +
                    std::to_string(tail_n) + " points");
  // One point per distinct size: (log x, log S(x)) with S the fraction >= x.
  std::vector<double> lx, ly;
  for (std::size_t i = static_cast<std::size_t>(first); i < xs.size();) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    const double survival =
        static_cast<double>(xs.size() - i) / static_cast<double>(tail_n);
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(survival));
    i = j;
  }
  if (lx.size() < 3)
    throw DataError("degenerate size distribution: fewer than 3 distinct "
                    "tail values");
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("degenerate size support");
  PowerLawTail out;
  const double slope = sxy / sxx;
  out.exponent = -slope;
  out.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
  out.tail_n = tail_n;
  return out;
}

// -------------------------------------------------------------------------
// Scale behaviour of prices
// -------------------------------------------------------------------------

// Variance of h-lag price increments divided by h, per lag.
inline std::vector<std::pair<double, double>> signature_plot(
    const PriceSeries& series, std::span<const double> lags_seconds) {
  std::vector<std::pair<double, double>> out;
  for (double h : lags_seconds) {
    const double ratio = h / series.period;
    const auto l = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(l)) > 1e-9 || l < 1)
      throw DataError("lag must be a positive multiple of the period");
    if (l >= series.values.size())
      throw DataError("lag exceeds the series span");
    std::vector<double> inc(series.values.size() - l);
    for (std::size_t i = 0; i + l < series.values.size(); ++i)
      inc[i] = series.values[i + l] - series.values[i];
    out.emplace_back(h, variance(inc) / h);
  }
  return out;
}

// Overlapping log returns at horizon tau.
inline std::vector<double> returns_sample(const PriceSeries& series,
                                          double tau) {
  const double ratio = tau / series.period;
  const auto l = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(l)) > 1e-9 || l < 1)
    throw DataError("tau must be a positive multiple of the period");
  if (l >= series.values.size()) throw DataError("tau exceeds the series span");
  std::vector<double> out(series.values.size() - l);
  for (std::size_t i = 0; i + l < series.values.size(); ++i)
    out[i] = std::log(series.values[i + l] / series.values[i]);
  return out;
}

// Sample autocorrelations for lags 0..max_lag.
inline std::vector<double> acf(std::span<const double> xs, int max_lag) {
  if (std::ssize(xs) <= max_lag)
    throw DataError("series shorter than the maximum lag");
  const double m = mean(xs);
  double denom = 0.0;
  for (double x : xs) denom += (x - m) * (x - m);
  std::vector<double> out(static_cast<std::size_t>(max_lag) + 1, 0.0);
  if (!(denom > 0.0)) {
    out[0] = 1.0;
    return out;
  }
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + static_cast<std::size_t>(k) < xs.size(); ++t)
      s += (xs[t] - m) * (xs[t + static_cast<std::size_t>(k)] - m);
    out[static_cast<std::size_t>(k)] = s / denom;
  }
  return out;
}

struct PowerLawDecay {
  double exponent = 0.0;  // slope of log acf vs log lag (negative = decay)
  double r2 = 0.0;
  std::size_t used_lags = 0;
  std::size_t excluded_lags = 0;  // non-positive autocorrelations
  bool reliable = false;
};

// Decay exponent of the absolute-return autocorrelation over a lag range.
// Unreliable when most correlations sit below the noise band or were
// excluded as non-positive.
inline PowerLawDecay long_range_dependence(std::span<const double> returns,
                                           int lag_min = 1, int lag_max = 100) {
  if (returns.size() < 1000)
    throw DataError("long-range dependence needs at least 1000 returns");
  if (lag_min < 1 || lag_max <= lag_min) throw DataError("bad lag range");
  std::vector<double> abs_r(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) abs_r[i] = std::abs(returns[i]);
  const auto correlations = acf(abs_r, lag_max);
  const double noise_band = 2.0 / std::sqrt(static_cast<double>(returns.size()));
  std::vector<double> lx, ly;
  std::size_t excluded = 0;
  double mean_acf = 0.0;
  for (int k = lag_min; k <= lag_max; ++k) {
    const double a = correlations[static_cast<std::size_t>(k)];
    mean_acf += a;
    if (a <= 0.0) {
      ++excluded;
      continue;
    }
    lx.push_back(std::log(static_cast<double>(k)));
    ly.push_back(std::log(a));
  }
  mean_acf /= static_cast<double>(lag_max - lag_min + 1);
  PowerLawDecay out;
  out.excluded_lags = excluded;
  out.used_lags = lx.size();
  if (lx.size() >= 3) {
    const double mx = mean(lx), my = mean(ly);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
      syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx > 0.0) {
      out.exponent = sxy / sxx;
      out.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    }
  }
  out.reliable = out.used_lags * 2 >= static_cast<std::size_t>(lag_max - lag_min + 1) &&
                 mean_acf > noise_band;
  return out;
}

// -------------------------------------------------------------------------
// Event excitation
// -------------------------------------------------------------------------

struct TransitionMatrix {
  std::array<std::array<double, kHawkesDim>, kHawkesDim> p{};  // rows sum to 1
  std::array<double, kHawkesDim> marginal{};  // unconditional next-event freqs
  std::array<bool, kHawkesDim> row_defined{};
};

// Conditional probability of the next best-quote event type given the
// previous one, over the six (side, type) components.
inline TransitionMatrix transition_matrix(const EventLogData& log) {
  std::array<std::array<std::int64_t, kHawkesDim>, kHawkesDim> counts{};
  std::array<std::int64_t, kHawkesDim> next_counts{};
  std::optional<int> prev;
  std::int64_t transitions = 0;
  for (const auto& rec : log.records) {
    if (rec.ref_move || rec.ev.level != 1) continue;
    const int c = hawkes_component(rec.ev.side, rec.ev.eta);
    if (prev) {
      counts[static_cast<std::size_t>(*prev)][static_cast<std::size_t>(c)] += 1;
      next_counts[static_cast<std::size_t>(c)] += 1;
      ++transitions;
    }
    prev = c;
  }
  if (transitions < 1)
    throw DataError("transition matrix needs at least two best-quote events");
  TransitionMatrix out;
  for (int i = 0; i < kHawkesDim; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < kHawkesDim; ++j)
      row += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    out.row_defined[static_cast<std::size_t>(i)] = row > 0;
    for (int j = 0; j < kHawkesDim; ++j)
      out.p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          row > 0 ? static_cast<double>(counts[static_cast<std::size_t>(i)]
                                              [static_cast<std::size_t>(j)]) /
                        static_cast<double>(row)
                  : 0.0;
  }
  for (int j = 0; j < kHawkesDim; ++j)
    out.marginal[static_cast<std::size_t>(j)] =
        static_cast<double>(next_counts[static_cast<std::size_t>(j)]) /
        static_cast<double>(transitions);
  return out;
}

// Mean self-transition enrichment P(next=i | prev=i) / P(next=i); near one
// for memoryless flow, above one under self-excitation.
inline double diagonal_enrichment(const TransitionMatrix& m) {
  double sum = 0.0;
  int used = 0;
  for (int i = 0; i < kHawkesDim; ++i) {
    const auto is = static_cast<std::size_t>(i);
    if (!m.row_defined[is] || !(m.marginal[is] > 0.0)) continue;
    sum += m.p[is][is] / m.marginal[is];
    ++used;
  }
  if (used == 0) throw DataError("no defined rows in the transition matrix");
  return sum / static_cast<double>(used);
}

// -------------------------------------------------------------------------
// Book shape
// -------------------------------------------------------------------------

// Time-averaged volume per level (sides pooled), normalized by the grand
// mean so the output averages to one. Needs the log's initial state.
inline std::vector<double> book_shape(const EventLogData& log) {
  if (!log.init_state)
    throw DataError("book shape needs a log with book snapshots");
  LobState st = *log.init_state;
  const int k = st.depth();
  std::vector<double> weighted(static_cast<std::size_t>(k), 0.0);
  double total_time = 0.0;
  std::int64_t prev_ts = log.meta.t0_ns;
  for (const auto& rec : log.records) {
    const double dt = static_cast<double>(rec.ev.ts_ns - prev_ts) * 1e-9;
    if (dt > 0.0) {
      for (int level = 1; level <= k; ++level)
        weighted[static_cast<std::size_t>(level - 1)] +=
            dt * 0.5 *
            static_cast<double>(st.queue(Side::Bid, level) +
                                st.queue(Side::Ask, level));
      total_time += dt;
    }
    if (rec.ref_move) {
      st = shift_ref_price(std::move(st), rec.ev.side, rec.ev.size);
    } else {
      auto res = apply_event(std::move(st), rec.ev);
      st = std::move(res.state);
    }
    prev_ts = rec.ev.ts_ns;
  }
  if (!(total_time > 0.0)) throw DataError("log spans no time");
  double grand = 0.0;
  for (double w : weighted) grand += w / total_time;
  grand /= static_cast<double>(k);
  if (!(grand > 0.0)) throw DataError("book was empty for the whole log");
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    out[static_cast<std::size_t>(i)] =
        weighted[static_cast<std::size_t>(i)] / total_time / grand;
  return out;
}

// -------------------------------------------------------------------------
// Convenience extractors
// -------------------------------------------------------------------------

inline std::vector<double> order_sizes(const EventLogData& log) {
  std::vector<double> out;
  for (const auto& rec : log.records)
    if (!rec.ref_move) out.push_back(static_cast<double>(rec.ev.size));
  return out;
}

inline std::vector<double> trade_sizes(const EventLogData& log) {
  std::vector<double> out;
  for (const auto& rec : log.records)
    if (!rec.ref_move && is_trade(rec.ev.eta))
      out.push_back(static_cast<double>(rec.ev.size));
  return out;
}

inline std::vector<double> trade_interarrivals(const EventLogData& log) {
  std::vector<double> out;
  std::optional<std::int64_t> prev;
  for (const auto& rec : log.records) {
    if (rec.ref_move || !is_trade(rec.ev.eta)) continue;
    if (prev) {
      const double dt = static_cast<double>(rec.ev.ts_ns - *prev) * 1e-9;
      if (dt > 0.0) out.push_back(dt);
    }
    prev = rec.ev.ts_ns;
  }
  return out;
}

inline std::vector<double> queue_size_sample(const EventLogData& log,
                                             int level) {
  std::vector<double> out;
  for (const auto& rec : log.records)
    if (!rec.ref_move && rec.ev.level == level && rec.ev.q_before > 0)
      out.push_back(static_cast<double>(rec.ev.q_before));
  return out;
}

}  // namespace qrlob
