#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrlob/book.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/flow.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

enum class Variant : std::uint8_t { QRU, QR, FTQR, SAQR, HawkesU, HawkesS };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::QRU: return "QRU";
    case Variant::QR: return "QR";
    case Variant::FTQR: return "FTQR";
    case Variant::SAQR: return "SAQR";
    case Variant::HawkesU: return "HAWKES_U";
    case Variant::HawkesS: return "HAWKES_S";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  std::string u(s);
  std::transform(u.begin(), u.end(), u.begin(), ::toupper);
  if (u == "QRU") return Variant::QRU;
  if (u == "QR") return Variant::QR;
  if (u == "FTQR") return Variant::FTQR;
  if (u == "SAQR") return Variant::SAQR;
  if (u == "HAWKES_U" || u == "HAWKESU") return Variant::HawkesU;
  if (u == "HAWKES_S" || u == "HAWKESS") return Variant::HawkesS;
  throw DataError("unknown variant '" + std::string(s) + "'");
}

inline bool is_hawkes(Variant v) {
  return v == Variant::HawkesU || v == Variant::HawkesS;
}
inline bool uses_five_types(Variant v) { return v == Variant::FTQR; }

struct CalibrationOptions {
  int n_max = 60;        // queue-size bucket cap in AES units, pooled above
  int min_obs = 50;      // buckets with fewer events borrow a neighbour's rate
  double aes_override = 0.0;  // > 0 fixes the quantization unit
  std::optional<Side> side_filter;  // default: pool bid and ask per level
  int size_bucket_cap = 60;         // largest order-size bucket, AES units
};

// Per-level intensity table. Rates are events/second as functions of the
// queue-size bucket; raw counts are kept so that the counting identities
// between the model variants stay exact.
struct LevelTable {
  int level = 1;
  double aes = 1.0;
  int n_max = 60;
  int size_cap = 60;  // size buckets run 1..size_cap (SAQR only)

  std::vector<std::int64_t> n_events;   // events per bucket
  std::vector<double> exposure;         // summed interarrival seconds
  std::array<std::vector<std::int64_t>, kNumEventTypes> n_by_type;
  // SAQR counts: [eta][size_bucket-1][queue_bucket]
  std::array<std::vector<std::vector<std::int64_t>>, kNumEventTypes>
      n_by_type_size;

  std::vector<double> total_rate;  // estimated arrival rate per bucket
  std::array<std::vector<double>, kNumEventTypes> rate;
  std::array<std::vector<std::vector<double>>, kNumEventTypes> rate_by_size;

  std::vector<bool> low_confidence;  // borrowed or unobserved buckets
  std::vector<int> fill_source;      // donor bucket index, -1 if native

  int bucket_of(std::int64_t q) const {
    return std::min(quantize_queue(q, aes), n_max);
  }
  int size_bucket_of(std::int64_t s) const {
    return std::min(quantize_queue(s, aes), size_cap);
  }
  double rate_at(EventType eta, int bucket) const {
    return rate[static_cast<int>(eta)][static_cast<std::size_t>(
        std::min(bucket, n_max))];
  }
  double total_at(int bucket) const {
    return total_rate[static_cast<std::size_t>(std::min(bucket, n_max))];
  }
};

struct SizeDistribution {
  enum class Conditioning { Stationary, ConditionalOnQueue };
  DiscretePmf pmf;
  Conditioning conditioning = Conditioning::Stationary;
  int queue_bucket = -1;  // set for the conditional variant
};

namespace detail {

inline double level_aes(std::span<const FlowSegment> segments, int level,
                        const CalibrationOptions& opt) {
  if (opt.aes_override > 0.0) return opt.aes_override;
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& seg : segments)
    for (const auto& ev : seg.events) {
      if (ev.level != level) continue;
      if (opt.side_filter && ev.side != *opt.side_filter) continue;
      sum += static_cast<double>(ev.size);
      ++n;
    }
  if (n == 0)
    throw DataError("no events at level " + std::to_string(level) +
                    "; cannot derive AES");
  return sum / static_cast<double>(n);
}

// Completes rates in sparse buckets from the nearest well-observed bucket.
// Bucket 0 never receives consuming intensity: an empty queue has nothing to
// consume.
inline void fill_sparse_buckets(LevelTable& t, int min_obs, bool with_sizes) {
  const int nb = t.n_max + 1;
  std::vector<int> donors;
  for (int n = 0; n < nb; ++n)
    if (t.n_events[static_cast<std::size_t>(n)] >= min_obs &&
        t.n_events[static_cast<std::size_t>(n)] > 0)
      donors.push_back(n);
  for (int n = 0; n < nb; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    if (t.n_events[ns] >= min_obs && t.n_events[ns] > 0) continue;
    t.low_confidence[ns] = true;
    if (donors.empty()) continue;  // nothing to borrow; rates stay as counted
    int best = donors.front();
    for (int d : donors)
      if (std::abs(d - n) < std::abs(best - n)) best = d;
    t.fill_source[ns] = best;
    const auto bs = static_cast<std::size_t>(best);
    double total = 0.0;
    for (int e = 0; e < kNumEventTypes; ++e) {
      const auto eta = static_cast<EventType>(e);
      double r = t.rate[e][bs];
      if (n == 0 && is_consuming(eta)) r = 0.0;
      t.rate[e][ns] = r;
      total += r;
      if (!with_sizes) continue;
      // Re-shape the donor's size profile onto the feasible sizes here.
      const int s_allowed = is_consuming(eta) ? std::min(n, t.size_cap)
                                              : t.size_cap;
      double donor_mass = 0.0;
      for (int s = 1; s <= s_allowed; ++s)
        donor_mass += t.rate_by_size[e][static_cast<std::size_t>(s - 1)][bs];
      for (int s = 1; s <= t.size_cap; ++s) {
        auto& cell = t.rate_by_size[e][static_cast<std::size_t>(s - 1)][ns];
        if (s > s_allowed || donor_mass <= 0.0) {
          cell = s <= s_allowed && r > 0.0 && s == s_allowed ? r : 0.0;
        } else {
          cell = r *
                 t.rate_by_size[e][static_cast<std::size_t>(s - 1)][bs] /
                 donor_mass;
        }
      }
    }
    t.total_rate[ns] = total;
  }
}

inline LevelTable estimate_level(std::span<const FlowSegment> segments,
                                 int level, const CalibrationOptions& opt,
                                 bool five_types, bool with_sizes) {
  if (level < 1) throw DataError("level must be >= 1");
  LevelTable t;
  t.level = level;
  t.n_max = opt.n_max;
  t.size_cap = opt.size_bucket_cap;
  t.aes = level_aes(segments, level, opt);
  const int nb = opt.n_max + 1;
  t.n_events.assign(static_cast<std::size_t>(nb), 0);
  t.exposure.assign(static_cast<std::size_t>(nb), 0.0);
  for (auto& v : t.n_by_type) v.assign(static_cast<std::size_t>(nb), 0);
  if (with_sizes)
    for (auto& m : t.n_by_type_size)
      m.assign(static_cast<std::size_t>(t.size_cap),
               std::vector<std::int64_t>(static_cast<std::size_t>(nb), 0));

  for (const auto& seg : segments) {
    for (const auto& ev : seg.events) {
      if (ev.level != level) continue;
      if (opt.side_filter && ev.side != *opt.side_filter) continue;
      if (!has_exposure(ev)) continue;
      EventType eta = base_type(ev.eta);
      if (five_types && is_consuming(eta) && ev.size == ev.q_before)
        eta = eta == EventType::Cancel ? EventType::CancelAll
                                       : EventType::MarketAll;
      const auto n = static_cast<std::size_t>(t.bucket_of(ev.q_before));
      t.n_events[n] += 1;
      t.exposure[n] += ev.dt;
      t.n_by_type[static_cast<int>(eta)][n] += 1;
      if (with_sizes) {
        const auto s = static_cast<std::size_t>(t.size_bucket_of(ev.size));
        if (s >= 1)
          t.n_by_type_size[static_cast<int>(eta)][s - 1][n] += 1;
      }
    }
  }

  t.total_rate.assign(static_cast<std::size_t>(nb), 0.0);
  for (auto& v : t.rate) v.assign(static_cast<std::size_t>(nb), 0.0);
  if (with_sizes)
    for (auto& m : t.rate_by_size)
      m.assign(static_cast<std::size_t>(t.size_cap),
               std::vector<double>(static_cast<std::size_t>(nb), 0.0));
  t.low_confidence.assign(static_cast<std::size_t>(nb), false);
  t.fill_source.assign(static_cast<std::size_t>(nb), -1);

  for (int n = 0; n < nb; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    if (t.n_events[ns] == 0 || !(t.exposure[ns] > 0.0)) continue;
    const double lambda_total = static_cast<double>(t.n_events[ns]) /
                                t.exposure[ns];  // inverse mean interarrival
    t.total_rate[ns] = lambda_total;
    const double denom = static_cast<double>(t.n_events[ns]);
    for (int e = 0; e < kNumEventTypes; ++e) {
      t.rate[e][ns] =
          lambda_total * static_cast<double>(t.n_by_type[e][ns]) / denom;
      if (with_sizes)
        for (int s = 1; s <= t.size_cap; ++s)
          t.rate_by_size[e][static_cast<std::size_t>(s - 1)][ns] =
              lambda_total *
              static_cast<double>(
                  t.n_by_type_size[e][static_cast<std::size_t>(s - 1)][ns]) /
              denom;
    }
  }

  fill_sparse_buckets(t, opt.min_obs, with_sizes);
  return t;
}

}  // namespace detail

// Closed-form intensity estimates for the three-type model: the total rate
// at a bucket is the inverse mean interarrival there, split across types by
// their frequencies.
inline LevelTable estimate_qr(std::span<const FlowSegment> segments, int level,
                              const CalibrationOptions& opt = {}) {
  return detail::estimate_level(segments, level, opt, false, false);
}

// Five-type variant: consuming events whose size equals the whole queue are
// relabelled as full consumptions before counting, so the full and partial
// intensities of each consuming class sum to the three-type rate exactly.
inline LevelTable estimate_ftqr(std::span<const FlowSegment> segments,
                                int level, const CalibrationOptions& opt = {}) {
  return detail::estimate_level(segments, level, opt, true, false);
}

// Size-aware variant: intensities resolved jointly by (type, size bucket).
// Marginalizing the size dimension reproduces the three-type rates through
// the shared counts.
inline LevelTable estimate_saqr(std::span<const FlowSegment> segments,
                                int level, const CalibrationOptions& opt = {}) {
  return detail::estimate_level(segments, level, opt, false, true);
}

struct SizeDistributionQuery {
  int level = 1;
  std::optional<EventType> eta;  // folds *_all onto the base type
  std::optional<int> queue_bucket;
  double aes = 1.0;  // needed when conditioning on a queue bucket
};

inline SizeDistribution size_distribution(std::span<const FlowSegment> segments,
                                          const SizeDistributionQuery& q) {
  std::map<std::int64_t, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& seg : segments) {
    for (const auto& ev : seg.events) {
      if (ev.level != q.level) continue;
      if (q.eta && base_type(ev.eta) != base_type(*q.eta)) continue;
      if (q.queue_bucket &&
          std::min(quantize_queue(ev.q_before, q.aes),
                   std::numeric_limits<int>::max()) != *q.queue_bucket)
        continue;
      counts[ev.size] += 1;
      ++total;
    }
  }
  if (total == 0)
    throw DataError("no events match the size-distribution filter");
  SizeDistribution d;
  d.conditioning = q.queue_bucket
                       ? SizeDistribution::Conditioning::ConditionalOnQueue
                       : SizeDistribution::Conditioning::Stationary;
  d.queue_bucket = q.queue_bucket.value_or(-1);
  for (const auto& [size, c] : counts) {
    d.pmf.support.push_back(size);
    d.pmf.probs.push_back(static_cast<double>(c) / static_cast<double>(total));
  }
  return d;
}

// Empirical distribution of observed queue sizes at a level; feeds refills
// and initial book draws. Only positive sizes enter the support.
inline DiscretePmf queue_size_distribution(std::span<const FlowSegment> segments,
                                           int level) {
  std::map<std::int64_t, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& seg : segments)
    for (const auto& ev : seg.events) {
      if (ev.level != level || ev.q_before <= 0) continue;
      counts[ev.q_before] += 1;
      ++total;
    }
  if (total == 0)
    throw DataError("no positive queue observations at level " +
                    std::to_string(level));
  DiscretePmf pmf;
  for (const auto& [size, c] : counts) {
    pmf.support.push_back(size);
    pmf.probs.push_back(static_cast<double>(c) / static_cast<double>(total));
  }
  return pmf;
}

// -------------------------------------------------------------------------
// Likelihood of an event stream under a level table
// -------------------------------------------------------------------------

// Log of the heterogeneous-Poisson flow likelihood: each observed
// interarrival contributes -Lambda(n)*dt + log lambda^eta(n). The closed-form
// table maximizes this bucket by bucket.
inline double qr_log_likelihood(const LevelTable& t,
                                std::span<const FlowSegment> segments,
                                bool five_types = false) {
  double ll = 0.0;
  for (const auto& seg : segments) {
    for (const auto& ev : seg.events) {
      if (ev.level != t.level || !has_exposure(ev)) continue;
      EventType eta = base_type(ev.eta);
      if (five_types && is_consuming(eta) && ev.size == ev.q_before)
        eta = eta == EventType::Cancel ? EventType::CancelAll
                                       : EventType::MarketAll;
      const int n = t.bucket_of(ev.q_before);
      const double lam = t.rate_at(eta, n);
      double total = 0.0;
      for (int e = 0; e < kNumEventTypes; ++e)
        total += t.rate[e][static_cast<std::size_t>(n)];
      if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += -total * ev.dt + std::log(lam);
    }
  }
  return ll;
}

// -------------------------------------------------------------------------
// Reference-price move probability
// -------------------------------------------------------------------------

struct ThetaOptions {
  double depletion_side_persistence = 0.8;  // reduced-form pressure memory
  std::int64_t n_moves = 200000;            // moves per simulated evaluation
  double theta_min = 0.02;                  // lower bracket; bounds the work
  std::uint64_t seed = 20240901;
  double ratio_tolerance = 0.004;
  int max_iterations = 100;
};

struct ThetaCalibration {
  double theta = 0.0;
  double achieved_ratio = 0.0;
  double target_ratio = 0.0;
  bool clamped = false;  // target outside the mechanism's reachable range
};

// Reduced-form move generator used both for calibration and for synthetic
// paths: one-sided pressure persists between best-queue depletions with the
// configured probability, and each depletion moves the price toward its side
// with probability theta. Skipped depletions decorrelate successive moves,
// so the continuation ratio grows monotonically with theta.
inline std::vector<int> simulate_move_path(double theta, std::int64_t n_moves,
                                           const ThetaOptions& opt,
                                           SplitMix64& rng) {
  std::vector<int> moves;
  moves.reserve(static_cast<std::size_t>(n_moves));
  int side = bernoulli(rng, 0.5) ? 1 : -1;
  while (std::ssize(moves) < n_moves) {
    if (!bernoulli(rng, opt.depletion_side_persistence)) side = -side;
    if (bernoulli(rng, theta)) moves.push_back(side);
  }
  return moves;
}

inline double continuation_ratio(std::span<const int> moves) {
  if (moves.size() < 2)
    throw DataError("continuation ratio needs at least two moves");
  std::int64_t same = 0;
  for (std::size_t i = 1; i < moves.size(); ++i)
    if (moves[i] == moves[i - 1]) ++same;
  return static_cast<double>(same) / static_cast<double>(moves.size() - 1);
}

inline ThetaCalibration calibrate_theta(std::span<const int> moves,
                                        const ThetaOptions& opt = {}) {
  ThetaCalibration result;
  result.target_ratio = continuation_ratio(moves);

  auto simulated = [&](double theta) {
    SplitMix64 rng(opt.seed);  // common random numbers across evaluations
    const auto path = simulate_move_path(theta, opt.n_moves, opt, rng);
    return continuation_ratio(path);
  };

  double lo = opt.theta_min, hi = 1.0;
  double f_lo = simulated(lo), f_hi = simulated(hi);
  if (result.target_ratio <= f_lo) {
    result.theta = lo;
    result.achieved_ratio = f_lo;
    result.clamped = true;
    return result;
  }
  if (result.target_ratio >= f_hi) {
    result.theta = hi;
    result.achieved_ratio = f_hi;
    result.clamped = true;
    return result;
  }
  double mid = 0.5, f_mid = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    mid = 0.5 * (lo + hi);
    f_mid = simulated(mid);
    if (std::abs(f_mid - result.target_ratio) < opt.ratio_tolerance) {
      result.theta = mid;
      result.achieved_ratio = f_mid;
      return result;
    }
    if (f_mid < result.target_ratio) lo = mid; else hi = mid;
  }
  if (std::abs(f_mid - result.target_ratio) < 10 * opt.ratio_tolerance) {
    result.theta = mid;
    result.achieved_ratio = f_mid;
    return result;
  }
  throw NumericalError(
      "theta bisection did not converge; bracket [" + std::to_string(lo) +
      ", " + std::to_string(hi) + "], achieved ratio " + std::to_string(f_mid) +
      " vs target " + std::to_string(result.target_ratio));
}

// -------------------------------------------------------------------------
// Calibration stability diagnostic
// -------------------------------------------------------------------------

struct StabilitySplit {
  LevelTable first;
  LevelTable second;
  double max_divergence = 0.0;  // relative to the first half's rates
};

inline StabilitySplit stability_split(std::span<const FlowSegment> segments,
                                      int level,
                                      const CalibrationOptions& opt = {}) {
  std::int64_t total_events = 0;
  for (const auto& seg : segments) total_events += std::ssize(seg.events);
  std::vector<FlowSegment> first_half, second_half;
  std::int64_t seen = 0;
  for (const auto& seg : segments) {
    (seen * 2 < total_events ? first_half : second_half).push_back(seg);
    seen += std::ssize(seg.events);
  }
  if (first_half.empty() || second_half.empty())
    throw DataError("stability split needs data in both halves");
  StabilitySplit out{estimate_qr(first_half, level, opt),
                     estimate_qr(second_half, level, opt), 0.0};
  for (int n = 0; n <= opt.n_max; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    if (out.first.low_confidence[ns] || out.second.low_confidence[ns]) continue;
    for (int e = 0; e < kNumEventTypes; ++e) {
      const double a = out.first.rate[e][ns];
      const double b = out.second.rate[e][ns];
      if (!(a > 0.0)) continue;
      out.max_divergence = std::max(out.max_divergence, std::abs(b - a) / a);
    }
  }
  return out;
}

}  // namespace qrlob
