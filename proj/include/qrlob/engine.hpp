#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "qrlob/book.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/model.hpp"
#include "qrlob/record.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

struct SimConfig {
  double horizon = 3600.0;  // seconds
  std::uint64_t seed = 1;
  std::optional<LobState> init_state;  // default: draw from queue_dists
  double init_ref_price_ticks = 17000.5;     // Bund-like price on a 0.01 grid
  std::int64_t t0_ns = 32'400'000'000'000ll; // 09:00, simulation time zero
};

struct NextEvent {
  double dt = 0.0;
  Side side = Side::Bid;
  int level = 1;
  EventType eta = EventType::Limit;
  std::int64_t size = 0;
};

namespace detail {

// Market orders trade only against the best quote; away from level one the
// trade intensities observed in historical data are dropped.
inline double effective_rate(const LevelTable& t, EventType eta, int level,
                             int bucket) {
  if (is_trade(eta) && level > 1) return 0.0;
  return t.rate_at(eta, bucket);
}

inline double effective_total(const LevelTable& t, int level, int bucket) {
  double r = 0.0;
  for (int e = 0; e < kNumEventTypes; ++e)
    r += effective_rate(t, static_cast<EventType>(e), level, bucket);
  return r;
}

inline std::int64_t draw_size_in_bucket(SplitMix64& rng, int s_bucket,
                                        double aes) {
  const auto lo = static_cast<std::int64_t>(
                      std::floor(static_cast<double>(s_bucket - 1) * aes)) + 1;
  const auto hi = std::max<std::int64_t>(
      lo, static_cast<std::int64_t>(std::floor(static_cast<double>(s_bucket) * aes)));
  return uniform_int(rng, lo, hi);
}

}  // namespace detail

// Draws the waiting time, target queue, event type and size for the next
// event given the current book: per-queue arrivals are independent
// exponential clocks whose rates depend on the queue's own size bucket, so
// the system clock is their superposition and the target is chosen
// proportionally to rate.
inline NextEvent next_event(const QrModel& model, const LobState& state,
                            SplitMix64& rng) {
  if (is_hawkes(model.variant))
    throw DataError("next_event is defined for the queue-reactive variants");
  const int k = state.depth();
  double rates[2 * 32];
  if (k > 32) throw DataError("book depth above 32 is not supported");
  double total = 0.0;
  for (int side = 0; side < 2; ++side)
    for (int level = 1; level <= k; ++level) {
      const auto& t = model.levels[static_cast<std::size_t>(level - 1)];
      const int bucket = t.bucket_of(state.queue(static_cast<Side>(side), level));
      const double r = detail::effective_total(t, level, bucket);
      rates[side * k + level - 1] = r;
      total += r;
    }
  if (!(total > 0.0))
    throw NumericalError("all queue rates are zero; the book needs a refill");

  NextEvent out;
  out.dt = exponential(rng, total);
  const auto idx =
      discrete(rng, std::span<const double>(rates, static_cast<std::size_t>(2 * k)));
  const int flat = idx < static_cast<std::size_t>(2 * k)
                       ? static_cast<int>(idx)
                       : 2 * k - 1;
  out.side = static_cast<Side>(flat / k);
  out.level = flat % k + 1;

  const auto& t = model.levels[static_cast<std::size_t>(out.level - 1)];
  const std::int64_t q = state.queue(out.side, out.level);
  const int bucket = t.bucket_of(q);

  if (model.variant == Variant::SAQR) {
    // Type and size bucket drawn jointly from the size-resolved intensities.
    thread_local std::vector<double> cells;
    const int s_cap = t.size_cap;
    cells.assign(static_cast<std::size_t>(kNumEventTypes) *
                     static_cast<std::size_t>(s_cap),
                 0.0);
    for (int e = 0; e < kNumEventTypes; ++e) {
      const auto eta = static_cast<EventType>(e);
      if (is_trade(eta) && out.level > 1) continue;
      for (int s = 1; s <= s_cap; ++s)
        cells[static_cast<std::size_t>(e * s_cap + s - 1)] =
            t.rate_by_size[e][static_cast<std::size_t>(s - 1)]
                          [static_cast<std::size_t>(std::min(bucket, t.n_max))];
    }
    const auto cell = discrete(rng, std::span<const double>(cells));
    if (cell == cells.size())
      throw NumericalError("queue selected with zero size-resolved rates");
    const int e = static_cast<int>(cell) / s_cap;
    const int s = static_cast<int>(cell) % s_cap + 1;
    out.eta = static_cast<EventType>(e);
    if (is_consuming(out.eta)) {
      if (s >= bucket) {
        out.size = q;  // the diagonal cell is a full consumption
      } else {
        out.size = std::min<std::int64_t>(
            detail::draw_size_in_bucket(rng, s, t.aes), q - 1);
        out.size = std::max<std::int64_t>(out.size, 1);
      }
    } else {
      out.size = detail::draw_size_in_bucket(rng, s, t.aes);
    }
    return out;
  }

  double type_rates[kNumEventTypes];
  for (int e = 0; e < kNumEventTypes; ++e)
    type_rates[e] =
        detail::effective_rate(t, static_cast<EventType>(e), out.level, bucket);
  const auto e_idx = discrete(
      rng, std::span<const double>(type_rates, kNumEventTypes));
  if (e_idx == kNumEventTypes)
    throw NumericalError("queue selected with zero type rates");
  out.eta = static_cast<EventType>(e_idx);

  const auto& sizes =
      model.size_dists.empty()
          ? DiscretePmf{}
          : model.size_dists[static_cast<std::size_t>(out.level - 1)];
  switch (model.variant) {
    case Variant::QRU: {
      const auto unit =
          static_cast<std::int64_t>(std::ceil(t.aes));
      out.size = is_consuming(out.eta) ? std::min(unit, q) : unit;
      break;
    }
    case Variant::FTQR: {
      if (is_full_consumption(out.eta)) {
        out.size = q;
      } else if (is_consuming(out.eta)) {
        // Partial consumption: resample for a size below the queue so the
        // full-consumption channel stays with the *_all types.
        std::int64_t s = sizes.sample(rng);
        for (int tries = 0; tries < 64 && s >= q; ++tries) s = sizes.sample(rng);
        out.size = std::min<std::int64_t>(s, q);
      } else {
        out.size = sizes.sample(rng);
      }
      break;
    }
    default: {  // QR
      std::int64_t s = sizes.sample(rng);
      out.size = is_consuming(out.eta) ? std::min(s, q) : s;
      break;
    }
  }
  if (out.size < 1) out.size = 1;
  return out;
}

namespace detail {

// Shared bookkeeping for both simulators: applies an event to the book,
// logs it, runs the reference-price rule on depletion and keeps per-queue
// interarrival clocks segment-local.
class SimulationLoop {
 public:
  SimulationLoop(const QrModel& model, const SimConfig& config, SplitMix64& rng)
      : model_(model), config_(config), rng_(rng) {
    if (config.init_state) {
      state_ = *config.init_state;
      if (state_.depth() != model.depth)
        throw DataError("initial state depth does not match the model");
    } else {
      state_ = make_lob_state(model.depth, model.tick_size,
                              config.init_ref_price_ticks);
      if (model.queue_dists.empty())
        throw DataError("model carries no queue distributions for the "
                        "initial draw; provide an initial state");
      for (int level = 1; level <= model.depth; ++level) {
        const auto& pmf =
            model.queue_dists[static_cast<std::size_t>(level - 1)];
        state_.queue(Side::Bid, level) = pmf.sample(rng_);
        state_.queue(Side::Ask, level) = pmf.sample(rng_);
      }
    }
    policy_.theta = model.theta;
    policy_.refill_source = model.queue_dists;
    log_.meta.variant = std::string(to_string(model.variant));
    log_.meta.depth = model.depth;
    log_.meta.tick_size = model.tick_size;
    log_.meta.theta = model.theta;
    log_.meta.seed = config.seed;
    log_.meta.horizon = config.horizon;
    log_.meta.t0_ns = config.t0_ns;
    log_.init_state = state_;
  }

  const LobState& state() const { return state_; }
  EventLogData take_log() { return std::move(log_); }
  std::int64_t clipped() const { return clipped_; }
  std::int64_t skipped() const { return skipped_; }

  // Applies the event at absolute time t (seconds). Returns false when the
  // event cannot act on the current book (empty-queue consumption from the
  // book-unaware flow).
  bool apply(double t, Side side, int level, EventType eta, std::int64_t size,
             bool clip_to_queue) {
    const std::int64_t q = state_.queue(side, level);
    if (is_consuming(eta)) {
      if (q == 0) {
        ++skipped_;
        return false;
      }
      if (size > q) {
        if (!clip_to_queue)
          throw NumericalError("drawn size exceeds the queue");
        size = q;
        ++clipped_;
      }
      if (is_full_consumption(eta)) size = q;
    }

    OrderEvent ev;
    ev.ts_ns = config_.t0_ns + static_cast<std::int64_t>(std::llround(t * 1e9));
    ev.eta = eta;
    ev.side = side;
    ev.level = level;
    ev.size = size;
    ev.q_before = q;
    ev.dt = queue_dt(side, level, t);

    auto res = apply_event(std::move(state_), ev);
    state_ = std::move(res.state);

    LogRecord rec;
    rec.ev = ev;
    rec.ref_half_ticks = state_.ref_half_ticks;
    rec.mid_price = state_.mid_price();
    log_.records.push_back(rec);

    if (res.depleted_best) {
      auto moved = transition_ref_price(std::move(state_), policy_, side, rng_);
      state_ = std::move(moved.state);
      if (moved.moved) {
        LogRecord mark;
        mark.ref_move = true;
        mark.ev.ts_ns = ev.ts_ns;
        mark.ev.side = side;
        mark.ev.level = state_.depth();
        mark.ev.size = moved.refill_size;
        mark.ev.dt = -1.0;
        mark.ref_half_ticks = state_.ref_half_ticks;
        mark.mid_price = state_.mid_price();
        log_.records.push_back(mark);
        last_event_t_.clear();  // interarrival clocks reset on a price move
      }
    }
    return true;
  }

 private:
  double queue_dt(Side side, int level, double t) {
    const auto key = std::make_pair(static_cast<int>(side), level);
    const auto it = last_event_t_.find(key);
    const double dt = it == last_event_t_.end() ? -1.0 : t - it->second;
    last_event_t_[key] = t;
    return dt;
  }

  const QrModel& model_;
  const SimConfig& config_;
  SplitMix64& rng_;
  LobState state_;
  RefPricePolicy policy_;
  EventLogData log_;
  std::map<std::pair<int, int>, double> last_event_t_;
  std::int64_t clipped_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace detail

struct RunResult {
  EventLogData log;
  std::int64_t clipped = 0;  // consumptions clipped to the available queue
  std::int64_t skipped = 0;  // consumptions dropped on an empty queue
};

// Queue-reactive simulation: competing exponential clocks per queue, the
// matching rules of the book, and the reference-price transition on best
// queue depletions. Deterministic given the seed.
inline RunResult run(const QrModel& model, const SimConfig& config) {
  if (is_hawkes(model.variant))
    throw DataError("run() drives the queue-reactive variants; use run_hawkes");
  if (!(config.horizon >= 0.0)) throw DataError("horizon must be non-negative");
  if (model.levels.size() != static_cast<std::size_t>(model.depth))
    throw DataError("model has no intensity table for some level");
  SplitMix64 rng(config.seed);
  detail::SimulationLoop loop(model, config, rng);
  double t = 0.0;
  while (true) {
    const NextEvent ev = next_event(model, loop.state(), rng);
    t += ev.dt;
    if (t > config.horizon) break;
    loop.apply(t, ev.side, ev.level, ev.eta, ev.size, /*clip_to_queue=*/false);
  }
  RunResult out;
  out.clipped = loop.clipped();
  out.skipped = loop.skipped();
  out.log = loop.take_log();
  return out;
}

// Hawkes-driven simulation: the six-dimensional best-quote flow is generated
// first (it does not react to the book), then pushed through the same
// matching and price rules. Consumptions beyond the available queue are
// clipped and counted; consumptions on an empty queue are dropped.
inline RunResult run_hawkes(const QrModel& model, const SimConfig& config) {
  if (!is_hawkes(model.variant) || !model.hawkes)
    throw DataError("run_hawkes needs a model with a Hawkes block");
  SplitMix64 rng(config.seed);
  const auto flow = simulate(*model.hawkes, config.horizon, rng);
  detail::SimulationLoop loop(model, config, rng);
  const double aes1 = model.aes(1);
  const auto unit = static_cast<std::int64_t>(std::ceil(aes1));
  for (const auto& mev : flow) {
    const Side side = static_cast<Side>(mev.component / 3);
    const int type = mev.component % 3;
    const EventType eta = type == 0   ? EventType::Limit
                          : type == 1 ? EventType::Cancel
                                      : EventType::Market;
    std::int64_t size = unit;
    if (model.variant == Variant::HawkesS) {
      if (model.size_dists.empty())
        throw DataError("Hawkes_S needs a stationary size distribution");
      size = model.size_dists.front().sample(rng);
    }
    loop.apply(mev.t, side, 1, eta, size, /*clip_to_queue=*/true);
  }
  RunResult out;
  out.clipped = loop.clipped();
  out.skipped = loop.skipped();
  out.log = loop.take_log();
  return out;
}

// Dispatches on the model's variant.
inline RunResult run_any(const QrModel& model, const SimConfig& config) {
  return is_hawkes(model.variant) ? run_hawkes(model, config)
                                  : run(model, config);
}

}  // namespace qrlob
