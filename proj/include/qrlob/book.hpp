#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrlob/errors.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

enum class Side : std::uint8_t { Bid = 0, Ask = 1 };

// Order flow event types. Limit adds liquidity; Cancel and Market remove it;
// CancelAll and MarketAll wipe the whole queue in one event.
enum class EventType : std::uint8_t {
  Limit = 0,
  Cancel = 1,
  Market = 2,
  CancelAll = 3,
  MarketAll = 4,
};

inline constexpr int kNumEventTypes = 5;

inline bool is_consuming(EventType t) { return t != EventType::Limit; }
inline bool is_trade(EventType t) {
  return t == EventType::Market || t == EventType::MarketAll;
}
inline bool is_full_consumption(EventType t) {
  return t == EventType::CancelAll || t == EventType::MarketAll;
}

// Folds the *_all types onto their base type (Cancel / Market).
inline EventType base_type(EventType t) {
  if (t == EventType::CancelAll) return EventType::Cancel;
  if (t == EventType::MarketAll) return EventType::Market;
  return t;
}

inline Side opposite(Side s) { return s == Side::Bid ? Side::Ask : Side::Bid; }

inline std::string_view to_string(Side s) {
  return s == Side::Bid ? "bid" : "ask";
}

inline std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::Limit: return "L";
    case EventType::Cancel: return "C";
    case EventType::Market: return "M";
    case EventType::CancelAll: return "CA";
    case EventType::MarketAll: return "MA";
  }
  return "?";
}

inline Side side_from_string(std::string_view s) {
  if (s == "bid" || s == "b" || s == "B") return Side::Bid;
  if (s == "ask" || s == "a" || s == "A") return Side::Ask;
  throw DataError("unknown side: '" + std::string(s) + "'");
}

inline EventType event_type_from_string(std::string_view s) {
  if (s == "L") return EventType::Limit;
  if (s == "C") return EventType::Cancel;
  if (s == "M") return EventType::Market;
  if (s == "CA") return EventType::CancelAll;
  if (s == "MA") return EventType::MarketAll;
  throw DataError("unknown event type: '" + std::string(s) + "'");
}

// One order flow event. `dt` is the time since the previous event that hit
// the same queue inside the current constant-reference-price segment; the
// first event of a queue in a segment carries the time since the segment
// opened and is skipped by the estimators.
struct OrderEvent {
  std::int64_t ts_ns = 0;
  EventType eta = EventType::Limit;
  Side side = Side::Bid;
  int level = 1;              // 1..K, distance from the reference price in ticks
  std::int64_t size = 0;      // lots; for *_all events this equals q_before
  double dt = 0.0;            // seconds, per-queue, segment-local
  std::int64_t q_before = 0;  // lots in the queue just before the event
  int q_bucket = 0;           // q_before quantized in AES units
};

// Aggregated book state: K queues per side indexed by distance to the
// reference price. Prices live on the tick grid; the reference price lives on
// the half-tick grid strictly between the innermost quote slots, so queue i
// sits at ref ± (2i-1) half-ticks.
struct LobState {
  double tick_size = 0.01;
  std::int64_t ref_half_ticks = 0;  // reference price in units of tick/2
  std::vector<std::int64_t> bids;   // bids[i-1] = queue at ref - (2i-1) half-ticks
  std::vector<std::int64_t> asks;   // asks[i-1] = queue at ref + (2i-1) half-ticks

  int depth() const { return static_cast<int>(bids.size()); }

  std::int64_t& queue(Side s, int level) {
    return s == Side::Bid ? bids[level - 1] : asks[level - 1];
  }
  std::int64_t queue(Side s, int level) const {
    return s == Side::Bid ? bids[level - 1] : asks[level - 1];
  }

  double ref_price() const {
    return static_cast<double>(ref_half_ticks) * tick_size * 0.5;
  }

  double price_at(Side s, int level) const {
    const std::int64_t off = 2 * level - 1;
    const std::int64_t half_ticks =
        s == Side::Ask ? ref_half_ticks + off : ref_half_ticks - off;
    return static_cast<double>(half_ticks) * tick_size * 0.5;
  }

  // Index of the first non-empty level on a side, or 0 if the side is empty.
  int best_level(Side s) const {
    const auto& q = s == Side::Bid ? bids : asks;
    for (int i = 0; i < depth(); ++i) {
      if (q[i] > 0) return i + 1;
    }
    return 0;
  }

  // Mid price from the innermost non-empty quotes; falls back to the
  // reference price when a side is completely empty.
  double mid_price() const {
    const int b = best_level(Side::Bid);
    const int a = best_level(Side::Ask);
    if (b == 0 || a == 0) return ref_price();
    return 0.5 * (price_at(Side::Bid, b) + price_at(Side::Ask, a));
  }
};

inline LobState make_lob_state(int depth, double tick_size,
                               double ref_price_in_ticks) {
  if (depth < 1) throw DataError("book depth must be >= 1");
  LobState st;
  st.tick_size = tick_size;
  st.ref_half_ticks = std::llround(ref_price_in_ticks * 2.0);
  st.bids.assign(static_cast<std::size_t>(depth), 0);
  st.asks.assign(static_cast<std::size_t>(depth), 0);
  return st;
}

// Empirical distribution over positive integer sizes, used for queue refills
// and initial book draws.
struct DiscretePmf {
  std::vector<std::int64_t> support;
  std::vector<double> probs;

  bool empty() const { return support.empty(); }

  std::int64_t sample(SplitMix64& rng) const {
    if (support.empty()) throw NumericalError("sampling from empty pmf");
    const std::size_t i = discrete(rng, std::span<const double>(probs));
    return support[i < support.size() ? i : support.size() - 1];
  }
};

// Reference-price transition rule: on a best-queue depletion the reference
// price moves one tick toward the depleted side with probability theta, and
// the level that enters the band on the depleted side is drawn from the
// per-level stationary queue-size distribution.
struct RefPricePolicy {
  double theta = 0.7;
  std::vector<DiscretePmf> refill_source;  // one pmf per level, index level-1

  const DiscretePmf& refill_for_level(int level) const {
    if (refill_source.empty())
      throw NumericalError("reference-price policy has no refill source");
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(level) - 1,
                                           refill_source.size() - 1);
    return refill_source[idx];
  }
};

struct ApplyResult {
  LobState state;
  bool depleted_best = false;
};

// Applies one event to the book. Consuming events larger than the resting
// queue are a bug upstream (simulator or unrepaired data) and are rejected.
// The flag reports that the innermost non-empty queue of the event's side
// was driven to zero, which is the trigger for the reference-price rule.
inline ApplyResult apply_event(LobState state, const OrderEvent& ev) {
  const int k = state.depth();
  if (ev.level < 1 || ev.level > k)
    throw DataError("event level " + std::to_string(ev.level) +
                    " outside book depth " + std::to_string(k));
  if (ev.size < 1) throw DataError("event size must be >= 1");
  if (is_trade(ev.eta) && state.best_level(ev.side) != ev.level)
    throw DataError("market order away from the best quote");

  std::int64_t& q = state.queue(ev.side, ev.level);
  bool depleted = false;
  switch (ev.eta) {
    case EventType::Limit:
      q += ev.size;
      break;
    case EventType::Cancel:
    case EventType::Market: {
      if (ev.size > q)
        throw DataError("consuming event of size " + std::to_string(ev.size) +
                        " exceeds queue of " + std::to_string(q));
      const bool was_best = state.best_level(ev.side) == ev.level;
      q -= ev.size;
      depleted = was_best && q == 0;
      break;
    }
    case EventType::CancelAll:
    case EventType::MarketAll: {
      if (q < 1) throw DataError("full-consumption event on an empty queue");
      if (ev.size != q)
        throw DataError("full-consumption event size must equal the queue");
      const bool was_best = state.best_level(ev.side) == ev.level;
      q = 0;
      depleted = was_best;
      break;
    }
  }
  return ApplyResult{std::move(state), depleted};
}

struct RefTransitionResult {
  LobState state;
  bool moved = false;
  std::int64_t refill_size = 0;  // lots drawn for the newly exposed level
};

// Deterministic half of the reference-price move, shared with log replay.
// The depleted side's queues shift one index inward (its old level-2 queue
// becomes the new best), the newly exposed deepest level takes `refill`, and
// the opposite side shifts one index outward with an empty queue appearing at
// the vacated best price.
inline LobState shift_ref_price(LobState state, Side depleted,
                                std::int64_t refill) {
  const int k = state.depth();
  auto& same = depleted == Side::Ask ? state.asks : state.bids;
  auto& other = depleted == Side::Ask ? state.bids : state.asks;
  for (int i = 0; i + 1 < k; ++i) same[i] = same[i + 1];
  same[k - 1] = refill;
  for (int i = k - 1; i > 0; --i) other[i] = other[i - 1];
  other[0] = 0;
  state.ref_half_ticks += depleted == Side::Ask ? 2 : -2;
  return state;
}

// Bernoulli(theta) reference-price move after a best-queue depletion on
// `side_depleted`. On the move the price shifts one tick toward the depleted
// side (Bund-style half-tick adjustment relative to the new mid); otherwise
// the book is left untouched with its empty best queue.
inline RefTransitionResult transition_ref_price(LobState state,
                                                const RefPricePolicy& policy,
                                                Side side_depleted,
                                                SplitMix64& rng) {
  if (!(policy.theta >= 0.0 && policy.theta <= 1.0))
    throw DataError("theta must lie in [0,1]");
  if (!bernoulli(rng, policy.theta))
    return RefTransitionResult{std::move(state), false, 0};
  const std::int64_t refill =
      policy.refill_for_level(state.depth()).sample(rng);
  if (refill < 1)
    throw NumericalError("refill distribution produced a non-positive size");
  LobState next = shift_ref_price(std::move(state), side_depleted, refill);
  return RefTransitionResult{std::move(next), true, refill};
}

// Queue size in AES units: ceil(q / aes), with 0 mapping to 0.
inline int quantize_queue(std::int64_t q, double aes) {
  if (!(aes > 0.0)) throw DataError("AES must be positive");
  if (q < 0) throw DataError("queue size must be non-negative");
  if (q == 0) return 0;
  return static_cast<int>(std::ceil(static_cast<double>(q) / aes));
}

}  // namespace qrlob
