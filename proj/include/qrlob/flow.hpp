#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrlob/book.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/record.hpp"

namespace qrlob {

// -------------------------------------------------------------------------
// Raw updates
// -------------------------------------------------------------------------

struct BookQuote {
  Side side = Side::Bid;
  int level = 0;        // venue depth label, advisory only
  double price = 0.0;
  std::int64_t size = 0;
};

// One parsed update: either a (possibly partial) book snapshot, grouping all
// book rows that share a timestamp, or a single trade print.
struct RawUpdate {
  enum class Kind { BookSnapshot, Trade };
  std::int64_t ts_ns = 0;
  Kind kind = Kind::BookSnapshot;
  std::vector<BookQuote> quotes;          // snapshot payload
  double price = 0.0;                     // trade payload
  std::int64_t size = 0;
  std::optional<Side> aggressor;          // consumed side = opposite(buy)=ask
};

struct ParseOptions {
  std::int64_t ts_regression_tolerance_ns = 0;
};

inline constexpr std::string_view kRawHeader =
    "ts_ns,kind,side,level,price,size,aggressor";

// Parses the documented raw CSV: header row, then one row per book level
// update or trade. Book rows are price-keyed set operations (a vanishing
// price must be reported with size 0); consecutive book rows with the same
// timestamp form one snapshot.
inline std::vector<RawUpdate> parse_stream(std::istream& is,
                                           const std::string& name = "<stream>",
                                           const ParseOptions& opt = {}) {
  std::vector<RawUpdate> updates;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();

  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kRawHeader && line != kRawHeader.substr(0, kRawHeader.rfind(',')))
        throw DataError(name + " line " + std::to_string(line_no) +
                        ": expected header '" + std::string(kRawHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_csv(line);
    if (fields.size() < 6 || fields.size() > 7)
      throw DataError(name + " line " + std::to_string(line_no) +
                      ": expected 6 or 7 fields, got " +
                      std::to_string(fields.size()));
    const auto ts =
        detail::parse_number<std::int64_t>(fields[0], line_no, "ts_ns");
    if (prev_ts != std::numeric_limits<std::int64_t>::min() &&
        ts + opt.ts_regression_tolerance_ns < prev_ts)
      throw DataError(name + " line " + std::to_string(line_no) +
                      ": timestamp regression " + std::to_string(ts) + " < " +
                      std::to_string(prev_ts));
    prev_ts = std::max(prev_ts, ts);

    const std::string_view kind = fields[1];
    if (kind == "book") {
      BookQuote q;
      q.side = side_from_string(fields[2]);
      q.level = detail::parse_number<int>(fields[3], line_no, "level");
      q.price = detail::parse_double(fields[4], line_no, "price");
      q.size = detail::parse_number<std::int64_t>(fields[5], line_no, "size");
      if (q.size < 0)
        throw DataError(name + " line " + std::to_string(line_no) +
                        ": negative size");
      if (!updates.empty() &&
          updates.back().kind == RawUpdate::Kind::BookSnapshot &&
          updates.back().ts_ns == ts) {
        updates.back().quotes.push_back(q);
      } else {
        RawUpdate u;
        u.ts_ns = ts;
        u.kind = RawUpdate::Kind::BookSnapshot;
        u.quotes.push_back(q);
        updates.push_back(std::move(u));
      }
    } else if (kind == "trade") {
      RawUpdate u;
      u.ts_ns = ts;
      u.kind = RawUpdate::Kind::Trade;
      u.price = detail::parse_double(fields[4], line_no, "price");
      u.size = detail::parse_number<std::int64_t>(fields[5], line_no, "size");
      if (u.size < 0)
        throw DataError(name + " line " + std::to_string(line_no) +
                        ": negative size");
      if (fields.size() == 7 && !fields[6].empty()) {
        const std::string_view agg = fields[6];
        if (agg == "buy") u.aggressor = Side::Bid;
        else if (agg == "sell") u.aggressor = Side::Ask;
        else
          throw DataError(name + " line " + std::to_string(line_no) +
                          ": bad aggressor '" + std::string(agg) + "'");
      }
      updates.push_back(std::move(u));
    } else {
      throw DataError(name + " line " + std::to_string(line_no) +
                      ": unknown kind '" + std::string(kind) + "'");
    }
  }
  return updates;
}

// -------------------------------------------------------------------------
// Reference price bookkeeping
// -------------------------------------------------------------------------

// Admissible reference prices sit on odd half-ticks, strictly between the
// innermost quote slots. When the spread is an odd number of ticks the mid
// price is admissible; when even, the two candidates are mid +- half a tick
// and continuity picks the one nearest the previous value.
inline std::int64_t choose_ref_half_ticks(std::int64_t best_bid_ht,
                                          std::int64_t best_ask_ht,
                                          std::optional<std::int64_t> prev) {
  const std::int64_t mid2 = best_bid_ht + best_ask_ht;  // 2 * mid
  if (mid2 % 2 != 0)
    throw DataError("quotes are off the tick grid");
  const std::int64_t mid = mid2 / 2;
  if (mid % 2 != 0) return mid;  // odd half-ticks: admissible as-is
  if (prev && std::llabs(*prev - (mid + 1)) < std::llabs(*prev - (mid - 1)))
    return mid + 1;
  return mid - 1;
}

// -------------------------------------------------------------------------
// Flow reconstruction
// -------------------------------------------------------------------------

struct ReconstructOptions {
  double tick_size = 0.01;
  int depth = 5;
  // Consuming deltas larger than the recorded queue are clipped and counted
  // here rather than rejected; the matching rules themselves stay strict.
  bool clip_oversized = true;
};

struct ReconstructResult {
  EventLogData log;
  std::int64_t clipped_events = 0;
  std::int64_t skipped_out_of_band = 0;
};

// Turns snapshot-and-trade updates into an L/C/M event flow. Consecutive
// snapshots are diffed price by price against the band of the earlier
// snapshot's reference price; a positive delta is liquidity provision, a
// negative one is a cancellation unless a trade printed at that price inside
// the gap. One aggregate event is emitted per price and sign.
inline ReconstructResult reconstruct_flow(std::span<const RawUpdate> updates,
                                          const ReconstructOptions& opt = {}) {
  ReconstructResult out;
  out.log.meta.tick_size = opt.tick_size;
  out.log.meta.depth = opt.depth;
  const double half_tick = opt.tick_size * 0.5;
  const int k = opt.depth;

  auto to_ht = [&](double price) {
    const double ht = price / half_tick;
    const auto rounded = std::llround(ht);
    if (std::abs(ht - static_cast<double>(rounded)) > 1e-6)
      throw DataError("price " + std::to_string(price) +
                      " is off the half-tick grid");
    return rounded;
  };

  std::map<std::int64_t, std::int64_t> book[2];  // price_ht -> size, [side]
  std::optional<std::int64_t> ref;
  std::vector<std::pair<std::int64_t, std::int64_t>> pending_trades;  // ht,size
  bool have_first_snapshot = false;
  std::int64_t prev_ts = 0;

  auto best = [&](Side s) -> std::optional<std::int64_t> {
    const auto& m = book[static_cast<int>(s)];
    if (s == Side::Ask) {
      for (const auto& [p, sz] : m)
        if (sz > 0) return p;
    } else {
      for (auto it = m.rbegin(); it != m.rend(); ++it)
        if (it->second > 0) return it->first;
    }
    return std::nullopt;
  };

  auto snapshot_to_state = [&](std::int64_t ref_ht) {
    LobState st;
    st.tick_size = opt.tick_size;
    st.ref_half_ticks = ref_ht;
    st.bids.assign(static_cast<std::size_t>(k), 0);
    st.asks.assign(static_cast<std::size_t>(k), 0);
    for (int side = 0; side < 2; ++side) {
      for (const auto& [p, sz] : book[side]) {
        const std::int64_t off = side == static_cast<int>(Side::Ask)
                                     ? p - ref_ht
                                     : ref_ht - p;
        if (off < 1 || off > 2 * k - 1 || off % 2 == 0) continue;
        const int level = static_cast<int>((off + 1) / 2);
        (side == static_cast<int>(Side::Ask) ? st.asks : st.bids)[level - 1] = sz;
      }
    }
    return st;
  };

  for (const auto& u : updates) {
    if (u.kind == RawUpdate::Kind::Trade) {
      if (have_first_snapshot) pending_trades.emplace_back(to_ht(u.price), u.size);
      continue;
    }
    // Snapshot: apply the quote updates to a working copy, then diff.
    std::map<std::int64_t, std::int64_t> next[2] = {book[0], book[1]};
    for (const auto& q : u.quotes) {
      auto& m = next[static_cast<int>(q.side)];
      const auto ht = to_ht(q.price);
      if (q.size == 0) m.erase(ht); else m[ht] = q.size;
    }

    if (!have_first_snapshot) {
      book[0] = std::move(next[0]);
      book[1] = std::move(next[1]);
      const auto bb = best(Side::Bid);
      const auto ba = best(Side::Ask);
      if (!bb || !ba)
        throw DataError("first snapshot must quote both sides");
      ref = choose_ref_half_ticks(*bb, *ba, std::nullopt);
      out.log.init_state = snapshot_to_state(*ref);
      out.log.meta.t0_ns = u.ts_ns;
      have_first_snapshot = true;
      prev_ts = u.ts_ns;
      continue;
    }

    const std::int64_t prev_ref = *ref;
    // Diff against the band of the previous reference price.
    for (int side = 0; side < 2; ++side) {
      const Side s = static_cast<Side>(side);
      for (int level = 1; level <= k; ++level) {
        const std::int64_t off = 2 * level - 1;
        const std::int64_t p =
            s == Side::Ask ? prev_ref + off : prev_ref - off;
        const auto& before_m = book[side];
        const auto& after_m = next[side];
        const auto b_it = before_m.find(p);
        const auto a_it = after_m.find(p);
        const std::int64_t b = b_it == before_m.end() ? 0 : b_it->second;
        const std::int64_t a = a_it == after_m.end() ? 0 : a_it->second;
        if (a == b) continue;
        OrderEvent ev;
        ev.ts_ns = u.ts_ns;
        ev.side = s;
        ev.level = level;
        ev.q_before = b;
        ev.dt = -1.0;  // per-queue clocks are assigned during segmentation
        if (a > b) {
          ev.eta = EventType::Limit;
          ev.size = a - b;
        } else {
          std::int64_t removed = b - a;
          const bool traded =
              std::any_of(pending_trades.begin(), pending_trades.end(),
                          [&](const auto& t) { return t.first == p; });
          ev.eta = traded ? EventType::Market : EventType::Cancel;
          if (removed > b) {
            if (!opt.clip_oversized)
              throw DataError("consuming delta exceeds recorded queue at ts " +
                              std::to_string(u.ts_ns));
            ++out.clipped_events;
            removed = b;
          }
          if (removed == 0) continue;
          ev.size = removed;
        }
        LogRecord rec;
        rec.ev = ev;
        // Events in the gap happened under the earlier reference price; a
        // change observed at this snapshot opens a new segment afterwards.
        rec.ref_half_ticks = prev_ref;
        out.log.records.push_back(rec);
      }
    }

    book[0] = std::move(next[0]);
    book[1] = std::move(next[1]);
    const auto bb = best(Side::Bid);
    const auto ba = best(Side::Ask);
    if (bb && ba) ref = choose_ref_half_ticks(*bb, *ba, ref);
    const LobState st = snapshot_to_state(*ref);
    const double mid = st.mid_price();
    for (auto it = out.log.records.rbegin();
         it != out.log.records.rend() && it->ev.ts_ns == u.ts_ns; ++it) {
      if (it->ref_half_ticks != prev_ref) break;  // earlier snapshot
      it->mid_price = mid;
    }
    // A reference change re-indexes every queue: emit one move marker per
    // tick step so the log replays and segments exactly like a simulated
    // one. The marker carries the volume exposed at the new deepest level,
    // and the vacated prices that flipped to the other side are refilled
    // with explicit provision events against an empty queue.
    if (*ref != prev_ref) {
      const std::int64_t steps2 = (*ref - prev_ref) / 2;
      const int n_steps = static_cast<int>(std::llabs(steps2));
      const Side moved = steps2 > 0 ? Side::Ask : Side::Bid;
      for (int s = 1; s <= n_steps; ++s) {
        const std::int64_t step_ref =
            prev_ref + (steps2 > 0 ? 2 * s : -2 * s);
        LogRecord mark;
        mark.ref_move = true;
        mark.ev.ts_ns = u.ts_ns;
        mark.ev.side = moved;
        mark.ev.level = k;
        mark.ev.dt = -1.0;
        std::int64_t exposed = 0;
        if (s == n_steps) {
          const std::int64_t deep_price =
              moved == Side::Ask ? step_ref + (2 * k - 1)
                                 : step_ref - (2 * k - 1);
          const auto& m = book[static_cast<int>(moved)];
          const auto it = m.find(deep_price);
          exposed = it == m.end() ? 0 : it->second;
        }
        mark.ev.size = exposed;
        mark.ref_half_ticks = step_ref;
        mark.mid_price = mid;
        out.log.records.push_back(mark);
      }
      const Side flipped = opposite(moved);
      for (int level = 1; level <= std::min(n_steps, k); ++level) {
        const std::int64_t off = 2 * level - 1;
        const std::int64_t p =
            flipped == Side::Ask ? *ref + off : *ref - off;
        const auto& m = book[static_cast<int>(flipped)];
        const auto it = m.find(p);
        if (it == m.end() || it->second <= 0) continue;
        OrderEvent ev;
        ev.ts_ns = u.ts_ns;
        ev.eta = EventType::Limit;
        ev.side = flipped;
        ev.level = level;
        ev.size = it->second;
        ev.q_before = 0;
        ev.dt = -1.0;
        LogRecord rec;
        rec.ev = ev;
        rec.ref_half_ticks = *ref;
        rec.mid_price = mid;
        out.log.records.push_back(rec);
      }
    }
    pending_trades.clear();
    prev_ts = u.ts_ns;
  }
  (void)prev_ts;
  return out;
}

// -------------------------------------------------------------------------
// Sessions and segments
// -------------------------------------------------------------------------

inline constexpr std::int64_t kNsPerDay = 86'400'000'000'000ll;

struct DayFlow {
  std::int64_t day_start_ns = 0;  // UTC midnight of the session's day
  std::vector<LogRecord> records;
};

// Keeps only events with time-of-day in [open, close), split per UTC day.
// Interarrival clocks never span a session boundary because segmentation is
// run per day on the filtered records.
inline std::vector<DayFlow> sessionize(std::span<const LogRecord> records,
                                       double open_seconds,
                                       double close_seconds) {
  if (!(open_seconds < close_seconds))
    throw DataError("session open must precede close");
  const auto open_ns = static_cast<std::int64_t>(open_seconds * 1e9);
  const auto close_ns = static_cast<std::int64_t>(close_seconds * 1e9);
  std::vector<DayFlow> days;
  for (const auto& rec : records) {
    const std::int64_t day = rec.ev.ts_ns / kNsPerDay;
    const std::int64_t tod = rec.ev.ts_ns % kNsPerDay;
    if (tod < open_ns || tod >= close_ns) continue;
    if (days.empty() || days.back().day_start_ns != day * kNsPerDay) {
      days.push_back(DayFlow{day * kNsPerDay, {}});
    }
    days.back().records.push_back(rec);
  }
  return days;
}

struct FlowSegment {
  std::int64_t ref_half_ticks = 0;
  std::int64_t start_ts_ns = 0;
  std::vector<OrderEvent> events;
};

inline std::vector<OrderEvent> flatten_segments(
    std::span<const FlowSegment> segments) {
  std::vector<OrderEvent> events;
  for (const auto& seg : segments)
    events.insert(events.end(), seg.events.begin(), seg.events.end());
  return events;
}

// One segment per day keeping the records' own dt values; used for flow
// files whose segment structure was already baked into the dt column.
inline std::vector<FlowSegment> single_segment(
    std::span<const LogRecord> records) {
  std::vector<FlowSegment> out;
  if (records.empty()) return out;
  FlowSegment seg;
  seg.start_ts_ns = records.front().ev.ts_ns;
  for (const auto& rec : records)
    if (!rec.ref_move) seg.events.push_back(rec.ev);
  out.push_back(std::move(seg));
  return out;
}

// Splits a day's records into maximal runs of constant reference price and
// assigns per-queue interarrival times inside each run. The first event of a
// queue in a segment gets dt = -1: its clock opened at the segment boundary,
// so it carries no interarrival information for the estimators.
inline std::vector<FlowSegment> segment_by_ref_price(
    std::span<const LogRecord> records) {
  std::vector<FlowSegment> segments;
  std::map<std::pair<int, int>, std::int64_t> last_ts;  // (side, level) -> ts
  for (const auto& rec : records) {
    if (segments.empty() ||
        segments.back().ref_half_ticks != rec.ref_half_ticks) {
      FlowSegment seg;
      seg.ref_half_ticks = rec.ref_half_ticks;
      seg.start_ts_ns = rec.ev.ts_ns;
      segments.push_back(std::move(seg));
      last_ts.clear();
    }
    if (rec.ref_move) continue;
    OrderEvent ev = rec.ev;
    const auto key = std::make_pair(static_cast<int>(ev.side), ev.level);
    const auto it = last_ts.find(key);
    if (it == last_ts.end()) {
      ev.dt = -1.0;
    } else {
      ev.dt = static_cast<double>(ev.ts_ns - it->second) * 1e-9;
    }
    last_ts[key] = ev.ts_ns;
    segments.back().events.push_back(ev);
  }
  return segments;
}

// -------------------------------------------------------------------------
// Descriptive statistics
// -------------------------------------------------------------------------

struct LevelStats {
  int level = 0;
  std::int64_t n_limit = 0;
  std::int64_t n_cancel = 0;   // includes full cancellations
  std::int64_t n_market = 0;   // includes full consumptions by trade
  double aes = std::numeric_limits<double>::quiet_NaN();  // lots per event
  double ait_ms = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

inline LevelStats level_stats(std::span<const FlowSegment> segments,
                              int level) {
  if (level < 1) throw DataError("level must be >= 1");
  LevelStats st;
  st.level = level;
  double size_sum = 0.0;
  std::int64_t size_n = 0;
  double dt_sum = 0.0;
  std::int64_t dt_n = 0;
  for (const auto& seg : segments) {
    for (const auto& ev : seg.events) {
      if (ev.level != level) continue;
      switch (base_type(ev.eta)) {
        case EventType::Limit: ++st.n_limit; break;
        case EventType::Cancel: ++st.n_cancel; break;
        case EventType::Market: ++st.n_market; break;
        default: break;
      }
      size_sum += static_cast<double>(ev.size);
      ++size_n;
      if (has_exposure(ev)) {
        dt_sum += ev.dt;
        ++dt_n;
      }
    }
  }
  if (size_n > 0) {
    st.aes = size_sum / static_cast<double>(size_n);
    st.defined = true;
  }
  if (dt_n > 0) st.ait_ms = dt_sum / static_cast<double>(dt_n) * 1e3;
  return st;
}

}  // namespace qrlob
