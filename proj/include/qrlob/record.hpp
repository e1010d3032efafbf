#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qrlob/book.hpp"
#include "qrlob/errors.hpp"

namespace qrlob {

// One line of an event log: an order flow event plus the book context that
// prevailed right after it was applied. Records with `ref_move` set mark a
// reference-price transition; their event payload stores the depleted side
// and the size drawn for the newly exposed deepest level, so a log replays
// into the exact book path that produced it.
struct LogRecord {
  OrderEvent ev;
  std::int64_t ref_half_ticks = 0;
  double mid_price = 0.0;
  bool ref_move = false;
};

struct EventLogMeta {
  std::string variant;  // empty for ingested historical flow
  int depth = 0;
  double tick_size = 0.01;
  double theta = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double horizon = 0.0;     // seconds
  std::int64_t t0_ns = 0;   // wall-clock timestamp of simulation time zero
};

struct EventLogData {
  EventLogMeta meta;
  std::optional<LobState> init_state;
  std::vector<LogRecord> records;
  // False for plain 7-column flow files, whose records carry no reference or
  // mid price; their dt column is then the only segmentation information.
  bool has_book_context = true;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, int line_no, const char* what) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw DataError("line " + std::to_string(line_no) + ": bad " + what +
                    " '" + std::string(field) + "'");
  return value;
}

inline double parse_double(std::string_view field, int line_no,
                           const char* what) {
  // from_chars<double> handles the plain decimal forms we emit.
  double value{};
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw DataError("line " + std::to_string(line_no) + ": bad " + what +
                    " '" + std::string(field) + "'");
  return value;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline constexpr std::string_view kFlowHeader =
    "ts_ns,eta,side,level,size,dt_ns,q_before";
inline constexpr std::string_view kEventLogHeader =
    "ts_ns,eta,side,level,size,dt_ns,q_before,ref_price,mid_price";
inline constexpr std::string_view kEventLogMagic = "# qrlob-eventlog v1";

// dt < 0 marks an event that opens its queue's interarrival clock in a new
// constant-reference-price segment; such events carry no exposure and the
// estimators skip them. Written as dt_ns = -1.
inline bool has_exposure(const OrderEvent& ev) { return ev.dt >= 0.0; }

inline std::int64_t dt_to_ns(double dt_seconds) {
  if (dt_seconds < 0.0) return -1;
  return std::llround(dt_seconds * 1e9);
}

inline double dt_from_ns(std::int64_t dt_ns) {
  if (dt_ns < 0) return -1.0;
  return static_cast<double>(dt_ns) * 1e-9;
}

inline void write_flow_line(std::ostream& os, const OrderEvent& ev) {
  os << ev.ts_ns << ',' << to_string(ev.eta) << ',' << to_string(ev.side)
     << ',' << ev.level << ',' << ev.size << ',' << dt_to_ns(ev.dt) << ','
     << ev.q_before;
}

inline void write_flow_file(std::ostream& os,
                            std::span<const OrderEvent> events) {
  os << kFlowHeader << '\n';
  for (const auto& ev : events) {
    write_flow_line(os, ev);
    os << '\n';
  }
}

inline void write_event_log(std::ostream& os, const EventLogData& log) {
  os << kEventLogMagic << '\n';
  os << "# variant=" << (log.meta.variant.empty() ? "-" : log.meta.variant)
     << " depth=" << log.meta.depth
     << " tick=" << detail::format_double(log.meta.tick_size)
     << " theta=" << detail::format_double(log.meta.theta)
     << " seed=" << log.meta.seed
     << " horizon=" << detail::format_double(log.meta.horizon)
     << " t0_ns=" << log.meta.t0_ns << '\n';
  if (log.init_state) {
    const LobState& st = *log.init_state;
    os << "# init ref_half_ticks " << st.ref_half_ticks << '\n';
    os << "# init bid";
    for (auto q : st.bids) os << ' ' << q;
    os << '\n';
    os << "# init ask";
    for (auto q : st.asks) os << ' ' << q;
    os << '\n';
  }
  os << kEventLogHeader << '\n';
  const double half_tick = log.meta.tick_size * 0.5;
  for (const auto& rec : log.records) {
    const OrderEvent& ev = rec.ev;
    os << ev.ts_ns << ','
       << (rec.ref_move ? "R" : to_string(ev.eta)) << ','
       << to_string(ev.side) << ',' << ev.level << ',' << ev.size << ','
       << dt_to_ns(ev.dt) << ',' << ev.q_before << ','
       << detail::format_double(static_cast<double>(rec.ref_half_ticks) *
                                half_tick)
       << ',' << detail::format_double(rec.mid_price) << '\n';
  }
}

inline void write_event_log_file(const std::string& path,
                                 const EventLogData& log) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_event_log(os, log);
}

// Reads either a 7-column flow file or a 9-column event log, detected from
// the header. Plain flow files come back with ref/mid unset.
inline EventLogData read_event_log(std::istream& is,
                                   const std::string& name = "<stream>") {
  EventLogData log;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  bool has_book_columns = false;
  double half_tick = log.meta.tick_size * 0.5;

  auto parse_meta = [&](const std::string& text) {
    std::istringstream ms(text);
    std::string token;
    while (ms >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      try {
        if (key == "variant") log.meta.variant = value == "-" ? "" : value;
        else if (key == "depth") log.meta.depth = std::stoi(value);
        else if (key == "tick") log.meta.tick_size = std::stod(value);
        else if (key == "theta") log.meta.theta = std::stod(value);
        else if (key == "seed") log.meta.seed = std::stoull(value);
        else if (key == "horizon") log.meta.horizon = std::stod(value);
        else if (key == "t0_ns") log.meta.t0_ns = std::stoll(value);
      } catch (const std::exception&) {
        throw DataError(name + " line " + std::to_string(line_no) +
                        ": bad meta field '" + token + "'");
      }
    }
    half_tick = log.meta.tick_size * 0.5;
  };

  auto parse_init = [&](const std::string& text) {
    std::istringstream ms(text);
    std::string what;
    ms >> what;
    if (!log.init_state) log.init_state.emplace();
    log.init_state->tick_size = log.meta.tick_size;
    if (what == "ref_half_ticks") {
      ms >> log.init_state->ref_half_ticks;
    } else if (what == "bid" || what == "ask") {
      std::vector<std::int64_t> qs;
      std::int64_t q;
      while (ms >> q) qs.push_back(q);
      (what == "bid" ? log.init_state->bids : log.init_state->asks) =
          std::move(qs);
    }
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# variant=", 0) == 0) parse_meta(line.substr(2));
      else if (line.rfind("# init ", 0) == 0) parse_init(line.substr(7));
      continue;
    }
    if (!header_seen) {
      if (line == kEventLogHeader) has_book_columns = true;
      else if (line == kFlowHeader) has_book_columns = false;
      else
        throw DataError(name + " line " + std::to_string(line_no) +
                        ": unrecognized header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_csv(line);
    const std::size_t expected = has_book_columns ? 9u : 7u;
    if (fields.size() != expected)
      throw DataError(name + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " fields, got " +
                      std::to_string(fields.size()));
    LogRecord rec;
    OrderEvent& ev = rec.ev;
    ev.ts_ns = detail::parse_number<std::int64_t>(fields[0], line_no, "ts_ns");
    if (fields[1] == "R") {
      rec.ref_move = true;
    } else {
      ev.eta = event_type_from_string(fields[1]);
    }
    ev.side = side_from_string(fields[2]);
    ev.level = detail::parse_number<int>(fields[3], line_no, "level");
    ev.size = detail::parse_number<std::int64_t>(fields[4], line_no, "size");
    ev.dt = dt_from_ns(
        detail::parse_number<std::int64_t>(fields[5], line_no, "dt_ns"));
    ev.q_before =
        detail::parse_number<std::int64_t>(fields[6], line_no, "q_before");
    if (has_book_columns) {
      const double ref = detail::parse_double(fields[7], line_no, "ref_price");
      rec.ref_half_ticks = std::llround(ref / half_tick);
      rec.mid_price = detail::parse_double(fields[8], line_no, "mid_price");
    }
    log.records.push_back(rec);
  }
  if (!header_seen && !log.records.empty())
    throw DataError(name + ": missing header row");
  log.has_book_context = has_book_columns;
  return log;
}

inline EventLogData read_event_log_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_event_log(is, path);
}

struct LogSummary {
  std::array<std::int64_t, kNumEventTypes> by_type{};
  std::int64_t events = 0;
  std::int64_t ref_moves = 0;
  std::int64_t traded_lots = 0;
};

inline LogSummary summarize(const EventLogData& log) {
  LogSummary s;
  for (const auto& rec : log.records) {
    if (rec.ref_move) {
      ++s.ref_moves;
      continue;
    }
    ++s.events;
    s.by_type[static_cast<int>(rec.ev.eta)] += 1;
    if (is_trade(rec.ev.eta)) s.traded_lots += rec.ev.size;
  }
  return s;
}

// Replays a log through the matching rules, starting from its recorded
// initial state. Throws if the log and the rules disagree at any step.
inline LobState replay_log(const EventLogData& log) {
  if (!log.init_state) throw DataError("log has no initial state to replay from");
  LobState st = *log.init_state;
  for (const auto& rec : log.records) {
    if (rec.ref_move) {
      st = shift_ref_price(std::move(st), rec.ev.side, rec.ev.size);
    } else {
      if (st.queue(rec.ev.side, rec.ev.level) != rec.ev.q_before)
        throw DataError("replay diverged from logged queue size at ts " +
                        std::to_string(rec.ev.ts_ns));
      auto res = apply_event(std::move(st), rec.ev);
      st = std::move(res.state);
    }
    if (st.ref_half_ticks != rec.ref_half_ticks)
      throw DataError("replay diverged from logged reference price at ts " +
                      std::to_string(rec.ev.ts_ns));
  }
  return st;
}

}  // namespace qrlob
