#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrlob/calibrate.hpp"
#include "qrlob/flow.hpp"
#include "qrlob/hawkes.hpp"

namespace qrlob {

// Everything a simulation needs: the calibrated intensity tables (or the
// Hawkes block for the best-quote variants), the per-level stationary order
// size and queue size distributions, and the reference-price move
// probability.
struct QrModel {
  Variant variant = Variant::QR;
  int depth = 5;
  double tick_size = 0.01;
  double theta = 0.7;
  std::vector<LevelTable> levels;        // empty for Hawkes variants
  std::vector<DiscretePmf> size_dists;   // stationary order sizes per level
  std::vector<DiscretePmf> queue_dists;  // stationary queue sizes per level
  std::optional<HawkesModel> hawkes;

  double aes(int level) const {
    if (!levels.empty())
      return levels[static_cast<std::size_t>(level - 1)].aes;
    return aes_by_level.empty()
               ? 1.0
               : aes_by_level[std::min<std::size_t>(
                     static_cast<std::size_t>(level - 1),
                     aes_by_level.size() - 1)];
  }

  // AES per level for Hawkes variants, which carry no intensity tables.
  std::vector<double> aes_by_level;
};

// Hawkes component encoding shared by the simulator and the event-excitation
// diagnostics: side * 3 + {L=0, C=1, M=2}.
inline int hawkes_component(Side side, EventType eta) {
  int t = 0;
  switch (base_type(eta)) {
    case EventType::Limit: t = 0; break;
    case EventType::Cancel: t = 1; break;
    case EventType::Market: t = 2; break;
    default: t = 0; break;
  }
  return static_cast<int>(side) * 3 + t;
}

inline constexpr int kHawkesDim = 6;

struct CalibrateModelOptions {
  CalibrationOptions estimation;
  double theta = 0.7;           // used unless calibrate_theta_from_moves
  bool calibrate_theta_from_moves = false;
  ThetaOptions theta_options;
  HawkesFitOptions hawkes_options;
};

inline std::vector<FlowSegment> collect_segments(std::span<const DayFlow> days,
                                                 bool has_book_context = true) {
  std::vector<FlowSegment> segments;
  for (const auto& day : days) {
    auto segs = has_book_context ? segment_by_ref_price(day.records)
                                 : single_segment(day.records);
    segments.insert(segments.end(), segs.begin(), segs.end());
  }
  return segments;
}

// Signed reference-price move directions across a day, the input to the
// continuation-ratio calibration of theta.
inline std::vector<int> ref_price_moves(std::span<const DayFlow> days) {
  std::vector<int> moves;
  for (const auto& day : days) {
    std::optional<std::int64_t> prev;
    for (const auto& rec : day.records) {
      if (prev && rec.ref_half_ticks != *prev)
        moves.push_back(rec.ref_half_ticks > *prev ? 1 : -1);
      prev = rec.ref_half_ticks;
    }
  }
  return moves;
}

// Full calibration pipeline on sessionized flow: per-level intensity tables
// for the queue-reactive variants or a six-dimensional best-quote fit for
// the Hawkes ones, plus the size and queue distributions every variant
// shares.
inline QrModel calibrate_model(std::span<const DayFlow> days, Variant variant,
                               int depth, double tick_size,
                               const CalibrateModelOptions& opt = {},
                               bool has_book_context = true) {
  if (days.empty()) throw DataError("no sessions to calibrate from");
  QrModel model;
  model.variant = variant;
  model.depth = depth;
  model.tick_size = tick_size;
  model.theta = opt.theta;

  const auto segments = collect_segments(days, has_book_context);
  if (segments.empty()) throw DataError("no flow segments to calibrate from");

  for (int level = 1; level <= depth; ++level) {
    SizeDistributionQuery q;
    q.level = level;
    model.size_dists.push_back(size_distribution(segments, q).pmf);
    model.queue_dists.push_back(queue_size_distribution(segments, level));
  }

  if (is_hawkes(variant)) {
    std::vector<Realization> sessions;
    for (const auto& day : days) {
      Realization r;
      std::int64_t t0 = 0, t1 = 0;
      bool first = true;
      for (const auto& rec : day.records) {
        if (rec.ref_move || rec.ev.level != 1) continue;
        if (first) {
          t0 = rec.ev.ts_ns;
          first = false;
        }
        t1 = rec.ev.ts_ns;
        MarkedEvent ev;
        ev.t = static_cast<double>(rec.ev.ts_ns - t0) * 1e-9;
        ev.component = hawkes_component(rec.ev.side, rec.ev.eta);
        ev.size = rec.ev.size;
        r.events.push_back(ev);
      }
      if (r.events.empty()) continue;
      r.horizon = static_cast<double>(t1 - t0) * 1e-9;
      sessions.push_back(std::move(r));
    }
    if (sessions.empty())
      throw DataError("no best-quote events for the Hawkes fit");
    auto fitted = fit(kHawkesDim, std::span<const Realization>(sessions),
                      std::nullopt, opt.hawkes_options);
    model.hawkes = std::move(fitted.model);
    for (int level = 1; level <= depth; ++level) {
      CalibrationOptions aes_opt = opt.estimation;
      model.aes_by_level.push_back(
          detail::level_aes(segments, level, aes_opt));
    }
  } else {
    for (int level = 1; level <= depth; ++level) {
      switch (variant) {
        case Variant::FTQR:
          model.levels.push_back(estimate_ftqr(segments, level, opt.estimation));
          break;
        case Variant::SAQR:
          model.levels.push_back(estimate_saqr(segments, level, opt.estimation));
          break;
        default:
          model.levels.push_back(estimate_qr(segments, level, opt.estimation));
          break;
      }
    }
  }

  if (opt.calibrate_theta_from_moves) {
    const auto moves = ref_price_moves(days);
    if (moves.size() >= 2)
      model.theta = calibrate_theta(moves, opt.theta_options).theta;
  }
  return model;
}

}  // namespace qrlob
