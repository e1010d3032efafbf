#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "qrlob/calibrate.hpp"
#include "qrlob/rng.hpp"

using namespace qrlob;

namespace {

OrderEvent make_event(EventType eta, std::int64_t q_before, double dt,
                      std::int64_t size = 1, int level = 1,
                      Side side = Side::Ask) {
  OrderEvent ev;
  ev.eta = eta;
  ev.side = side;
  ev.level = level;
  ev.size = size;
  ev.dt = dt;
  ev.q_before = q_before;
  return ev;
}

struct QueueRates {
  std::vector<double> limit, cancel, market;  // indexed by bucket, aes = 1
  double at(const std::vector<double>& v, std::int64_t q) const {
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(q),
                                         v.size() - 1);
    return v[n];
  }
};

// Direct continuous-time simulation of one queue under known unitary rates;
// independent of the production simulator on purpose.
std::vector<FlowSegment> simulate_queue_flow(const QueueRates& rates,
                                             std::int64_t n_events,
                                             std::uint64_t seed,
                                             std::int64_t q0 = 2) {
  SplitMix64 rng(seed);
  std::vector<FlowSegment> segments(1);
  auto& events = segments[0].events;
  std::int64_t q = q0;
  double t = 0.0;
  bool first = true;
  while (std::ssize(events) < n_events) {
    const double l = rates.at(rates.limit, q);
    const double c = q > 0 ? rates.at(rates.cancel, q) : 0.0;
    const double m = q > 0 ? rates.at(rates.market, q) : 0.0;
    const double total = l + c + m;
    REQUIRE(total > 0.0);
    const double dt = exponential(rng, total);
    t += dt;
    const double u = uniform01(rng) * total;
    EventType eta = EventType::Limit;
    if (u < l) eta = EventType::Limit;
    else if (u < l + c) eta = EventType::Cancel;
    else eta = EventType::Market;
    auto ev = make_event(eta, q, first ? -1.0 : dt);
    ev.ts_ns = static_cast<std::int64_t>(t * 1e9);
    events.push_back(ev);
    q += eta == EventType::Limit ? 1 : -1;
    first = false;
  }
  return segments;
}

CalibrationOptions unit_options(int n_max = 60) {
  CalibrationOptions opt;
  opt.aes_override = 1.0;
  opt.min_obs = 1;
  opt.n_max = n_max;
  return opt;
}

}  // namespace

TEST_CASE("closed-form estimates on a two-event bucket") {
  std::vector<FlowSegment> segments(1);
  segments[0].events.push_back(make_event(EventType::Limit, 2, 1.0));
  segments[0].events.push_back(make_event(EventType::Cancel, 2, 3.0));
  const auto t = estimate_qr(segments, 1, unit_options());
  CHECK(t.total_rate[2] == Catch::Approx(0.5));  // inverse mean of 1s and 3s
  CHECK(t.rate[static_cast<int>(EventType::Limit)][2] == Catch::Approx(0.25));
  CHECK(t.rate[static_cast<int>(EventType::Cancel)][2] == Catch::Approx(0.25));
  CHECK(t.rate[static_cast<int>(EventType::Market)][2] == 0.0);
}

TEST_CASE("single-type flow concentrates the whole rate") {
  std::vector<FlowSegment> segments(1);
  for (int i = 0; i < 10; ++i)
    segments[0].events.push_back(make_event(EventType::Market, 3, 0.5, 1));
  const auto t = estimate_qr(segments, 1, unit_options());
  CHECK(t.rate[static_cast<int>(EventType::Market)][3] == t.total_rate[3]);
  CHECK(t.rate[static_cast<int>(EventType::Limit)][3] == 0.0);
  CHECK(t.rate[static_cast<int>(EventType::Cancel)][3] == 0.0);
}

TEST_CASE("events without exposure are excluded from estimation") {
  std::vector<FlowSegment> segments(1);
  segments[0].events.push_back(make_event(EventType::Limit, 2, -1.0));
  segments[0].events.push_back(make_event(EventType::Limit, 2, 2.0));
  const auto t = estimate_qr(segments, 1, unit_options());
  CHECK(t.n_events[2] == 1);
  CHECK(t.total_rate[2] == Catch::Approx(0.5));
}

TEST_CASE("buckets above the cap pool into the cap") {
  std::vector<FlowSegment> segments(1);
  segments[0].events.push_back(make_event(EventType::Limit, 500, 1.0));
  segments[0].events.push_back(make_event(EventType::Limit, 73, 1.0));
  const auto t = estimate_qr(segments, 1, unit_options(10));
  CHECK(t.n_events[10] == 2);
}

TEST_CASE("sparse buckets borrow the nearest well-observed rate") {
  CalibrationOptions opt;
  opt.aes_override = 1.0;
  opt.min_obs = 3;
  std::vector<FlowSegment> segments(1);
  for (int i = 0; i < 5; ++i)
    segments[0].events.push_back(make_event(EventType::Limit, 4, 2.0));
  segments[0].events.push_back(make_event(EventType::Cancel, 7, 1.0));
  const auto t = estimate_qr(segments, 1, opt);
  CHECK_FALSE(t.low_confidence[4]);
  CHECK(t.low_confidence[7]);
  CHECK(t.fill_source[7] == 4);
  CHECK(t.rate[static_cast<int>(EventType::Limit)][7] ==
        t.rate[static_cast<int>(EventType::Limit)][4]);
  // Bucket zero borrows too but never receives consuming intensity.
  CHECK(t.low_confidence[0]);
  CHECK(t.rate[static_cast<int>(EventType::Cancel)][0] == 0.0);
}

TEST_CASE("simulate then re-estimate recovers the generating rates") {
  QueueRates rates;
  rates.limit = {1.2, 1.0, 0.9, 0.8};
  rates.cancel = {0.0, 0.3, 0.5, 0.9};
  rates.market = {0.0, 0.2, 0.3, 0.5};
  const auto segments = simulate_queue_flow(rates, 50000, 42);
  const auto t = estimate_qr(segments, 1, unit_options(3));
  for (int n = 0; n <= 3; ++n) {
    const auto check = [&](EventType eta, const std::vector<double>& truth) {
      const double est = t.rate[static_cast<int>(eta)][static_cast<std::size_t>(n)];
      if (truth[static_cast<std::size_t>(n)] == 0.0) {
        CHECK(est == 0.0);
      } else {
        CHECK(est == Catch::Approx(truth[static_cast<std::size_t>(n)])
                         .margin(0.08 * truth[static_cast<std::size_t>(n)]));
      }
    };
    check(EventType::Limit, rates.limit);
    check(EventType::Cancel, rates.cancel);
    check(EventType::Market, rates.market);
  }
}

TEST_CASE("estimation error shrinks with the sample roughly as root-N") {
  QueueRates rates;
  rates.limit = {1.3, 1.0, 0.9, 0.8};
  rates.cancel = {0.0, 0.4, 0.6, 0.8};
  rates.market = {0.0, 0.3, 0.3, 0.3};
  auto max_error = [&](std::int64_t n_events, std::uint64_t seed) {
    const auto segments = simulate_queue_flow(rates, n_events, seed);
    const auto t = estimate_qr(segments, 1, unit_options(3));
    double worst = 0.0;
    for (int n = 0; n <= 3; ++n) {
      const auto check = [&](EventType eta, double truth) {
        if (truth == 0.0) return;
        const double est =
            t.rate[static_cast<int>(eta)][static_cast<std::size_t>(n)];
        worst = std::max(worst, std::abs(est - truth) / truth);
      };
      check(EventType::Limit, rates.limit[static_cast<std::size_t>(n)]);
      check(EventType::Cancel, rates.cancel[static_cast<std::size_t>(n)]);
      check(EventType::Market, rates.market[static_cast<std::size_t>(n)]);
    }
    return worst;
  };
  // Averaged over a few seeds so the 16x sample-size contrast shows through
  // the realization noise; the expected error ratio is 4.
  double small = 0.0, large = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    small += max_error(4000, 100 + s);
    large += max_error(64000, 200 + s);
  }
  CHECK(large < small);
  CHECK(large < 0.6 * small);
}

TEST_CASE("five-type relabelling catches full consumptions") {
  std::vector<FlowSegment> segments(1);
  segments[0].events.push_back(make_event(EventType::Market, 4, 1.0, 4));
  segments[0].events.push_back(make_event(EventType::Market, 4, 1.0, 2));
  segments[0].events.push_back(make_event(EventType::Cancel, 4, 1.0, 4));
  const auto t = estimate_ftqr(segments, 1, unit_options());
  CHECK(t.n_by_type[static_cast<int>(EventType::MarketAll)][4] == 1);
  CHECK(t.n_by_type[static_cast<int>(EventType::Market)][4] == 1);
  CHECK(t.n_by_type[static_cast<int>(EventType::CancelAll)][4] == 1);
  CHECK(t.n_by_type[static_cast<int>(EventType::Cancel)][4] == 0);
}

TEST_CASE("without full consumptions the five-type model degenerates") {
  QueueRates rates;
  rates.limit = {1.0, 1.0, 0.8};
  rates.cancel = {0.0, 0.0, 0.6};  // consumptions only at q >= 2, size 1 < q
  rates.market = {0.0, 0.0, 0.4};
  const auto segments = simulate_queue_flow(rates, 2000, 7, 3);
  const auto qr = estimate_qr(segments, 1, unit_options(5));
  const auto ftqr = estimate_ftqr(segments, 1, unit_options(5));
  for (int n = 0; n <= 5; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    CHECK(ftqr.rate[static_cast<int>(EventType::CancelAll)][ns] == 0.0);
    CHECK(ftqr.rate[static_cast<int>(EventType::MarketAll)][ns] == 0.0);
    for (int e = 0; e < 3; ++e) CHECK(ftqr.rate[e][ns] == qr.rate[e][ns]);
  }
}

TEST_CASE("full and partial consuming counts conserve the three-type counts") {
  QueueRates rates;
  rates.limit = {1.5, 1.0, 0.8, 0.7};
  rates.cancel = {0.0, 0.5, 0.6, 0.7};
  rates.market = {0.0, 0.5, 0.4, 0.3};
  const auto segments = simulate_queue_flow(rates, 20000, 11, 2);
  const auto qr = estimate_qr(segments, 1, unit_options(3));
  const auto ftqr = estimate_ftqr(segments, 1, unit_options(3));
  for (int n = 0; n <= 3; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    CHECK(ftqr.n_by_type[static_cast<int>(EventType::Market)][ns] +
              ftqr.n_by_type[static_cast<int>(EventType::MarketAll)][ns] ==
          qr.n_by_type[static_cast<int>(EventType::Market)][ns]);
    CHECK(ftqr.n_by_type[static_cast<int>(EventType::Cancel)][ns] +
              ftqr.n_by_type[static_cast<int>(EventType::CancelAll)][ns] ==
          qr.n_by_type[static_cast<int>(EventType::Cancel)][ns]);
  }
  // Unitary sizes fully consume exactly at q = 1, so the market_all share
  // of bucket 1 is the share of market events arriving at q = 1.
  CHECK(ftqr.rate[static_cast<int>(EventType::MarketAll)][1] > 0.0);
}

TEST_CASE("a constructed full-consumption share is recovered") {
  // 30% of market events at bucket 1 take the whole queue.
  SplitMix64 rng(13);
  std::vector<FlowSegment> segments(1);
  std::int64_t n_full = 0, n_market = 0;
  for (int i = 0; i < 20000; ++i) {
    const bool full = uniform01(rng) < 0.3;
    // q = 2 stays in bucket 1 with aes = 2: full events take size 2.
    segments[0].events.push_back(
        make_event(EventType::Market, 2, 0.5, full ? 2 : 1));
    ++n_market;
    if (full) ++n_full;
  }
  CalibrationOptions opt;
  opt.aes_override = 2.0;
  opt.min_obs = 1;
  const auto t = estimate_ftqr(segments, 1, opt);
  const double lam_m = t.rate[static_cast<int>(EventType::Market)][1];
  const double lam_ma = t.rate[static_cast<int>(EventType::MarketAll)][1];
  const double share = lam_ma / (lam_m + lam_ma);
  CHECK(std::abs(share - 0.3) < 0.02);
  CHECK(share == Catch::Approx(static_cast<double>(n_full) /
                               static_cast<double>(n_market)));
}

TEST_CASE("size-aware marginals equal the three-type rates exactly") {
  QueueRates rates;
  rates.limit = {1.5, 1.2, 0.9, 0.7};
  rates.cancel = {0.0, 0.4, 0.6, 0.8};
  rates.market = {0.0, 0.4, 0.3, 0.2};
  const auto segments = simulate_queue_flow(rates, 20000, 17, 2);
  const auto qr = estimate_qr(segments, 1, unit_options(3));
  const auto saqr = estimate_saqr(segments, 1, unit_options(3));
  for (int n = 0; n <= 3; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    for (int e = 0; e < 3; ++e) {
      std::int64_t sum = 0;
      for (int s = 1; s <= saqr.size_cap; ++s)
        sum += saqr.n_by_type_size[e][static_cast<std::size_t>(s - 1)][ns];
      CHECK(sum == qr.n_by_type[e][ns]);          // exact counting identity
      CHECK(saqr.rate[e][ns] == qr.rate[e][ns]);  // same closed form, bitwise
    }
  }
}

TEST_CASE("consuming intensities vanish above the queue size") {
  QueueRates rates;
  rates.limit = {1.5, 1.0, 0.8, 0.7};
  rates.cancel = {0.0, 0.5, 0.6, 0.7};
  rates.market = {0.0, 0.5, 0.4, 0.3};
  const auto segments = simulate_queue_flow(rates, 20000, 19, 2);
  const auto saqr = estimate_saqr(segments, 1, unit_options(3));
  for (int n = 0; n <= 3; ++n)
    for (int s = n + 1; s <= saqr.size_cap; ++s) {
      CHECK(saqr.n_by_type_size[static_cast<int>(EventType::Market)]
                               [static_cast<std::size_t>(s - 1)]
                               [static_cast<std::size_t>(n)] == 0);
      CHECK(saqr.n_by_type_size[static_cast<int>(EventType::Cancel)]
                               [static_cast<std::size_t>(s - 1)]
                               [static_cast<std::size_t>(n)] == 0);
    }
}

TEST_CASE("full-queue market orders dominate the diagonal") {
  // 40% of market orders take the whole queue; the rest spread uniformly
  // below it, so the diagonal cell holds the largest share of each row.
  SplitMix64 rng(23);
  std::vector<FlowSegment> segments(1);
  for (int i = 0; i < 30000; ++i) {
    const std::int64_t q = uniform_int(rng, 3, 6);
    std::int64_t size;
    if (uniform01(rng) < 0.4) size = q;
    else size = uniform_int(rng, 1, q - 1);
    segments[0].events.push_back(make_event(EventType::Market, q, 0.5, size));
  }
  const auto t = estimate_saqr(segments, 1, unit_options(8));
  for (int n = 3; n <= 6; ++n) {
    const auto ns = static_cast<std::size_t>(n);
    const auto& m = t.n_by_type_size[static_cast<int>(EventType::Market)];
    for (int s = 1; s < n; ++s)
      CHECK(m[static_cast<std::size_t>(n - 1)][ns] >=
            m[static_cast<std::size_t>(s - 1)][ns]);
  }
}

TEST_CASE("size distributions") {
  std::vector<FlowSegment> segments(1);
  segments[0].events.push_back(make_event(EventType::Limit, 5, 1.0, 1));
  segments[0].events.push_back(make_event(EventType::Limit, 5, 1.0, 1));
  segments[0].events.push_back(make_event(EventType::Limit, 5, 1.0, 2));
  SizeDistributionQuery q;
  q.level = 1;
  const auto d = size_distribution(segments, q);
  REQUIRE(d.pmf.support == std::vector<std::int64_t>{1, 2});
  CHECK(d.pmf.probs[0] == Catch::Approx(2.0 / 3.0));
  CHECK(d.pmf.probs[1] == Catch::Approx(1.0 / 3.0));
  double total = 0.0;
  for (double p : d.pmf.probs) total += p;
  CHECK(total == Catch::Approx(1.0).epsilon(1e-12));

  SizeDistributionQuery empty;
  empty.level = 2;
  CHECK_THROWS_AS(size_distribution(segments, empty), DataError);
}

TEST_CASE("conditional size distribution shifts toward full consumption") {
  SplitMix64 rng(29);
  std::vector<FlowSegment> segments(1);
  // Stationary flow: mostly small orders at large queues. At queue 30 the
  // market orders overwhelmingly take everything.
  for (int i = 0; i < 30000; ++i)
    segments[0].events.push_back(
        make_event(EventType::Market, 200, 0.5, uniform_int(rng, 1, 4)));
  for (int i = 0; i < 500; ++i)
    segments[0].events.push_back(make_event(
        EventType::Market, 30, 0.5, uniform01(rng) < 0.8 ? 30 : 2));
  SizeDistributionQuery stat;
  stat.level = 1;
  stat.eta = EventType::Market;
  const auto stationary = size_distribution(segments, stat);
  SizeDistributionQuery cond = stat;
  cond.aes = 6.0;
  cond.queue_bucket = 5;  // ceil(30 / 6)
  const auto conditional = size_distribution(segments, cond);
  auto mass_at = [](const SizeDistribution& d, std::int64_t s) {
    for (std::size_t i = 0; i < d.pmf.support.size(); ++i)
      if (d.pmf.support[i] == s) return d.pmf.probs[i];
    return 0.0;
  };
  CHECK(mass_at(conditional, 30) > 40.0 * mass_at(stationary, 30));
}

TEST_CASE("theta recovery from a generated move path") {
  ThetaOptions opt;
  SplitMix64 rng(31);
  const auto path = simulate_move_path(0.7, 150000, opt, rng);
  const auto cal = calibrate_theta(path, opt);
  CHECK_FALSE(cal.clamped);
  CHECK(std::abs(cal.theta - 0.7) < 0.05);
  CHECK(std::abs(cal.achieved_ratio - cal.target_ratio) < 0.01);
}

TEST_CASE("alternation-only path clamps to a small theta") {
  std::vector<int> moves;
  for (int i = 0; i < 1000; ++i) moves.push_back(i % 2 == 0 ? 1 : -1);
  const auto cal = calibrate_theta(moves);
  CHECK(cal.clamped);
  CHECK(cal.theta <= 0.02);
  CHECK(cal.target_ratio == 0.0);
  CHECK(cal.achieved_ratio > 0.4);  // the mechanism cannot alternate that hard
}

TEST_CASE("a single move cannot define a continuation ratio") {
  std::vector<int> moves = {1};
  CHECK_THROWS_AS(calibrate_theta(moves), DataError);
}

TEST_CASE("identical halves diverge by zero") {
  QueueRates rates;
  rates.limit = {1.0, 0.9, 0.8};
  rates.cancel = {0.0, 0.4, 0.5};
  rates.market = {0.0, 0.3, 0.3};
  auto segments = simulate_queue_flow(rates, 4000, 37, 2);
  std::vector<FlowSegment> doubled = {segments[0], segments[0]};
  const auto split = stability_split(doubled, 1, unit_options(2));
  CHECK(split.max_divergence == 0.0);
}

TEST_CASE("stationary flow stays below ten percent divergence") {
  QueueRates rates;
  rates.limit = {1.4, 1.1, 0.9, 0.8};
  rates.cancel = {0.0, 0.5, 0.6, 0.7};
  rates.market = {0.0, 0.4, 0.3, 0.3};
  std::vector<FlowSegment> segments;
  for (int day = 0; day < 4; ++day) {
    auto s = simulate_queue_flow(rates, 50000, 41 + static_cast<std::uint64_t>(day), 2);
    segments.push_back(std::move(s[0]));
  }
  auto opt = unit_options(3);
  opt.min_obs = 200;
  const auto split = stability_split(segments, 1, opt);
  CHECK(split.max_divergence < 0.10);
}

TEST_CASE("doubled rates in the second half show up as full divergence") {
  QueueRates rates;
  rates.limit = {1.0, 0.9, 0.8};
  rates.cancel = {0.0, 0.5, 0.8};
  rates.market = {0.0, 0.3, 0.4};
  QueueRates doubled = rates;
  for (auto* v : {&doubled.limit, &doubled.cancel, &doubled.market})
    for (auto& x : *v) x *= 2.0;
  auto first = simulate_queue_flow(rates, 40000, 43, 2);
  auto second = simulate_queue_flow(doubled, 40000, 47, 2);
  std::vector<FlowSegment> segments = {first[0], second[0]};
  // Thinly observed buckets are flagged and excluded from the diagnostic.
  auto opt = unit_options(2);
  opt.min_obs = 500;
  const auto split = stability_split(segments, 1, opt);
  CHECK(split.max_divergence == Catch::Approx(1.0).margin(0.15));
}

TEST_CASE("the closed form maximizes the flow likelihood") {
  QueueRates rates;
  rates.limit = {1.2, 1.0, 0.8, 0.7};
  rates.cancel = {0.0, 0.4, 0.5, 0.6};
  rates.market = {0.0, 0.3, 0.3, 0.2};
  const auto segments = simulate_queue_flow(rates, 5000, 53, 2);
  const auto t = estimate_qr(segments, 1, unit_options(3));
  const double best = qr_log_likelihood(t, segments);
  SplitMix64 rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    LevelTable perturbed = t;
    for (int e = 0; e < kNumEventTypes; ++e)
      for (auto& r : perturbed.rate[e])
        if (r > 0.0) r *= std::exp(0.2 * (uniform01(rng) - 0.5));
    CHECK(qr_log_likelihood(perturbed, segments) <= best);
  }
}
