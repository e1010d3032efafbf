#include <catch2/catch_amalgamated.hpp>

#include "qrlob/book.hpp"
#include "qrlob/rng.hpp"

using namespace qrlob;

namespace {

LobState small_book() {
  LobState st = make_lob_state(3, 0.01, 100.5);  // ref at 201 half-ticks
  st.bids = {5, 7, 9};
  st.asks = {5, 6, 8};
  return st;
}

OrderEvent ev(EventType eta, Side side, int level, std::int64_t size,
              std::int64_t q_before) {
  OrderEvent e;
  e.eta = eta;
  e.side = side;
  e.level = level;
  e.size = size;
  e.q_before = q_before;
  return e;
}

}  // namespace

TEST_CASE("limit orders add liquidity") {
  auto st = small_book();
  auto res = apply_event(st, ev(EventType::Limit, Side::Ask, 1, 3, 5));
  CHECK(res.state.asks[0] == 8);
  CHECK_FALSE(res.depleted_best);
}

TEST_CASE("market order consuming the whole best queue raises the flag") {
  auto st = small_book();
  auto res = apply_event(st, ev(EventType::Market, Side::Ask, 1, 5, 5));
  CHECK(res.state.asks[0] == 0);
  CHECK(res.depleted_best);
}

TEST_CASE("cancel at a deeper level") {
  auto st = small_book();
  st.bids = {5, 7, 9};
  auto res = apply_event(st, ev(EventType::Cancel, Side::Bid, 2, 2, 7));
  CHECK(res.state.bids[1] == 5);
  CHECK_FALSE(res.depleted_best);
}

TEST_CASE("depleting a deeper queue is not a best-level depletion") {
  auto st = small_book();
  auto res = apply_event(st, ev(EventType::Cancel, Side::Ask, 2, 6, 6));
  CHECK(res.state.asks[1] == 0);
  CHECK_FALSE(res.depleted_best);
}

TEST_CASE("cancel depleting the best non-empty level raises the flag") {
  auto st = small_book();
  st.asks = {0, 6, 8};  // level 1 empty; level 2 is the best
  auto res = apply_event(st, ev(EventType::Cancel, Side::Ask, 2, 6, 6));
  CHECK(res.depleted_best);
}

TEST_CASE("oversized consumption is rejected, not clipped") {
  auto st = small_book();
  CHECK_THROWS_AS(apply_event(st, ev(EventType::Market, Side::Ask, 1, 6, 5)),
                  DataError);
  CHECK_THROWS_AS(apply_event(st, ev(EventType::Cancel, Side::Bid, 2, 8, 7)),
                  DataError);
}

TEST_CASE("market orders away from the best quote are rejected") {
  auto st = small_book();
  CHECK_THROWS_AS(apply_event(st, ev(EventType::Market, Side::Ask, 2, 1, 6)),
                  DataError);
}

TEST_CASE("full-consumption events wipe the queue") {
  auto st = small_book();
  auto res = apply_event(st, ev(EventType::CancelAll, Side::Bid, 1, 5, 5));
  CHECK(res.state.bids[0] == 0);
  CHECK(res.depleted_best);
  CHECK_THROWS_AS(
      apply_event(st, ev(EventType::MarketAll, Side::Ask, 1, 4, 5)),
      DataError);  // size must equal the whole queue
}

TEST_CASE("queues stay non-negative under random legal flows") {
  SplitMix64 rng(7);
  auto st = small_book();
  for (int i = 0; i < 5000; ++i) {
    const Side side = bernoulli(rng, 0.5) ? Side::Bid : Side::Ask;
    const int level = static_cast<int>(uniform_int(rng, 1, 3));
    const std::int64_t q = st.queue(side, level);
    OrderEvent e;
    if (q == 0 || bernoulli(rng, 0.6)) {
      e = ev(EventType::Limit, side, level, uniform_int(rng, 1, 6), q);
    } else if (st.best_level(side) == level && bernoulli(rng, 0.3)) {
      e = ev(EventType::Market, side, level, uniform_int(rng, 1, q), q);
    } else {
      e = ev(EventType::Cancel, side, level, uniform_int(rng, 1, q), q);
    }
    auto res = apply_event(std::move(st), e);
    st = std::move(res.state);
    for (int l = 1; l <= 3; ++l) {
      CHECK(st.queue(Side::Bid, l) >= 0);
      CHECK(st.queue(Side::Ask, l) >= 0);
    }
  }
}

TEST_CASE("reference price geometry") {
  auto st = small_book();
  CHECK(st.ref_price() == Catch::Approx(100.5 * 0.01).epsilon(1e-12));
  CHECK(st.price_at(Side::Ask, 1) == Catch::Approx(0.01 * 101.0));
  CHECK(st.price_at(Side::Bid, 1) == Catch::Approx(0.01 * 100.0));
  CHECK(st.mid_price() == Catch::Approx(st.ref_price()));
  st.asks[0] = 0;  // spread widens by one tick
  CHECK(st.mid_price() == Catch::Approx(0.01 * 101.0));
}

namespace {

RefPricePolicy unit_refill_policy(double theta, int depth) {
  RefPricePolicy policy;
  policy.theta = theta;
  DiscretePmf pmf;
  pmf.support = {4};
  pmf.probs = {1.0};
  policy.refill_source.assign(static_cast<std::size_t>(depth), pmf);
  return policy;
}

}  // namespace

TEST_CASE("theta zero never moves the price") {
  SplitMix64 rng(11);
  auto st = small_book();
  st.asks[0] = 0;
  for (int i = 0; i < 100; ++i) {
    auto res = transition_ref_price(st, unit_refill_policy(0.0, 3), Side::Ask,
                                    rng);
    CHECK_FALSE(res.moved);
    CHECK(res.state.ref_half_ticks == st.ref_half_ticks);
    CHECK(res.state.asks == st.asks);
  }
}

TEST_CASE("theta one always moves the price one tick toward the depletion") {
  SplitMix64 rng(13);
  auto st = small_book();
  st.asks[0] = 0;
  auto res =
      transition_ref_price(st, unit_refill_policy(1.0, 3), Side::Ask, rng);
  REQUIRE(res.moved);
  CHECK(res.state.ref_half_ticks == st.ref_half_ticks + 2);
  // Ask queues shift inward, the deepest level is the refill draw.
  CHECK(res.state.asks[0] == 6);
  CHECK(res.state.asks[1] == 8);
  CHECK(res.state.asks[2] == 4);
  // The vacated best-ask price becomes an empty best-bid slot.
  CHECK(res.state.bids[0] == 0);
  CHECK(res.state.bids[1] == 5);
  CHECK(res.state.bids[2] == 7);
}

TEST_CASE("bid-side depletion mirrors the ask-side move") {
  SplitMix64 rng(17);
  auto st = small_book();
  st.bids[0] = 0;
  auto res =
      transition_ref_price(st, unit_refill_policy(1.0, 3), Side::Bid, rng);
  REQUIRE(res.moved);
  CHECK(res.state.ref_half_ticks == st.ref_half_ticks - 2);
  CHECK(res.state.bids[0] == 7);
  CHECK(res.state.bids[1] == 9);
  CHECK(res.state.bids[2] == 4);
  CHECK(res.state.asks[0] == 0);  // vacated best-bid price, now an ask slot
  CHECK(res.state.asks[1] == 5);
  CHECK(res.state.asks[2] == 6);
}

TEST_CASE("re-indexing preserves surviving queue contents") {
  SplitMix64 rng(19);
  auto st = small_book();
  st.asks = {0, 11, 13};
  st.bids = {3, 5, 7};
  auto res =
      transition_ref_price(st, unit_refill_policy(1.0, 3), Side::Ask, rng);
  REQUIRE(res.moved);
  // Every queue alive at both old and new indexings keeps its size.
  CHECK(res.state.asks[0] == 11);
  CHECK(res.state.asks[1] == 13);
  CHECK(res.state.bids[1] == 3);
  CHECK(res.state.bids[2] == 5);
}

TEST_CASE("move frequency converges to theta") {
  SplitMix64 rng(23);
  const int n = 10000;
  int moved = 0;
  auto policy = unit_refill_policy(0.7, 3);
  for (int i = 0; i < n; ++i) {
    auto st = small_book();
    st.asks[0] = 0;
    auto res = transition_ref_price(std::move(st), policy, Side::Ask, rng);
    if (res.moved) ++moved;
  }
  const double freq = static_cast<double>(moved) / n;
  // Binomial 3-sigma band around 0.7 at n = 1e4 is about +-0.014.
  CHECK(std::abs(freq - 0.7) < 0.02);
}

TEST_CASE("queue quantization in AES units") {
  CHECK(quantize_queue(0, 5.92) == 0);
  CHECK(quantize_queue(30, 5.92) == 6);
  CHECK(quantize_queue(5, 5.0) == 1);
  CHECK(quantize_queue(1, 5.92) == 1);
  CHECK_THROWS_AS(quantize_queue(3, 0.0), DataError);
  CHECK_THROWS_AS(quantize_queue(-1, 1.0), DataError);
}
