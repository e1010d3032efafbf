#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "qrlob/calibrate.hpp"
#include "qrlob/model_io.hpp"
#include "qrlob/rng.hpp"

using namespace qrlob;

namespace {

QrModel random_model(std::uint64_t seed, Variant variant) {
  SplitMix64 rng(seed);
  QrModel model;
  model.variant = variant;
  model.depth = 2;
  model.tick_size = 0.01;
  model.theta = uniform01(rng);
  const int n_max = 4;
  const int size_cap = 3;
  for (int level = 1; level <= model.depth; ++level) {
    LevelTable t;
    t.level = level;
    t.aes = 1.0 + 5.0 * uniform01(rng);
    t.n_max = n_max;
    t.size_cap = size_cap;
    const std::size_t nb = n_max + 1;
    t.n_events.assign(nb, 0);
    t.exposure.assign(nb, 0.0);
    t.total_rate.assign(nb, 0.0);
    t.low_confidence.assign(nb, false);
    t.fill_source.assign(nb, -1);
    for (auto& v : t.n_by_type) v.assign(nb, 0);
    for (auto& v : t.rate) v.assign(nb, 0.0);
    if (variant == Variant::SAQR)
      for (auto& m : t.n_by_type_size)
        m.assign(size_cap, std::vector<std::int64_t>(nb, 0));
    if (variant == Variant::SAQR)
      for (auto& m : t.rate_by_size)
        m.assign(size_cap, std::vector<double>(nb, 0.0));
    for (std::size_t n = 0; n < nb; ++n) {
      t.n_events[n] = uniform_int(rng, 0, 1000);
      t.exposure[n] = 1000.0 * uniform01(rng);
      for (int e = 0; e < kNumEventTypes; ++e) {
        t.n_by_type[e][n] = uniform_int(rng, 0, 300);
        t.rate[e][n] = uniform01(rng) * 3.0;
        t.total_rate[n] += t.rate[e][n];
        if (variant == Variant::SAQR)
          for (int s = 0; s < size_cap; ++s) {
            t.n_by_type_size[e][static_cast<std::size_t>(s)][n] =
                uniform_int(rng, 0, 50);
            t.rate_by_size[e][static_cast<std::size_t>(s)][n] =
                uniform01(rng);
          }
      }
      t.low_confidence[n] = bernoulli(rng, 0.3);
      if (t.low_confidence[n]) t.fill_source[n] = static_cast<int>(n) ^ 1;
    }
    model.levels.push_back(std::move(t));
  }
  for (int level = 0; level < model.depth; ++level) {
    DiscretePmf sizes;
    for (std::int64_t s = 1; s <= 5; ++s) {
      sizes.support.push_back(s);
      sizes.probs.push_back(uniform01(rng));
    }
    double total = 0.0;
    for (double p : sizes.probs) total += p;
    for (auto& p : sizes.probs) p /= total;
    model.size_dists.push_back(sizes);
    model.queue_dists.push_back(sizes);
  }
  if (is_hawkes(variant)) {
    model.levels.clear();
    std::vector<double> mu(6), alpha(36), beta(36);
    for (auto& v : mu) v = 0.1 + uniform01(rng);
    for (auto& v : alpha) v = uniform01(rng) * 0.1;
    for (auto& v : beta) v = 1.0 + uniform01(rng);
    model.hawkes = make_hawkes(6, mu, alpha, beta);
    model.aes_by_level = {3.7, 4.2};
  }
  return model;
}

}  // namespace

TEST_CASE("model serialization round-trips bit-exactly") {
  for (const Variant variant :
       {Variant::QR, Variant::SAQR, Variant::HawkesU}) {
    const auto model = random_model(7 + static_cast<std::uint64_t>(variant),
                                    variant);
    const auto j = model_to_json(model);
    const std::string text = j.dump();
    const auto parsed = model_from_json(nlohmann::json::parse(text));
    // Re-serialization must reproduce the identical byte stream.
    CHECK(model_to_json(parsed).dump() == text);
    CHECK(parsed.variant == model.variant);
    CHECK(parsed.theta == model.theta);  // bitwise
    for (std::size_t l = 0; l < model.levels.size(); ++l) {
      CHECK(parsed.levels[l].aes == model.levels[l].aes);
      for (int e = 0; e < kNumEventTypes; ++e)
        for (std::size_t n = 0; n < model.levels[l].rate[e].size(); ++n)
          CHECK(std::memcmp(&parsed.levels[l].rate[e][n],
                            &model.levels[l].rate[e][n], sizeof(double)) == 0);
    }
    if (model.hawkes) {
      REQUIRE(parsed.hawkes.has_value());
      for (std::size_t ij = 0; ij < 36; ++ij)
        CHECK(parsed.hawkes->alpha[ij] == model.hawkes->alpha[ij]);
    }
  }
}

TEST_CASE("model files round-trip through disk") {
  const auto model = random_model(99, Variant::SAQR);
  const std::string path = "roundtrip_model_test.json";
  save_model(path, model);
  const auto loaded = load_model(path);
  CHECK(model_to_json(loaded).dump() == model_to_json(model).dump());
  std::remove(path.c_str());
}

TEST_CASE("foreign schemas are rejected") {
  nlohmann::json j;
  j["schema"] = "something-else/9";
  CHECK_THROWS_AS(model_from_json(j), DataError);
  CHECK_THROWS_AS(load_model("does_not_exist.json"), DataError);
}

TEST_CASE("digest is stable and input-sensitive") {
  const auto a = fnv1a_digest("calibrate|qr|flow.csv");
  CHECK(a == fnv1a_digest("calibrate|qr|flow.csv"));
  CHECK(a != fnv1a_digest("calibrate|qr|flow2.csv"));
}
