#pragma once

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <string>

#include "qrlob/errors.hpp"
#include "qrlob/model.hpp"

namespace qrlob {

inline constexpr const char* kModelSchema = "qrlob-model/1";

namespace detail {

inline nlohmann::json pmf_to_json(const DiscretePmf& pmf) {
  return nlohmann::json{{"support", pmf.support}, {"probs", pmf.probs}};
}

inline DiscretePmf pmf_from_json(const nlohmann::json& j) {
  DiscretePmf pmf;
  pmf.support = j.at("support").get<std::vector<std::int64_t>>();
  pmf.probs = j.at("probs").get<std::vector<double>>();
  if (pmf.support.size() != pmf.probs.size())
    throw DataError("pmf support and probs differ in length");
  return pmf;
}

inline const char* type_key(int e) {
  switch (static_cast<EventType>(e)) {
    case EventType::Limit: return "L";
    case EventType::Cancel: return "C";
    case EventType::Market: return "M";
    case EventType::CancelAll: return "CA";
    case EventType::MarketAll: return "MA";
  }
  return "?";
}

inline nlohmann::json level_to_json(const LevelTable& t, bool with_sizes) {
  nlohmann::json j;
  j["level"] = t.level;
  j["aes"] = t.aes;
  j["n_max"] = t.n_max;
  j["size_cap"] = t.size_cap;
  j["n_events"] = t.n_events;
  j["exposure"] = t.exposure;
  j["total_rate"] = t.total_rate;
  j["low_confidence"] = std::vector<int>(t.low_confidence.begin(),
                                         t.low_confidence.end());
  j["fill_source"] = t.fill_source;
  for (int e = 0; e < kNumEventTypes; ++e) {
    j["n_by_type"][type_key(e)] = t.n_by_type[e];
    j["rate"][type_key(e)] = t.rate[e];
    if (with_sizes) {
      j["n_by_type_size"][type_key(e)] = t.n_by_type_size[e];
      j["rate_by_size"][type_key(e)] = t.rate_by_size[e];
    }
  }
  return j;
}

inline LevelTable level_from_json(const nlohmann::json& j) {
  LevelTable t;
  t.level = j.at("level").get<int>();
  t.aes = j.at("aes").get<double>();
  t.n_max = j.at("n_max").get<int>();
  t.size_cap = j.at("size_cap").get<int>();
  t.n_events = j.at("n_events").get<std::vector<std::int64_t>>();
  t.exposure = j.at("exposure").get<std::vector<double>>();
  t.total_rate = j.at("total_rate").get<std::vector<double>>();
  const auto lc = j.at("low_confidence").get<std::vector<int>>();
  t.low_confidence.assign(lc.begin(), lc.end());
  t.fill_source = j.at("fill_source").get<std::vector<int>>();
  for (int e = 0; e < kNumEventTypes; ++e) {
    t.n_by_type[e] =
        j.at("n_by_type").at(type_key(e)).get<std::vector<std::int64_t>>();
    t.rate[e] = j.at("rate").at(type_key(e)).get<std::vector<double>>();
    if (j.contains("rate_by_size")) {
      t.n_by_type_size[e] = j.at("n_by_type_size")
                                .at(type_key(e))
                                .get<std::vector<std::vector<std::int64_t>>>();
      t.rate_by_size[e] = j.at("rate_by_size")
                              .at(type_key(e))
                              .get<std::vector<std::vector<double>>>();
    }
  }
  // The stored total must re-sum from the per-type rates.
  for (std::size_t n = 0; n < t.total_rate.size(); ++n) {
    double sum = 0.0;
    for (int e = 0; e < kNumEventTypes; ++e) sum += t.rate[e][n];
    if (std::abs(sum - t.total_rate[n]) >
        1e-9 * std::max(1.0, std::abs(t.total_rate[n])))
      throw DataError("level " + std::to_string(t.level) + " bucket " +
                      std::to_string(n) +
                      ": total rate does not match the per-type sum");
  }
  return t;
}

}  // namespace detail

inline nlohmann::json model_to_json(const QrModel& model) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["variant"] = std::string(to_string(model.variant));
  j["depth"] = model.depth;
  j["tick_size"] = model.tick_size;
  j["theta"] = model.theta;
  const bool with_sizes = model.variant == Variant::SAQR;
  j["levels"] = nlohmann::json::array();
  for (const auto& t : model.levels)
    j["levels"].push_back(detail::level_to_json(t, with_sizes));
  j["size_dists"] = nlohmann::json::array();
  for (const auto& d : model.size_dists)
    j["size_dists"].push_back(detail::pmf_to_json(d));
  j["queue_dists"] = nlohmann::json::array();
  for (const auto& d : model.queue_dists)
    j["queue_dists"].push_back(detail::pmf_to_json(d));
  if (!model.aes_by_level.empty()) j["aes_by_level"] = model.aes_by_level;
  if (model.hawkes) {
    const auto& h = *model.hawkes;
    j["hawkes"] = {{"dim", h.dim},
                   {"mu", h.mu},
                   {"alpha", h.alpha},
                   {"beta", h.beta}};
  }
  return j;
}

inline QrModel model_from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j.at("schema").get<std::string>() != kModelSchema)
    throw DataError("unrecognized model schema");
  QrModel model;
  model.variant = variant_from_string(j.at("variant").get<std::string>());
  model.depth = j.at("depth").get<int>();
  model.tick_size = j.at("tick_size").get<double>();
  model.theta = j.at("theta").get<double>();
  for (const auto& lj : j.at("levels"))
    model.levels.push_back(detail::level_from_json(lj));
  for (const auto& dj : j.at("size_dists"))
    model.size_dists.push_back(detail::pmf_from_json(dj));
  for (const auto& dj : j.at("queue_dists"))
    model.queue_dists.push_back(detail::pmf_from_json(dj));
  if (j.contains("aes_by_level"))
    model.aes_by_level = j.at("aes_by_level").get<std::vector<double>>();
  if (j.contains("hawkes")) {
    const auto& hj = j.at("hawkes");
    model.hawkes = make_hawkes(hj.at("dim").get<int>(),
                               hj.at("mu").get<std::vector<double>>(),
                               hj.at("alpha").get<std::vector<double>>(),
                               hj.at("beta").get<std::vector<double>>());
  }
  return model;
}

inline void save_model(const std::string& path, const QrModel& model) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << model_to_json(model).dump(2) << '\n';
}

inline QrModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

// FNV-1a over a canonical string; used for run-manifest digests.
inline std::uint64_t fnv1a_digest(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace qrlob
