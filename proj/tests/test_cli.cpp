#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "qrlob/engine.hpp"
#include "qrlob/model_io.hpp"

using namespace qrlob;
namespace fs = std::filesystem;

namespace {

const std::string kCli = QRLOB_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "qrlob_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// A reference event log produced in-process: a mid-size queue-reactive run.
fs::path reference_log() {
  static const fs::path path = [] {
    QrModel model;
    model.variant = Variant::QR;
    model.depth = 2;
    model.tick_size = 0.01;
    model.theta = 0.7;
    for (int level = 1; level <= 2; ++level) {
      LevelTable t;
      t.level = level;
      t.aes = 2.0;
      t.n_max = 6;
      t.size_cap = 4;
      const std::size_t nb = 7;
      t.n_events.assign(nb, 0);
      t.exposure.assign(nb, 0.0);
      for (auto& v : t.n_by_type) v.assign(nb, 0);
      for (auto& v : t.rate) v.assign(nb, 0.0);
      t.low_confidence.assign(nb, false);
      t.fill_source.assign(nb, -1);
      t.total_rate.assign(nb, 0.0);
      for (std::size_t n = 0; n < nb; ++n) {
        t.rate[static_cast<int>(EventType::Limit)][n] =
            1.2 - 0.1 * static_cast<double>(n);
        if (n > 0) {
          t.rate[static_cast<int>(EventType::Cancel)][n] =
              0.4 + 0.2 * static_cast<double>(n);
          t.rate[static_cast<int>(EventType::Market)][n] = 0.55;
        }
        for (int e = 0; e < kNumEventTypes; ++e)
          t.total_rate[n] += t.rate[e][n];
      }
      model.levels.push_back(std::move(t));
    }
    DiscretePmf sizes;
    sizes.support = {1, 2, 3, 5};
    sizes.probs = {0.45, 0.3, 0.15, 0.1};
    model.size_dists.assign(2, sizes);
    DiscretePmf queues;
    queues.support = {2, 4, 7};
    queues.probs = {0.4, 0.4, 0.2};
    model.queue_dists.assign(2, queues);
    SimConfig config;
    config.horizon = 3600.0;
    config.seed = 4242;
    const auto res = run(model, config);
    const auto p = workdir() / "reference_log.csv";
    write_event_log_file(p.string(), res.log);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("ingest reconstructs flow from raw updates") {
  std::ostringstream raw;
  raw << "ts_ns,kind,side,level,price,size,aggressor\n";
  const std::int64_t nine_am = 9ll * 3600 * 1'000'000'000;
  auto book_line = [&](std::int64_t ts, const char* side, int level,
                       double price, int size) {
    raw << nine_am + ts << ",book," << side << ',' << level << ',' << price
        << ',' << size << ",\n";
  };
  book_line(0, "bid", 1, 100.00, 10);
  book_line(0, "bid", 2, 99.99, 12);
  book_line(0, "ask", 1, 100.01, 9);
  book_line(0, "ask", 2, 100.02, 14);
  std::int64_t q = 9;
  for (int i = 1; i <= 50; ++i) {
    const std::int64_t ts = static_cast<std::int64_t>(i) * 1'000'000'000;
    if (i % 3 == 0) {
      raw << nine_am + ts - 1000 << ",trade,,," << 100.01 << ",2,buy\n";
      q -= 2;
    } else {
      q += 1;
    }
    book_line(ts, "ask", 1, 100.01, static_cast<int>(q));
  }
  const auto raw_path = workdir() / "raw.csv";
  std::ofstream(raw_path) << raw.str();
  const auto flow_path = workdir() / "flow.csv";
  const int rc = run_cli("--levels 2 ingest " + raw_path.string() + " --out " +
                         flow_path.string());
  CHECK(rc == 0);
  const auto text = slurp(flow_path);
  CHECK(text.rfind("ts_ns,eta,side,level,size,dt_ns,q_before", 0) == 0);
  CHECK(text.find(",M,ask,1,2,") != std::string::npos);
  CHECK(text.find(",L,ask,1,1,") != std::string::npos);
}

TEST_CASE("calibrate produces a loadable model and a manifest") {
  const auto model_path = workdir() / "model.json";
  const int rc =
      run_cli("--levels 2 calibrate " + reference_log().string() +
              " --variant qr --min-obs 10 --out " + model_path.string());
  REQUIRE(rc == 0);
  const auto model = load_model(model_path.string());
  CHECK(model.variant == Variant::QR);
  CHECK(model.levels.size() == 2);
  bool any_rate = false;
  for (const auto& t : model.levels)
    for (int e = 0; e < kNumEventTypes; ++e)
      for (double r : t.rate[e]) any_rate |= r > 0.0;
  CHECK(any_rate);
  const auto manifest =
      nlohmann::json::parse(slurp(model_path.string() + ".manifest.json"));
  CHECK(manifest.at("command") == "calibrate");
  CHECK(manifest.contains("config_digest"));
}

TEST_CASE("simulate is deterministic per seed and variant-checked") {
  const auto model_path = workdir() / "model.json";
  REQUIRE(fs::exists(model_path));
  const auto log_a = workdir() / "sim_a.csv";
  const auto log_b = workdir() / "sim_b.csv";
  CHECK(run_cli("simulate " + model_path.string() +
                " --horizon 300 --seed 7 --out " + log_a.string()) == 0);
  CHECK(run_cli("simulate " + model_path.string() +
                " --horizon 300 --seed 7 --out " + log_b.string()) == 0);
  CHECK(slurp(log_a) == slurp(log_b));
  const auto log_c = workdir() / "sim_c.csv";
  CHECK(run_cli("simulate " + model_path.string() +
                " --horizon 300 --seed 8 --out " + log_c.string()) == 0);
  CHECK(slurp(log_a) != slurp(log_c));
}

TEST_CASE("zero horizon writes an empty but well-formed log") {
  const auto model_path = workdir() / "model.json";
  const auto log_path = workdir() / "sim_empty.csv";
  CHECK(run_cli("simulate " + model_path.string() +
                " --horizon 0 --seed 1 --out " + log_path.string()) == 0);
  const auto parsed = read_event_log_file(log_path.string());
  CHECK(parsed.records.empty());
  CHECK(parsed.init_state.has_value());
}

TEST_CASE("self-report passes the comparative facts") {
  const auto sim_path = workdir() / "sim_a.csv";
  const auto out_dir = workdir() / "self_report";
  const int rc = run_cli("report " + sim_path.string() + " " +
                         sim_path.string() + " --out " + out_dir.string());
  CHECK(rc == 0);
  const auto j = nlohmann::json::parse(slurp(out_dir / "report.json"));
  REQUIRE(j.at("facts").size() == 12);
  for (const auto& f : j.at("facts")) {
    const int index = f.at("index").get<int>();
    const std::string verdict = f.at("verdict").get<std::string>();
    if (index == 1 || index == 4 || index == 7 || index == 12)
      CHECK(verdict == "pass");
  }
  CHECK(fs::exists(out_dir / "report.txt"));
  CHECK(fs::exists(out_dir / "signature_sim.csv"));
}

namespace {

// Venue-style raw updates synthesized from a simulated book path: one book
// row per affected level, trade rows just before consuming snapshots, and a
// full re-quote after each reference move.
fs::path raw_from_simulation() {
  const auto log = read_event_log_file(reference_log().string());
  REQUIRE(log.init_state.has_value());
  LobState st = *log.init_state;
  std::ostringstream raw;
  raw << "ts_ns,kind,side,level,price,size,aggressor\n";
  raw << std::setprecision(17);
  auto quote_all = [&](std::int64_t ts) {
    for (int side = 0; side < 2; ++side)
      for (int level = 1; level <= st.depth(); ++level) {
        const Side s = static_cast<Side>(side);
        raw << ts << ",book," << to_string(s) << ',' << level << ','
            << st.price_at(s, level) << ',' << st.queue(s, level) << ",\n";
      }
  };
  quote_all(log.meta.t0_ns);
  for (const auto& rec : log.records) {
    if (rec.ref_move) {
      st = shift_ref_price(std::move(st), rec.ev.side, rec.ev.size);
      quote_all(rec.ev.ts_ns);
      continue;
    }
    const Side s = rec.ev.side;
    const double price = st.price_at(s, rec.ev.level);
    if (is_trade(rec.ev.eta))
      raw << rec.ev.ts_ns - 500 << ",trade,,," << price << ',' << rec.ev.size
          << ",buy\n";
    auto applied = apply_event(std::move(st), rec.ev);
    st = std::move(applied.state);
    raw << rec.ev.ts_ns << ",book," << to_string(s) << ',' << rec.ev.level
        << ',' << price << ',' << st.queue(s, rec.ev.level) << ",\n";
  }
  const auto path = workdir() / "venue_raw.csv";
  std::ofstream(path) << raw.str();
  return path;
}

}  // namespace

TEST_CASE("pipeline runs ingest, calibrate, simulate and report end to end") {
  const auto raw = raw_from_simulation();
  const auto dir = workdir() / "pipeline";
  const int rc = run_cli("--levels 2 pipeline " + raw.string() +
                         " --variant qr --horizon 900 --seed 3 --dir " +
                         dir.string());
  CHECK(rc == 0);
  CHECK(fs::exists(dir / "real_log.csv"));
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "sim_log.csv"));
  const auto j = nlohmann::json::parse(slurp(dir / "report/report.json"));
  CHECK(j.at("facts").size() == 12);
  const auto model = load_model((dir / "model.json").string());
  CHECK(model.levels.size() == 2);
  // The ingested flow carries the simulated price moves, so the sessionized
  // reference path is segment-rich enough to exercise the estimators.
  const auto real = read_event_log_file((dir / "real_log.csv").string());
  int moves = 0;
  for (const auto& rec : real.records) moves += rec.ref_move ? 1 : 0;
  CHECK(moves > 0);
}

TEST_CASE("the best-quote excitation variant calibrates and simulates") {
  const auto model_path = workdir() / "hawkes_model.json";
  const int rc = run_cli("--levels 2 calibrate " + reference_log().string() +
                         " --variant hawkes_u --min-obs 10 --out " +
                         model_path.string());
  REQUIRE(rc == 0);
  const auto model = load_model(model_path.string());
  REQUIRE(model.hawkes.has_value());
  CHECK(model.hawkes->dim == 6);
  CHECK(model.levels.empty());
  CHECK(model.aes_by_level.size() == 2);
  const auto log_path = workdir() / "hawkes_sim.csv";
  CHECK(run_cli("simulate " + model_path.string() +
                " --horizon 120 --seed 5 --out " + log_path.string()) == 0);
  const auto log = read_event_log_file(log_path.string());
  CHECK(!log.records.empty());
  for (const auto& rec : log.records)
    if (!rec.ref_move) CHECK(rec.ev.level == 1);
}

TEST_CASE("usage and data errors use distinct exit codes") {
  CHECK(run_cli("calibrate missing.csv --variant nosuch --out x.json") == 1);
  CHECK(run_cli("calibrate missing_file.csv --variant qr --out x.json") == 2);
  CHECK(run_cli("report missing_a.csv missing_b.csv --out rep") == 2);
  CHECK(run_cli("simulate no_model.json") == 2);
  CHECK(run_cli("--help") == 0);
}
