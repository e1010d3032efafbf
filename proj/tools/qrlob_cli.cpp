// Command-line front end: ingest raw book/trade updates into order flow,
// calibrate the intensity models, simulate markets and score them against a
// reference log. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical
// failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "qrlob/engine.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/flow.hpp"
#include "qrlob/model.hpp"
#include "qrlob/model_io.hpp"
#include "qrlob/report.hpp"
#include "qrlob/version.hpp"

namespace {

using namespace qrlob;

struct SessionWindow {
  double open = 9 * 3600.0;
  double close = 18 * 3600.0;
};

std::vector<DayFlow> load_days(const std::vector<std::string>& paths,
                               const SessionWindow& win,
                               bool& has_book_context) {
  std::vector<DayFlow> days;
  has_book_context = true;
  for (const auto& path : paths) {
    const auto log = read_event_log_file(path);
    has_book_context = has_book_context && log.has_book_context;
    auto file_days = sessionize(log.records, win.open, win.close);
    days.insert(days.end(), file_days.begin(), file_days.end());
  }
  if (days.empty()) throw DataError("no in-session events in the inputs");
  return days;
}

void write_manifest(const std::string& out_path, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::uint64_t>& seeds,
                    const std::string& config_text) {
  nlohmann::json j;
  j["schema"] = "qrlob-manifest/1";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seeds"] = seeds;
  std::ostringstream digest_src;
  digest_src << command << '|' << config_text;
  for (const auto& s : inputs) digest_src << '|' << s;
  for (const auto& s : outputs) digest_src << '|' << s;
  for (auto s : seeds) digest_src << '|' << s;
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0')
      << fnv1a_digest(digest_src.str());
  j["config_digest"] = hex.str();
  j["config"] = config_text;
  std::ofstream os(out_path);
  if (!os) throw DataError("cannot write manifest '" + out_path + "'");
  os << j.dump(2) << '\n';
}

void print_level_stats(std::span<const FlowSegment> segments, int depth) {
  std::cout << std::left << std::setw(7) << "level" << std::right
            << std::setw(10) << "#L" << std::setw(10) << "#C" << std::setw(10)
            << "#M" << std::setw(10) << "AES" << std::setw(12) << "AIT(ms)"
            << '\n';
  for (int level = 1; level <= depth; ++level) {
    const auto st = level_stats(segments, level);
    std::cout << std::left << std::setw(7) << level << std::right
              << std::setw(10) << st.n_limit << std::setw(10) << st.n_cancel
              << std::setw(10) << st.n_market << std::setw(10) << std::fixed
              << std::setprecision(2) << st.aes << std::setw(12)
              << std::setprecision(1) << st.ait_ms << '\n';
    std::cout.unsetf(std::ios::fixed);
  }
}

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& out,
               double tick, int depth, const SessionWindow& win,
               const std::string& format) {
  ReconstructOptions opt;
  opt.tick_size = tick;
  opt.depth = depth;
  EventLogData merged;
  merged.meta.tick_size = tick;
  merged.meta.depth = depth;
  std::int64_t clipped = 0;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open '" + path + "'");
    const auto updates = parse_stream(is, path);
    auto res = reconstruct_flow(updates, opt);
    clipped += res.clipped_events;
    if (!merged.init_state) {
      merged.init_state = res.log.init_state;
      merged.meta.t0_ns = res.log.meta.t0_ns;
    }
    merged.records.insert(merged.records.end(), res.log.records.begin(),
                          res.log.records.end());
  }
  const auto days = sessionize(merged.records, win.open, win.close);
  if (format == "log") {
    EventLogData out_log = merged;
    out_log.records.clear();
    for (const auto& day : days)
      out_log.records.insert(out_log.records.end(), day.records.begin(),
                             day.records.end());
    write_event_log_file(out, out_log);
  } else {
    std::vector<OrderEvent> events;
    for (const auto& day : days) {
      const auto segments = segment_by_ref_price(day.records);
      auto flat = flatten_segments(segments);
      events.insert(events.end(), flat.begin(), flat.end());
    }
    std::ofstream os(out);
    if (!os) throw DataError("cannot open '" + out + "' for writing");
    write_flow_file(os, events);
  }
  std::int64_t n_events = 0;
  for (const auto& day : days) n_events += std::ssize(day.records);
  std::cout << "ingested " << n_events << " events across " << days.size()
            << " session(s)";
  if (clipped > 0) std::cout << "; clipped " << clipped << " oversized deltas";
  std::cout << '\n';
  return 0;
}

int cmd_calibrate(const std::vector<std::string>& inputs,
                  const std::string& variant_name, int levels, double tick,
                  const std::string& out, double theta, bool theta_from_moves,
                  int n_max, int min_obs, double aes_override,
                  const SessionWindow& win, const std::string& config_text) {
  const Variant variant = variant_from_string(variant_name);
  bool has_book_context = true;
  const auto days = load_days(inputs, win, has_book_context);
  CalibrateModelOptions opt;
  opt.estimation.n_max = n_max;
  opt.estimation.min_obs = min_obs;
  opt.estimation.aes_override = aes_override;
  opt.theta = theta;
  opt.calibrate_theta_from_moves = theta_from_moves && has_book_context;
  if (theta_from_moves && !has_book_context)
    std::cerr << "note: theta calibration needs reference prices; plain flow "
                 "files carry none, keeping theta = "
              << theta << '\n';
  const auto model =
      calibrate_model(days, variant, levels, tick, opt, has_book_context);
  write_manifest(out + ".manifest.json", "calibrate", inputs, {out}, {},
                 config_text);
  save_model(out, model);
  const auto segments = collect_segments(days, has_book_context);
  print_level_stats(segments, levels);
  std::cout << "variant " << to_string(variant) << ", theta " << model.theta
            << ", model written to " << out << '\n';
  return 0;
}

int cmd_simulate(const std::string& model_path, double horizon,
                 std::uint64_t seed, const std::string& out,
                 const std::string& config_text) {
  const auto model = load_model(model_path);
  SimConfig config;
  config.horizon = horizon;
  config.seed = seed;
  write_manifest(out + ".manifest.json", "simulate", {model_path}, {out},
                 {seed}, config_text);
  const auto result = run_any(model, config);
  write_event_log_file(out, result.log);
  const auto s = summarize(result.log);
  std::cout << "simulated " << s.events << " events ("
            << s.by_type[static_cast<int>(EventType::Limit)] << " L, "
            << s.by_type[static_cast<int>(EventType::Cancel)] << " C, "
            << s.by_type[static_cast<int>(EventType::Market)] << " M, "
            << s.by_type[static_cast<int>(EventType::CancelAll)] << " CA, "
            << s.by_type[static_cast<int>(EventType::MarketAll)] << " MA), "
            << s.ref_moves << " price moves over " << horizon << " s (seed "
            << seed << ")";
  if (result.clipped > 0) std::cout << "; clipped " << result.clipped;
  if (result.skipped > 0) std::cout << "; skipped " << result.skipped;
  std::cout << '\n';
  return 0;
}

int cmd_report(const std::string& sim_path, const std::string& real_path,
               const std::string& out_dir, const std::string& config_text) {
  const auto sim = read_event_log_file(sim_path);
  const auto real = read_event_log_file(real_path);
  write_manifest(out_dir + ".manifest.json", "report", {sim_path, real_path},
                 {out_dir}, {}, config_text);
  const auto report = build_report(sim, real);
  write_report_files(out_dir, report);
  std::cout << report_to_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Queue-reactive limit order book calibration and simulation"};
  app.set_version_flag("--version", qrlob::kToolVersion);
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.require_subcommand(1);

  SessionWindow win;
  double tick = 0.01;
  int depth = 5;

  app.add_option("--tick", tick, "Tick size")->capture_default_str();
  app.add_option("--levels", depth, "Book depth per side")
      ->capture_default_str();
  app.add_option("--open", win.open, "Session open, seconds of day")
      ->capture_default_str();
  app.add_option("--close", win.close, "Session close, seconds of day")
      ->capture_default_str();

  auto* ingest = app.add_subcommand(
      "ingest", "Reconstruct order flow from raw book/trade updates");
  std::vector<std::string> ingest_inputs;
  std::string ingest_out = "flow.csv";
  std::string ingest_format = "flow";
  ingest->add_option("inputs", ingest_inputs, "Raw update CSV files")
      ->required();
  ingest->add_option("--out", ingest_out, "Output flow file")
      ->capture_default_str();
  ingest->add_option("--format", ingest_format, "flow (7 columns) or log")
      ->check(CLI::IsMember({"flow", "log"}))
      ->capture_default_str();

  auto* calibrate = app.add_subcommand(
      "calibrate", "Estimate model intensities from order flow");
  std::vector<std::string> cal_inputs;
  std::string cal_variant = "qr";
  std::string cal_out = "model.json";
  double cal_theta = 0.7;
  bool cal_theta_from_moves = false;
  int cal_n_max = 60;
  int cal_min_obs = 50;
  double cal_aes = 0.0;
  calibrate->add_option("inputs", cal_inputs, "Flow or event-log files")
      ->required();
  const auto variant_check = CLI::IsMember(
      {"qru", "qr", "ftqr", "saqr", "hawkes_u", "hawkes_s"}, CLI::ignore_case);
  calibrate
      ->add_option("--variant", cal_variant,
                   "qru | qr | ftqr | saqr | hawkes_u | hawkes_s")
      ->check(variant_check)
      ->capture_default_str();
  calibrate->add_option("--out", cal_out, "Model file")->capture_default_str();
  calibrate->add_option("--theta", cal_theta, "Price-move probability")
      ->capture_default_str();
  calibrate->add_flag("--calibrate-theta", cal_theta_from_moves,
                      "Calibrate theta from the observed move path");
  calibrate->add_option("--n-max", cal_n_max, "Queue bucket cap (AES units)")
      ->capture_default_str();
  calibrate->add_option("--min-obs", cal_min_obs, "Minimum events per bucket")
      ->capture_default_str();
  calibrate->add_option("--aes", cal_aes,
                        "Override the quantization unit (lots)");

  auto* simulate = app.add_subcommand("simulate", "Run a simulated market");
  std::string sim_model;
  double sim_horizon = 9 * 3600.0;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "sim_log.csv";
  simulate->add_option("model", sim_model, "Model JSON file")->required();
  simulate->add_option("--horizon", sim_horizon, "Seconds to simulate")
      ->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Random seed")
      ->capture_default_str();
  simulate->add_option("--out", sim_out, "Output event log")
      ->capture_default_str();

  auto* report = app.add_subcommand(
      "report", "Score a simulated log against a reference log");
  std::string rep_sim, rep_real, rep_out = "report";
  report->add_option("sim", rep_sim, "Simulated event log")->required();
  report->add_option("real", rep_real, "Reference event log")->required();
  report->add_option("--out", rep_out, "Output directory")
      ->capture_default_str();

  auto* pipeline = app.add_subcommand(
      "pipeline", "Ingest, calibrate, simulate and report in one pass");
  std::vector<std::string> pipe_inputs;
  std::string pipe_variant = "saqr";
  std::string pipe_dir = "pipeline_out";
  double pipe_horizon = 9 * 3600.0;
  std::uint64_t pipe_seed = 1;
  double pipe_theta = 0.7;
  pipeline->add_option("inputs", pipe_inputs, "Raw update CSV files")
      ->required();
  pipeline->add_option("--variant", pipe_variant, "Model variant")
      ->check(variant_check)
      ->capture_default_str();
  pipeline->add_option("--dir", pipe_dir, "Output directory")
      ->capture_default_str();
  pipeline->add_option("--horizon", pipe_horizon, "Seconds to simulate")
      ->capture_default_str();
  pipeline->add_option("--seed", pipe_seed, "Random seed")
      ->capture_default_str();
  pipeline->add_option("--theta", pipe_theta, "Price-move probability")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or the help text
    return code == 0 ? 0 : 1;      // usage errors exit 1
  }

  const std::string config_text = app.config_to_str(true, false);
  try {
    if (ingest->parsed())
      return cmd_ingest(ingest_inputs, ingest_out, tick, depth, win,
                        ingest_format);
    if (calibrate->parsed())
      return cmd_calibrate(cal_inputs, cal_variant, depth, tick, cal_out,
                           cal_theta, cal_theta_from_moves, cal_n_max,
                           cal_min_obs, cal_aes, win, config_text);
    if (simulate->parsed())
      return cmd_simulate(sim_model, sim_horizon, sim_seed, sim_out,
                          config_text);
    if (report->parsed())
      return cmd_report(rep_sim, rep_real, rep_out, config_text);
    if (pipeline->parsed()) {
      namespace fs = std::filesystem;
      fs::create_directories(pipe_dir);
      const std::string flow = pipe_dir + "/real_log.csv";
      const std::string model = pipe_dir + "/model.json";
      const std::string sim_log = pipe_dir + "/sim_log.csv";
      int rc = cmd_ingest(pipe_inputs, flow, tick, depth, win, "log");
      if (rc != 0) return rc;
      rc = cmd_calibrate({flow}, pipe_variant, depth, tick, model, pipe_theta,
                         false, 60, 50, 0.0, win, config_text);
      if (rc != 0) return rc;
      rc = cmd_simulate(model, pipe_horizon, pipe_seed, sim_log, config_text);
      if (rc != 0) return rc;
      return cmd_report(sim_log, flow, pipe_dir + "/report", config_text);
    }
  } catch (const qrlob::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const qrlob::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
