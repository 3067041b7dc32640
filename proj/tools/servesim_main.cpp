#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "scenario_config.hpp"
#include "servesim/simulator.hpp"
#include "servesim/workload.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace servesim;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct SummaryStats {
  double mean_violation_ratio = 0.0;
  double max_violation_ratio = 0.0;
  double mean_util_cpu = 0.0;
  double mean_util_gpu = 0.0;
  double mean_util_accel = 0.0;
};

SummaryStats interval_stats(const MetricsTrace& trace) {
  SummaryStats s;
  if (trace.intervals.empty()) return s;
  for (const MetricsInterval& iv : trace.intervals) {
    s.mean_violation_ratio += iv.violation_ratio;
    s.max_violation_ratio = std::max(s.max_violation_ratio, iv.violation_ratio);
    s.mean_util_cpu += iv.util_cpu;
    s.mean_util_gpu += iv.util_gpu;
    s.mean_util_accel += iv.util_accel;
  }
  double n = static_cast<double>(trace.intervals.size());
  s.mean_violation_ratio /= n;
  s.mean_util_cpu /= n;
  s.mean_util_gpu /= n;
  s.mean_util_accel /= n;
  return s;
}

json summary_json(const Scenario& sc, const MetricsTrace& trace) {
  SummaryStats s = interval_stats(trace);
  json out;
  out["mode"] = to_string(sc.mode);
  out["seed"] = sc.seed;
  out["horizon_s"] = sc.horizon_s;
  out["total_arrived"] = trace.total_arrived;
  out["total_served"] = trace.total_served;
  out["total_violations"] = trace.total_violations;
  out["total_rejected"] = trace.total_rejected;
  out["violation_ratio"] = trace.violation_ratio();
  out["total_cost"] = trace.total_cost;
  out["mean_violation_ratio"] = s.mean_violation_ratio;
  out["max_violation_ratio"] = s.max_violation_ratio;
  out["mean_util_cpu"] = s.mean_util_cpu;
  out["mean_util_gpu"] = s.mean_util_gpu;
  out["mean_util_accel"] = s.mean_util_accel;
  out["offline_processed"] = trace.offline_processed;
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const std::string& line : lines) out << line << "\n";
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
  json cfg = config::load_json_file(config_path);
  if (seed_override) cfg["seed"] = *seed_override;
  Scenario sc = config::scenario_from_json(cfg, config::dir_of(config_path));

  MetricsTrace trace = run(sc);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "metrics.txt");
    write_metrics(trace, out);
  }
  write_lines(fs::path(out_dir) / "scaling_log.txt", trace.scaling_log);
  write_lines(fs::path(out_dir) / "plan_log.txt", trace.plan_log);

  json summary = summary_json(sc, trace);
  if (cfg.contains("baseline_summary")) {
    std::string base_path = cfg.at("baseline_summary").get<std::string>();
    if (!base_path.empty() && base_path.front() != '/') {
      base_path = config::dir_of(config_path) + "/" + base_path;
    }
    json baseline = config::load_json_file(base_path);
    double base_cost = baseline.at("total_cost").get<double>();
    summary["cost_ratio_vs_baseline"] =
        base_cost == 0.0 ? 0.0 : trace.total_cost / base_cost;
  }
  {
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << summary.dump(2) << "\n";
  }
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

struct LoadedRun {
  json summary;
  std::vector<MetricsInterval> intervals;
};

LoadedRun load_run_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("run directory not found: " + dir);
  }
  LoadedRun run;
  run.summary = config::load_json_file(dir + "/summary.json");
  std::ifstream metrics(dir + "/metrics.txt");
  if (!metrics) throw std::runtime_error("missing metrics.txt in " + dir);
  std::string header;
  std::getline(metrics, header);
  MetricsInterval iv;
  while (metrics >> iv.time_s >> iv.arrived >> iv.served >> iv.violations >>
         iv.violation_ratio >> iv.cost_cumulative >> iv.util_cpu >>
         iv.util_gpu >> iv.util_accel >> iv.active_workers) {
    run.intervals.push_back(iv);
  }
  return run;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                const std::string& out_path) {
  LoadedRun a = load_run_dir(dir_a);
  LoadedRun b = load_run_dir(dir_b);
  double horizon_a = a.summary.at("horizon_s").get<double>();
  double horizon_b = b.summary.at("horizon_s").get<double>();
  if (horizon_a != horizon_b || a.intervals.size() != b.intervals.size()) {
    throw std::runtime_error("mismatched horizons: " + std::to_string(horizon_a) +
                             " vs " + std::to_string(horizon_b));
  }

  auto ratio = [](double x, double y) { return y == 0.0 ? 0.0 : x / y; };
  json report;
  report["run_a"] = dir_a;
  report["run_b"] = dir_b;
  report["cost_ratio"] = ratio(a.summary.at("total_cost").get<double>(),
                               b.summary.at("total_cost").get<double>());
  report["violation_ratio_delta"] =
      a.summary.at("violation_ratio").get<double>() -
      b.summary.at("violation_ratio").get<double>();
  report["throughput_ratio"] =
      ratio(static_cast<double>(a.summary.at("total_served").get<long>()),
            static_cast<double>(b.summary.at("total_served").get<long>()));
  json intervals = json::array();
  for (std::size_t i = 0; i < a.intervals.size(); ++i) {
    json iv;
    iv["time_s"] = a.intervals[i].time_s;
    iv["cost_ratio"] =
        ratio(a.intervals[i].cost_cumulative, b.intervals[i].cost_cumulative);
    iv["violation_ratio_delta"] =
        a.intervals[i].violation_ratio - b.intervals[i].violation_ratio;
    iv["throughput_ratio"] = ratio(static_cast<double>(a.intervals[i].served),
                                   static_cast<double>(b.intervals[i].served));
    intervals.push_back(std::move(iv));
  }
  report["intervals"] = std::move(intervals);

  std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << text;
  }
  std::cout << text;
  return kOk;
}

int cmd_gen_trace(const std::string& config_path, const std::string& out_path,
                  std::optional<std::uint64_t> seed_override) {
  json cfg = config::load_json_file(config_path);
  std::uint64_t seed = seed_override.value_or(cfg.value("seed", 0));
  const json& workload = cfg.contains("workload") ? cfg.at("workload") : cfg;
  ArrivalTrace trace =
      config::workload_from_json(workload, config::dir_of(config_path), seed);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open output: " + out_path);
  save_trace(trace, out);
  std::cout << "wrote " << trace.size() << " arrivals to " << out_path << "\n";
  return kOk;
}

int cmd_gen_catalog(const std::string& config_path, const std::string& out_path) {
  json cfg = config::load_json_file(config_path);
  const json& cat = cfg.contains("catalog") ? cfg.at("catalog") : cfg;
  Catalog catalog = config::catalog_from_json(cat, config::dir_of(config_path));
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open output: " + out_path);
  save_profiles(catalog, out);
  std::cout << "wrote " << catalog.variants.size() << " variants to " << out_path
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference-serving scheduling experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path, run_a, run_b;
  std::optional<std::uint64_t> seed;

  CLI::App* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("--config", config_path, "Scenario config (JSON)")
      ->required();
  run_cmd->add_option("--out", out_path, "Output directory")->required();
  run_cmd->add_option("--seed", seed, "Override the config seed");

  CLI::App* cmp_cmd = app.add_subcommand("compare", "Compare two run outputs");
  cmp_cmd->add_option("run_a", run_a, "First run directory")->required();
  cmp_cmd->add_option("run_b", run_b, "Second run directory")->required();
  cmp_cmd->add_option("--out", out_path, "Report file (default stdout only)");

  CLI::App* trace_cmd = app.add_subcommand("gen-trace", "Generate an arrival trace");
  trace_cmd->add_option("--config", config_path, "Workload config (JSON)")
      ->required();
  trace_cmd->add_option("--out", out_path, "Output trace file")->required();
  trace_cmd->add_option("--seed", seed, "Override the config seed");

  CLI::App* cat_cmd = app.add_subcommand("gen-catalog", "Generate a profile file");
  cat_cmd->add_option("--config", config_path, "Catalog config (JSON)")
      ->required();
  cat_cmd->add_option("--out", out_path, "Output profile file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, out_path, seed);
    if (cmp_cmd->parsed()) return cmd_compare(run_a, run_b, out_path);
    if (trace_cmd->parsed()) return cmd_gen_trace(config_path, out_path, seed);
    if (cat_cmd->parsed()) return cmd_gen_catalog(config_path, out_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
