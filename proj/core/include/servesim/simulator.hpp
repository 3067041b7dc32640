#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "servesim/catalog.hpp"
#include "servesim/workload.hpp"

namespace servesim {

enum class PolicyMode { Infaas, StaticCpu, StaticGpu, HorizontalOnly };

const char* to_string(PolicyMode m);
PolicyMode policy_mode_from_string(const std::string& s);

struct Thresholds {
  double lambda = 0.1;                 // 1/s
  double slack_threshold = 1.05;
  double interference_factor = 1.2;
  double offline_util_threshold = 0.4;
  double vm_util_threshold = 0.8;
  double monitor_period_s = 2.0;
  double model_autoscale_period_s = 1.0;
  double vm_autoscale_period_s = 2.0;
  double metrics_interval_s = 4.0;
  double vm_startup_s = 30.0;
  double idle_remove_s = 60.0;
  // Interference injection on co-located GPU instances.
  double colocation_load_fraction = 0.8;
  double interference_multiplier = 1.5;
};

struct WorkerSpec {
  Hardware hardware = Hardware::CPU;
  int count = 1;
  std::map<std::string, double> resources;  // empty -> class defaults
};

std::map<std::string, double> default_worker_resources(Hardware hw);

struct AppSpec {
  std::string app_id;
  std::vector<std::string> arch_ids;
  // Requirements the autoscaler plans against.
  double slo_ms = 1e12;
  double min_accuracy = 0.0;
};

struct OfflineJobSpec {
  std::string job_id;
  std::string app_id;
  double min_accuracy = 0.0;
  long total_inputs = 0;
  int chunk_size = 10;
  int batch = 1;
};

/// Variant pinned at scenario build time for the static and horizontal-only
/// baseline modes.
struct StaticPolicy {
  std::string pinned_variant_id;
  int preload_replicas = 1;
};

struct Scenario {
  Catalog catalog;
  std::vector<AppSpec> apps;
  std::vector<WorkerSpec> fleet;
  ArrivalTrace trace;
  std::vector<OfflineJobSpec> offline_jobs;
  bool offline_enabled = true;
  PolicyMode mode = PolicyMode::Infaas;
  std::optional<StaticPolicy> static_policy;
  Thresholds thresholds;
  std::uint64_t seed = 0;
  double horizon_s = 120.0;

  void validate() const;  // throws on inconsistent scenarios
};

struct MetricsInterval {
  double time_s = 0.0;
  long arrived = 0;
  long served = 0;
  long violations = 0;
  long rejected = 0;
  double violation_ratio = 0.0;
  double cost_cumulative = 0.0;
  double util_cpu = 0.0;
  double util_gpu = 0.0;
  double util_accel = 0.0;
  int active_workers = 0;
  // breakdown of served queries by serving hardware (not serialized)
  long served_cpu = 0;
  long served_gpu = 0;
  long served_accel = 0;
  long offline_processed = 0;
  long offline_chunks_started_hot = 0;  // chunks started above the threshold
  double max_worker_util = 0.0;         // max over monitor snapshots
  long in_flight = 0;                   // queries arrived but not yet complete
};

struct MetricsTrace {
  std::vector<MetricsInterval> intervals;
  long total_arrived = 0;
  long total_served = 0;
  long total_violations = 0;
  long total_rejected = 0;
  double total_cost = 0.0;
  std::map<std::string, long> offline_processed;  // job_id -> inputs done
  std::vector<std::string> scaling_log;  // VM-level events
  std::vector<std::string> plan_log;     // model-level plans

  double violation_ratio() const {
    return total_served == 0 ? 0.0
                             : static_cast<double>(total_violations) / total_served;
  }
};

/// One record per metrics interval:
/// time_s arrived served violations violation_ratio cost_cumulative
/// util_cpu util_gpu util_accel active_workers
void write_metrics(const MetricsTrace& trace, std::ostream& out);

/// Runs the scenario to its horizon. Deterministic for equal scenario + seed.
MetricsTrace run(const Scenario& scenario);

}  // namespace servesim
