#include "scenario_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace servesim::config {

using nlohmann::json;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  return base_dir + "/" + path;
}

QueryMode query_mode_from_string(const std::string& s) {
  if (s == "by_model") return QueryMode::ByModel;
  if (s == "by_requirements") return QueryMode::ByRequirements;
  throw std::invalid_argument("unknown query mode: " + s);
}

Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::Classification;
  if (s == "translation") return Task::Translation;
  if (s == "other") return Task::Other;
  throw std::invalid_argument("unknown task: " + s);
}

Thresholds thresholds_from_json(const json& cfg) {
  Thresholds t;
  t.lambda = cfg.value("lambda", t.lambda);
  t.slack_threshold = cfg.value("slack_threshold", t.slack_threshold);
  t.interference_factor = cfg.value("interference_factor", t.interference_factor);
  t.offline_util_threshold =
      cfg.value("offline_util_threshold", t.offline_util_threshold);
  t.vm_util_threshold = cfg.value("vm_util_threshold", t.vm_util_threshold);
  t.monitor_period_s = cfg.value("monitor_period_s", t.monitor_period_s);
  t.model_autoscale_period_s =
      cfg.value("model_autoscale_period_s", t.model_autoscale_period_s);
  t.vm_autoscale_period_s =
      cfg.value("vm_autoscale_period_s", t.vm_autoscale_period_s);
  t.metrics_interval_s = cfg.value("metrics_interval_s", t.metrics_interval_s);
  t.vm_startup_s = cfg.value("vm_startup_s", t.vm_startup_s);
  t.idle_remove_s = cfg.value("idle_remove_s", t.idle_remove_s);
  t.colocation_load_fraction =
      cfg.value("colocation_load_fraction", t.colocation_load_fraction);
  t.interference_multiplier =
      cfg.value("interference_multiplier", t.interference_multiplier);
  if (t.slack_threshold < 1.0) {
    throw std::invalid_argument("slack_threshold must be >= 1");
  }
  if (t.interference_factor < 1.0) {
    throw std::invalid_argument("interference_factor must be >= 1");
  }
  for (double v : {t.offline_util_threshold, t.vm_util_threshold}) {
    if (v <= 0.0 || v > 1.0) {
      throw std::invalid_argument("utilization thresholds must be in (0,1]");
    }
  }
  for (double v : {t.monitor_period_s, t.model_autoscale_period_s,
                   t.vm_autoscale_period_s, t.metrics_interval_s}) {
    if (v <= 0.0) throw std::invalid_argument("periods must be positive");
  }
  return t;
}

}  // namespace

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  return cfg;
}

std::string dir_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  return slash == std::string::npos ? "." : path.substr(0, slash);
}

Catalog catalog_from_json(const json& cfg, const std::string& base_dir) {
  if (cfg.contains("profiles_file")) {
    return load_profiles_file(
        resolve(base_dir, cfg.at("profiles_file").get<std::string>()));
  }
  if (!cfg.contains("generate")) {
    throw std::invalid_argument("catalog needs profiles_file or generate");
  }
  const json& gen = cfg.at("generate");
  std::vector<HardwareSpec> hw_catalog;
  for (const json& h : gen.at("hardware")) {
    HardwareSpec spec;
    spec.hardware = hardware_from_string(h.at("hardware").get<std::string>());
    spec.speedup = h.value("speedup", spec.speedup);
    spec.graph_optimizer = h.value("graph_optimizer", spec.graph_optimizer);
    spec.optimizer_speedup = h.value("optimizer_speedup", spec.optimizer_speedup);
    spec.mem_gb_base = h.value("mem_gb_base", spec.mem_gb_base);
    spec.mem_gb_per_batch = h.value("mem_gb_per_batch", spec.mem_gb_per_batch);
    spec.cores = h.value("cores", spec.cores);
    hw_catalog.push_back(spec);
  }
  std::vector<int> batch_sizes = gen.value("batch_sizes", std::vector<int>{1});
  ProfileModelParams params;
  if (gen.contains("profile_model")) {
    const json& p = gen.at("profile_model");
    params.batch_alpha = p.value("batch_alpha", params.batch_alpha);
    params.pipeline_factor = p.value("pipeline_factor", params.pipeline_factor);
    params.load_ms_per_gb = p.value("load_ms_per_gb", params.load_ms_per_gb);
  }
  Catalog catalog;
  for (const json& a : gen.at("architectures")) {
    ModelArchitecture arch;
    arch.arch_id = a.at("arch_id").get<std::string>();
    arch.declared_accuracy = a.at("accuracy").get<double>();
    arch.task = task_from_string(a.value("task", std::string("other")));
    catalog.add_architecture(arch);
    for (VariantProfile& v :
         generate_variants(arch, a.at("base_latency_ms").get<double>(),
                           hw_catalog, batch_sizes, params)) {
      catalog.add_variant(std::move(v));
    }
  }
  return catalog;
}

QueryRequest request_from_json(const json& cfg) {
  QueryRequest q;
  q.mode = query_mode_from_string(
      cfg.value("mode", std::string("by_requirements")));
  q.app_id = cfg.at("app_id").get<std::string>();
  if (cfg.contains("model_name")) {
    q.model_name = cfg.at("model_name").get<std::string>();
  }
  if (cfg.contains("slo_ms")) q.latency_slo_ms = cfg.at("slo_ms").get<double>();
  if (cfg.contains("min_accuracy")) {
    q.min_accuracy = cfg.at("min_accuracy").get<double>();
  }
  q.kind = cfg.value("offline", false) ? QueryKind::Offline : QueryKind::Online;
  q.batch = cfg.value("batch", 1);
  q.validate();
  return q;
}

ArrivalTrace workload_from_json(const json& cfg, const std::string& base_dir,
                                std::uint64_t seed) {
  if (cfg.contains("arrivals_file")) {
    std::string path =
        resolve(base_dir, cfg.at("arrivals_file").get<std::string>());
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open arrivals file: " + path);
    return load_trace(in);
  }
  if (cfg.contains("replay")) {
    const json& rp = cfg.at("replay");
    return replay_trace_file(
        resolve(base_dir, rp.at("trace_file").get<std::string>()),
        rp.at("qps_min").get<double>(), rp.at("qps_max").get<double>(),
        rp.at("duration_s").get<double>(), seed,
        request_from_json(rp.at("request")));
  }
  std::string pattern = cfg.at("pattern").get<std::string>();
  PatternKind kind;
  if (pattern == "flat_low") {
    kind = PatternKind::FlatLow;
  } else if (pattern == "steady_high") {
    kind = PatternKind::SteadyHigh;
  } else if (pattern == "fluctuating") {
    kind = PatternKind::Fluctuating;
  } else {
    throw std::invalid_argument("unknown workload pattern: " + pattern);
  }
  PatternParams params;
  params.duration_s = cfg.value("duration_s", params.duration_s);
  params.flat_rate_qps = cfg.value("flat_rate_qps", params.flat_rate_qps);
  params.ramp_start_qps = cfg.value("ramp_start_qps", params.ramp_start_qps);
  params.ramp_end_qps = cfg.value("ramp_end_qps", params.ramp_end_qps);
  params.low_qps = cfg.value("low_qps", params.low_qps);
  params.high_qps = cfg.value("high_qps", params.high_qps);
  if (cfg.contains("spike_windows_s")) {
    params.spike_windows_s.clear();
    for (const json& w : cfg.at("spike_windows_s")) {
      params.spike_windows_s.emplace_back(w.at(0).get<double>(),
                                          w.at(1).get<double>());
    }
  }
  params.request = request_from_json(cfg.at("request"));
  return gen_pattern(kind, params, seed);
}

Scenario scenario_from_json(const json& cfg, const std::string& base_dir) {
  Scenario sc;
  sc.seed = cfg.value("seed", 0);
  sc.horizon_s = cfg.value("horizon_s", 120.0);
  sc.mode = policy_mode_from_string(cfg.value("mode", std::string("infaas")));
  sc.catalog = catalog_from_json(cfg.at("catalog"), base_dir);
  if (cfg.contains("thresholds")) {
    sc.thresholds = thresholds_from_json(cfg.at("thresholds"));
  }

  for (const json& a : cfg.at("apps")) {
    AppSpec app;
    app.app_id = a.at("app_id").get<std::string>();
    app.arch_ids = a.at("arch_ids").get<std::vector<std::string>>();
    app.min_accuracy = a.value("min_accuracy", 0.0);
    if (a.contains("slo_ms")) {
      app.slo_ms = a.at("slo_ms").get<double>();
    } else if (a.contains("slo_factor_fastest_cpu")) {
      // SLO as a multiple of the fastest CPU variant's batch-1 latency.
      double fastest = std::numeric_limits<double>::infinity();
      for (const std::string& arch_id : app.arch_ids) {
        for (const VariantProfile* v : sc.catalog.variants_of(arch_id)) {
          if (v->hardware != Hardware::CPU) continue;
          fastest = std::min(fastest, v->batch1_latency_ms());
        }
      }
      if (!std::isfinite(fastest)) {
        throw std::invalid_argument("app " + app.app_id +
                                    ": no CPU variant to derive an SLO from");
      }
      app.slo_ms = a.at("slo_factor_fastest_cpu").get<double>() * fastest;
    }
    sc.apps.push_back(std::move(app));
  }

  for (const json& f : cfg.at("fleet")) {
    WorkerSpec spec;
    spec.hardware = hardware_from_string(f.at("hardware").get<std::string>());
    spec.count = f.value("count", 1);
    if (spec.count < 1) throw std::invalid_argument("fleet count must be >= 1");
    if (f.contains("resources")) {
      spec.resources = f.at("resources").get<std::map<std::string, double>>();
    }
    sc.fleet.push_back(std::move(spec));
  }

  sc.trace = workload_from_json(cfg.at("workload"), base_dir, sc.seed);

  sc.offline_enabled = cfg.value("offline_enabled", true);
  if (cfg.contains("offline_jobs")) {
    for (const json& j : cfg.at("offline_jobs")) {
      OfflineJobSpec job;
      job.job_id = j.at("job_id").get<std::string>();
      job.app_id = j.at("app_id").get<std::string>();
      job.min_accuracy = j.value("min_accuracy", 0.0);
      job.total_inputs = j.at("total_inputs").get<long>();
      job.chunk_size = j.value("chunk_size", job.chunk_size);
      job.batch = j.value("batch", job.batch);
      sc.offline_jobs.push_back(std::move(job));
    }
  }

  if (cfg.contains("static_policy")) {
    StaticPolicy pol;
    pol.pinned_variant_id =
        cfg.at("static_policy").at("variant_id").get<std::string>();
    pol.preload_replicas = cfg.at("static_policy").value("replicas", 1);
    sc.static_policy = pol;
  }

  sc.validate();
  return sc;
}

}  // namespace servesim::config
