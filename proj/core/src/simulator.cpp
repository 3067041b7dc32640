#include "servesim/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "servesim/autoscale_model.hpp"
#include "servesim/autoscale_vm.hpp"
#include "servesim/metadata_store.hpp"
#include "servesim/selection.hpp"

namespace servesim {

const char* to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::Infaas: return "infaas";
    case PolicyMode::StaticCpu: return "static_cpu";
    case PolicyMode::StaticGpu: return "static_gpu";
    case PolicyMode::HorizontalOnly: return "horizontal_only";
  }
  return "?";
}

PolicyMode policy_mode_from_string(const std::string& s) {
  if (s == "infaas") return PolicyMode::Infaas;
  if (s == "static_cpu") return PolicyMode::StaticCpu;
  if (s == "static_gpu") return PolicyMode::StaticGpu;
  if (s == "horizontal_only") return PolicyMode::HorizontalOnly;
  throw std::invalid_argument("unknown policy mode: " + s);
}

std::map<std::string, double> default_worker_resources(Hardware hw) {
  switch (hw) {
    case Hardware::CPU:
      return {{resource::kCpuCores, 16.0}, {resource::kCpuMemGb, 64.0}};
    case Hardware::GPU:
      return {{resource::kGpuMemGb, 16.0}};
    case Hardware::ACCEL:
      return {{resource::kAccelCores, 8.0}};
  }
  return {};
}

void Scenario::validate() const {
  if (catalog.empty()) throw std::invalid_argument("scenario: empty catalog");
  if (fleet.empty()) throw std::invalid_argument("scenario: empty fleet");
  if (horizon_s <= 0.0) throw std::invalid_argument("scenario: horizon_s <= 0");
  if (apps.empty()) throw std::invalid_argument("scenario: no apps");
  for (const AppSpec& app : apps) {
    for (const std::string& arch : app.arch_ids) {
      if (!catalog.architectures.count(arch)) {
        throw std::invalid_argument("scenario: unknown arch " + arch);
      }
    }
  }
  for (const QueryRequest& q : trace.arrivals) {
    if (q.arrival_ms > horizon_s * 1000.0) {
      throw std::invalid_argument("scenario: workload exceeds horizon");
    }
  }
  if ((mode == PolicyMode::StaticCpu || mode == PolicyMode::StaticGpu ||
       mode == PolicyMode::HorizontalOnly)) {
    if (!static_policy) {
      throw std::invalid_argument("scenario: baseline mode needs static_policy");
    }
    try {
      catalog.variant(static_policy->pinned_variant_id);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("scenario: unknown pinned variant " +
                                  static_policy->pinned_variant_id);
    }
  }
}

namespace {

constexpr double kEps = 1e-9;

Hardware class_of_resource(const std::string& type) {
  if (type == resource::kGpuMemGb) return Hardware::GPU;
  if (type == resource::kAccelCores) return Hardware::ACCEL;
  return Hardware::CPU;
}

std::string fmt(const char* format, ...) {
  char buf[256];
  va_list args;
  va_start(args, format);
  vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

enum class EventKind {
  QueryArrival,
  QueryComplete,
  LoadComplete,
  MonitorTick,
  ModelAutoscaleTick,
  VmAutoscaleTick,
  WorkerReady,
  OfflineChunk,
  PlanExecute,
};

struct Event {
  double t = 0.0;
  long seq = 0;
  EventKind kind = EventKind::QueryArrival;
  std::size_t query_index = 0;  // QueryArrival
  std::string key;              // instance key
  std::string job_id;           // OfflineChunk
  Hardware hw = Hardware::CPU;  // WorkerReady
  long chunk_inputs = 0;        // OfflineChunk
  // QueryComplete payload
  double arrival_ms = 0.0;
  double slo_ms = 0.0;
  double service_ms = 0.0;  // latency excluding queue wait
  bool online = true;
  std::string worker;  // PlanExecute
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    return a.seq > b.seq;
  }
};

class Engine {
 public:
  explicit Engine(const Scenario& sc) : sc_(sc), thr_(sc.thresholds) {}

  MetricsTrace run_all();

 private:
  struct InstanceRuntime {
    bool loading = true;
    double next_free_ms = 0.0;
    double interference_mult = 1.0;
    long window_assigned = 0;
    double window_latency_sum = 0.0;
    long window_completed = 0;
    long autoscale_assigned = 0;
    int serving_batch = 1;
    std::vector<std::size_t> pending_queries;
    std::vector<std::string> pending_jobs;
  };

  struct JobRuntime {
    OfflineJobSpec spec;
    long processed = 0;
    bool paused = false;
    bool chunk_in_flight = false;
    bool done = false;
    std::string inst_key;
  };

  struct PendingDown {
    ScalingPlan plan;
    double execute_at_ms = 0.0;
    double load_at_plan = 0.0;
  };

  const Scenario& sc_;
  Thresholds thr_;
  MetadataStore store_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  long seq_ = 0;
  double now_ = 0.0;
  double horizon_ms_ = 0.0;
  double last_cost_ms_ = 0.0;
  long inflight_ = 0;
  MetricsTrace out_;
  MetricsInterval cur_;
  double interval_end_ms_ = 0.0;
  std::map<std::string, InstanceRuntime> rt_;
  std::map<std::string, JobRuntime> jobs_;
  std::map<std::string, PendingDown> pending_down_;
  std::vector<ClusterView::PendingWorker> pending_workers_;
  std::map<std::string, double> idle_since_;
  std::map<std::string, long> worker_tick_arrivals_;
  int next_worker_ = 0;

  void schedule(Event e) {
    e.seq = seq_++;
    queue_.push(std::move(e));
  }

  bool autoscaling_enabled() const {
    return sc_.mode == PolicyMode::Infaas || sc_.mode == PolicyMode::HorizontalOnly;
  }
  bool vm_scaling_enabled() const { return autoscaling_enabled(); }

  void setup();
  void advance_to(double t);
  void accrue_cost(double to_ms);
  void close_interval();

  void handle_arrival(const Event& e);
  void handle_complete(const Event& e);
  void handle_load_complete(const Event& e);
  void handle_monitor();
  void handle_model_tick();
  void handle_vm_tick();
  void handle_worker_ready(const Event& e);
  void handle_offline_chunk(const Event& e);
  void handle_plan_execute(const Event& e);

  void assign_service(const std::string& key, const QueryRequest& q);
  std::string start_load(const std::string& variant_id,
                         const std::string& worker_id, const std::string& app_id);
  void unload_instance(const std::string& key);
  void schedule_chunk(JobRuntime& job);
  void apply_scale_plan(const std::string& worker_id, const ScalingPlan& plan,
                        const std::string& app_id);
  const AppSpec& app_of_worker_pivot(const std::string& arch_id) const;
  std::vector<VariantState> running_on(const std::string& worker_id,
                                       double period_s) const;
  double worker_max_util(const WorkerState& w) const;
};

void Engine::setup() {
  horizon_ms_ = sc_.horizon_s * 1000.0;
  interval_end_ms_ = thr_.metrics_interval_s * 1000.0;
  cur_ = {};

  for (const WorkerSpec& spec : sc_.fleet) {
    for (int i = 0; i < spec.count; ++i) {
      WorkerState w;
      w.worker_id = fmt("w%03d", next_worker_++);
      w.total = spec.resources.empty() ? default_worker_resources(spec.hardware)
                                       : spec.resources;
      w.start_time_ms = 0.0;
      store_.add_worker(std::move(w));
    }
  }

  for (const AppSpec& app : sc_.apps) {
    for (const std::string& arch_id : app.arch_ids) {
      const ModelArchitecture& arch = sc_.catalog.architectures.at(arch_id);
      std::vector<VariantProfile> variants;
      for (const VariantProfile* v : sc_.catalog.variants_of(arch_id)) {
        variants.push_back(*v);
      }
      store_.register_model(arch, variants, app.app_id);
    }
  }

  // Baseline modes pre-load the pinned variant.
  if (sc_.static_policy) {
    const StaticPolicy& pol = *sc_.static_policy;
    const VariantProfile& v = sc_.catalog.variant(pol.pinned_variant_id);
    for (int i = 0; i < pol.preload_replicas; ++i) {
      std::vector<std::string> capable;
      for (const auto& [id, w] : store_.workers()) {
        if (w.has_resource(dominant_resource(v.hardware)) && w.fits(v.resources)) {
          capable.push_back(id);
        }
      }
      if (capable.empty()) {
        throw std::invalid_argument("scenario: fleet cannot host pinned variant");
      }
      std::string worker = store_.least_loaded_worker(capable, v.hardware);
      InstanceRecord& rec = store_.create_instance(
          v.variant_id, worker, store_.app_of_arch(v.arch_id), 0.0);
      std::string key = rec.key();
      store_.apply_event(key, LifecycleEvent::LoadComplete, InstanceState::Active,
                         0.0);
      rt_[key].loading = false;
    }
  }

  for (std::size_t i = 0; i < sc_.trace.arrivals.size(); ++i) {
    Event e;
    e.t = sc_.trace.arrivals[i].arrival_ms;
    e.kind = EventKind::QueryArrival;
    e.query_index = i;
    schedule(std::move(e));
  }

  if (sc_.offline_enabled) {
    for (const OfflineJobSpec& spec : sc_.offline_jobs) {
      jobs_[spec.job_id] = JobRuntime{spec};
      Event e;
      e.t = 0.0;
      e.kind = EventKind::OfflineChunk;
      e.job_id = spec.job_id;
      schedule(std::move(e));
    }
  }

  double monitor_ms = thr_.monitor_period_s * 1000.0;
  for (double t = monitor_ms; t <= horizon_ms_ + kEps; t += monitor_ms) {
    Event e;
    e.t = t;
    e.kind = EventKind::MonitorTick;
    schedule(std::move(e));
  }
  if (autoscaling_enabled()) {
    double model_ms = thr_.model_autoscale_period_s * 1000.0;
    for (double t = model_ms; t <= horizon_ms_ + kEps; t += model_ms) {
      Event e;
      e.t = t;
      e.kind = EventKind::ModelAutoscaleTick;
      schedule(std::move(e));
    }
  }
  if (vm_scaling_enabled()) {
    double vm_ms = thr_.vm_autoscale_period_s * 1000.0;
    for (double t = vm_ms; t <= horizon_ms_ + kEps; t += vm_ms) {
      Event e;
      e.t = t;
      e.kind = EventKind::VmAutoscaleTick;
      schedule(std::move(e));
    }
  }
}

void Engine::accrue_cost(double to_ms) {
  if (to_ms <= last_cost_ms_) return;
  double rate = 0.0;  // $/s across loaded instances
  for (const auto& [key, r] : rt_) {
    const InstanceRecord* rec = store_.find_instance(key);
    if (!rec) continue;
    rate += store_.profile(rec->variant_id).cost_rate;
  }
  out_.total_cost += rate * (to_ms - last_cost_ms_) / 1000.0;
  last_cost_ms_ = to_ms;
}

void Engine::close_interval() {
  accrue_cost(interval_end_ms_);
  cur_.time_s = interval_end_ms_ / 1000.0;
  cur_.violation_ratio =
      cur_.served == 0 ? 0.0
                       : static_cast<double>(cur_.violations) / cur_.served;
  cur_.cost_cumulative = out_.total_cost;
  double util_sum[3] = {0, 0, 0};
  int util_n[3] = {0, 0, 0};
  for (const auto& [id, w] : store_.workers()) {
    for (Hardware hw : {Hardware::CPU, Hardware::GPU, Hardware::ACCEL}) {
      if (!w.has_resource(dominant_resource(hw))) continue;
      util_sum[static_cast<int>(hw)] += w.util(dominant_resource(hw));
      util_n[static_cast<int>(hw)] += 1;
    }
  }
  auto mean = [&](Hardware hw) {
    int i = static_cast<int>(hw);
    return util_n[i] == 0 ? 0.0 : util_sum[i] / util_n[i];
  };
  cur_.util_cpu = mean(Hardware::CPU);
  cur_.util_gpu = mean(Hardware::GPU);
  cur_.util_accel = mean(Hardware::ACCEL);
  cur_.active_workers = static_cast<int>(store_.workers().size());
  cur_.in_flight = inflight_;
  out_.intervals.push_back(cur_);
  cur_ = {};
  interval_end_ms_ += thr_.metrics_interval_s * 1000.0;
}

void Engine::advance_to(double t) {
  while (t > interval_end_ms_ + kEps && interval_end_ms_ <= horizon_ms_ + kEps) {
    close_interval();
  }
  accrue_cost(t);
  now_ = t;
}

void Engine::assign_service(const std::string& key, const QueryRequest& q) {
  InstanceRuntime& rt = rt_.at(key);
  const InstanceRecord* rec = store_.find_instance(key);
  const VariantProfile& prof = store_.profile(rec->variant_id);
  double start = std::max(now_, rt.next_free_ms);
  rt.next_free_ms = start + 1000.0 / prof.saturation_qps;
  rt.window_assigned += 1;
  rt.autoscale_assigned += 1;
  rt.serving_batch = q.batch;
  double service_ms = prof.inf_latency(q.batch) * rt.interference_mult;
  double completion = start + service_ms;
  Event e;
  e.t = completion;
  e.kind = EventKind::QueryComplete;
  e.key = key;
  e.arrival_ms = q.arrival_ms;
  e.service_ms = service_ms;
  e.online = q.kind == QueryKind::Online;
  e.slo_ms = q.latency_slo_ms.value_or(0.0);
  schedule(std::move(e));
}

std::string Engine::start_load(const std::string& variant_id,
                               const std::string& worker_id,
                               const std::string& app_id) {
  InstanceRecord& rec = store_.create_instance(variant_id, worker_id, app_id, now_);
  std::string key = rec.key();
  rt_[key] = InstanceRuntime{};
  idle_since_.erase(worker_id);
  Event e;
  e.t = now_ + store_.profile(variant_id).load_latency_ms;
  e.kind = EventKind::LoadComplete;
  e.key = key;
  schedule(std::move(e));
  return key;
}

void Engine::unload_instance(const std::string& key) {
  const InstanceRecord* rec = store_.find_instance(key);
  if (!rec) return;
  store_.apply_event(key, LifecycleEvent::Unload, InstanceState::Inactive, now_);
  rt_.erase(key);
}

void Engine::handle_arrival(const Event& e) {
  const QueryRequest& q = sc_.trace.arrivals[e.query_index];
  cur_.arrived += 1;
  out_.total_arrived += 1;

  if (sc_.static_policy) {
    // Pinned dispatch: shortest queue among replicas of the pinned variant.
    const std::string& pinned = sc_.static_policy->pinned_variant_id;
    std::string best;
    double best_free = std::numeric_limits<double>::infinity();
    for (const InstanceRecord* rec : store_.instances_of_variant(pinned)) {
      const InstanceRuntime& rt = rt_.at(rec->key());
      if (rt.loading) continue;
      if (rt.next_free_ms < best_free ||
          (rt.next_free_ms == best_free && rec->key() < best)) {
        best_free = rt.next_free_ms;
        best = rec->key();
      }
    }
    if (best.empty()) {
      cur_.rejected += 1;
      out_.total_rejected += 1;
      return;
    }
    const InstanceRecord* rec = store_.find_instance(best);
    worker_tick_arrivals_[rec->worker_id] += 1;
    inflight_ += 1;
    assign_service(best, q);
    return;
  }

  SelectionResult res = q.mode == QueryMode::ByModel
                            ? by_model_dispatch(q, store_)
                            : get_variant_for_query(q, store_);
  if (!res.placed()) {
    cur_.rejected += 1;
    out_.total_rejected += 1;
    return;
  }
  const Placement& p = *res.placement;
  worker_tick_arrivals_[p.worker_id] += 1;
  inflight_ += 1;
  if (!p.needs_load) {
    // Pick the serving replica with the shortest queue on that worker.
    std::string best;
    double best_free = std::numeric_limits<double>::infinity();
    double saturation = store_.profile(p.variant_id).saturation_qps;
    for (const InstanceRecord* rec : store_.instances_of_variant(p.variant_id)) {
      if (rec->worker_id != p.worker_id) continue;
      if (rec->state != InstanceState::Active) continue;
      if (rec->current_qps >= saturation) continue;
      const InstanceRuntime& rt = rt_.at(rec->key());
      if (rt.next_free_ms < best_free ||
          (rt.next_free_ms == best_free && rec->key() < best)) {
        best_free = rt.next_free_ms;
        best = rec->key();
      }
    }
    assign_service(best, q);
    return;
  }
  std::string key = start_load(p.variant_id, p.worker_id, q.app_id);
  rt_.at(key).pending_queries.push_back(e.query_index);
}

void Engine::handle_complete(const Event& e) {
  cur_.served += 1;
  out_.total_served += 1;
  inflight_ -= 1;
  double latency = now_ - e.arrival_ms;
  if (e.online && e.slo_ms > 0.0 && latency > e.slo_ms + kEps) {
    cur_.violations += 1;
    out_.total_violations += 1;
  }
  const InstanceRecord* rec = store_.find_instance(e.key);
  if (rec) {
    switch (store_.profile(rec->variant_id).hardware) {
      case Hardware::CPU: cur_.served_cpu += 1; break;
      case Hardware::GPU: cur_.served_gpu += 1; break;
      case Hardware::ACCEL: cur_.served_accel += 1; break;
    }
    InstanceRuntime& rt = rt_.at(e.key);
    // Classification keys off service latency: interference inflates it,
    // plain queueing does not (queue growth shows up as qps at saturation).
    rt.window_latency_sum += e.service_ms;
    rt.window_completed += 1;
    InstanceRecord next = *rec;
    constexpr double kAlpha = 0.3;
    next.observed_latency_ms = next.observed_latency_ms == 0.0
                                   ? latency
                                   : kAlpha * latency +
                                         (1.0 - kAlpha) * next.observed_latency_ms;
    store_.update_instance(next);
  }
}

void Engine::handle_load_complete(const Event& e) {
  const InstanceRecord* rec = store_.find_instance(e.key);
  if (!rec || rec->state != InstanceState::Inactive) return;  // cancelled
  store_.apply_event(e.key, LifecycleEvent::LoadComplete, InstanceState::Active,
                     now_);
  InstanceRuntime& rt = rt_.at(e.key);
  rt.loading = false;
  std::vector<std::size_t> pending = std::move(rt.pending_queries);
  rt.pending_queries.clear();
  for (std::size_t idx : pending) {
    assign_service(e.key, sc_.trace.arrivals[idx]);
  }
  std::vector<std::string> jobs = std::move(rt.pending_jobs);
  rt.pending_jobs.clear();
  for (const std::string& job_id : jobs) {
    JobRuntime& job = jobs_.at(job_id);
    if (!job.paused && !job.done && !job.chunk_in_flight) schedule_chunk(job);
  }
}

double Engine::worker_max_util(const WorkerState& w) const {
  double u = 0.0;
  for (const auto& [type, total] : w.total) u = std::max(u, w.util(type));
  return u;
}

void Engine::handle_monitor() {
  double period_s = thr_.monitor_period_s;
  for (const auto& [worker_id, w] : store_.workers()) {
    auto records = store_.instances_on_worker(worker_id);

    // Interference injection: co-located GPU instances past the combined
    // load threshold slow down everything but the largest footprint.
    std::vector<const InstanceRecord*> gpu_loaded;
    double combined_qps = 0.0, combined_sat = 0.0;
    for (const InstanceRecord* rec : records) {
      const InstanceRuntime& rt = rt_.at(rec->key());
      if (rt.loading) continue;
      const VariantProfile& prof = store_.profile(rec->variant_id);
      if (prof.hardware != Hardware::GPU) continue;
      gpu_loaded.push_back(rec);
      combined_qps += rt.window_assigned / period_s;
      combined_sat += prof.saturation_qps;
    }
    bool interference =
        gpu_loaded.size() >= 2 &&
        combined_qps > thr_.colocation_load_fraction * combined_sat;
    const InstanceRecord* largest = nullptr;
    if (interference) {
      double best_mem = -1.0;
      for (const InstanceRecord* rec : gpu_loaded) {
        double mem = store_.profile(rec->variant_id)
                         .resources.count(resource::kGpuMemGb)
                         ? store_.profile(rec->variant_id)
                               .resources.at(resource::kGpuMemGb)
                         : 0.0;
        if (mem > best_mem) {
          best_mem = mem;
          largest = rec;
        }
      }
    }
    for (const InstanceRecord* rec : gpu_loaded) {
      rt_.at(rec->key()).interference_mult =
          interference && rec != largest ? thr_.interference_multiplier : 1.0;
    }

    // Classify and transition every loaded instance.
    for (const InstanceRecord* rec : records) {
      InstanceRuntime& rt = rt_.at(rec->key());
      if (rt.loading) continue;
      const VariantProfile& prof = store_.profile(rec->variant_id);
      MonitorSample sample;
      sample.variant_id = rec->variant_id;
      sample.worker_id = rec->worker_id;
      sample.window_qps = rt.window_assigned / period_s;
      sample.window_avg_latency_ms =
          rt.window_completed == 0 ? 0.0
                                   : rt.window_latency_sum / rt.window_completed;
      sample.serving_batch = rt.serving_batch;
      InstanceState target = classify(sample, prof, thr_.interference_factor);

      InstanceRecord next = *rec;
      next.current_qps = sample.window_qps;
      store_.update_instance(next);

      if (target != rec->state) {
        bool unhealthy = rec->state == InstanceState::Overloaded ||
                         rec->state == InstanceState::Interfered;
        bool healthy_target = target == InstanceState::Active;
        // Hysteresis: leave an unhealthy state only after one full window.
        if (unhealthy && healthy_target &&
            now_ - rec->since_ms < thr_.monitor_period_s * 1000.0 - kEps) {
          // stay
        } else if (legal_edge(rec->state, target)) {
          InstanceRecord after =
              store_.apply_event(rec->key(), LifecycleEvent::Monitor, target, now_);
          if (after.state == InstanceState::Interfered) {
            MigrationPlan plan = mitigate(after, store_);
            if (plan.kind == MigrationPlan::Kind::IntraWorker) {
              // Move to free resources on the same worker: contention gone.
              store_.apply_event(after.key(), LifecycleEvent::Mitigated,
                                 InstanceState::Active, now_);
              rt.interference_mult = 1.0;
              out_.plan_log.push_back(fmt(
                  "t=%.3f mitigate intra worker=%s variant=%s", now_ / 1000.0,
                  worker_id.c_str(), rec->variant_id.c_str()));
            } else if (plan.kind == MigrationPlan::Kind::Remote) {
              start_load(after.variant_id, plan.target_worker, after.app_id);
              unload_instance(after.key());
              out_.plan_log.push_back(fmt(
                  "t=%.3f mitigate remote worker=%s->%s variant=%s",
                  now_ / 1000.0, worker_id.c_str(), plan.target_worker.c_str(),
                  after.variant_id.c_str()));
              continue;  // record gone
            } else {
              out_.scaling_log.push_back(
                  fmt("t=%.3f mitigation_escalation worker=%s", now_ / 1000.0,
                      worker_id.c_str()));
            }
          }
        }
        // Overloaded <-> Interfered has no direct edge; hold until healthy.
      }
    }

    // Offline throttling: pause on worker pressure or online latency drift.
    double max_util = worker_max_util(w);
    cur_.max_worker_util = std::max(cur_.max_worker_util, max_util);
    bool online_slow = false;
    for (const InstanceRecord* rec : store_.instances_on_worker(worker_id)) {
      const InstanceRuntime& rt = rt_.at(rec->key());
      if (rt.loading || rec->observed_latency_ms == 0.0) continue;
      const VariantProfile& prof = store_.profile(rec->variant_id);
      if (rec->observed_latency_ms >
          thr_.interference_factor * prof.inf_latency(rt.serving_batch)) {
        online_slow = true;
        break;
      }
    }
    bool pause = max_util > thr_.offline_util_threshold || online_slow;
    for (auto& [job_id, job] : jobs_) {
      if (job.done || job.inst_key.empty()) continue;
      const InstanceRecord* rec = store_.find_instance(job.inst_key);
      if (!rec || rec->worker_id != worker_id) continue;
      if (pause) {
        job.paused = true;
      } else if (job.paused) {
        job.paused = false;
        if (!job.chunk_in_flight) schedule_chunk(job);
      }
    }

    // Reset monitoring windows.
    for (const InstanceRecord* rec : store_.instances_on_worker(worker_id)) {
      InstanceRuntime& rt = rt_.at(rec->key());
      rt.window_assigned = 0;
      rt.window_latency_sum = 0.0;
      rt.window_completed = 0;
    }

    // Idle tracking for VM scale-down.
    if (store_.instances_on_worker(worker_id).empty()) {
      idle_since_.emplace(worker_id, now_);
    } else {
      idle_since_.erase(worker_id);
    }
  }
}

std::vector<VariantState> Engine::running_on(const std::string& worker_id,
                                             double period_s) const {
  std::map<std::string, VariantState> by_variant;
  for (const InstanceRecord* rec : store_.instances_on_worker(worker_id)) {
    const InstanceRuntime& rt = rt_.at(rec->key());
    VariantState& vs = by_variant[rec->variant_id];
    if (vs.running == 0) vs.profile = store_.profile(rec->variant_id);
    vs.running += 1;  // loading instances count as committed capacity
    vs.served_qps += rt.autoscale_assigned / period_s;
  }
  std::vector<VariantState> out;
  for (auto& [id, vs] : by_variant) out.push_back(std::move(vs));
  return out;
}

void Engine::apply_scale_plan(const std::string& worker_id,
                              const ScalingPlan& plan, const std::string& app_id) {
  for (const auto& [variant_id, action] : plan.actions) {
    const VariantProfile& prof = store_.profile(variant_id);
    if (action.delta > 0) {
      for (int i = 0; i < action.delta; ++i) {
        std::string target = worker_id;
        if (!store_.worker(worker_id).fits(prof.resources)) {
          // Controller placement: best-fit bin packing across the fleet.
          std::vector<BinPackCandidate> candidates;
          for (const auto& [id, w] : store_.workers()) {
            if (id == worker_id) continue;
            if (!w.has_resource(dominant_resource(prof.hardware))) continue;
            BinPackCandidate c;
            c.worker_id = id;
            for (const auto& [type, total] : w.total) {
              c.free[type] = w.free_amount(type);
            }
            candidates.push_back(std::move(c));
          }
          if (candidates.empty()) {
            out_.scaling_log.push_back(
                fmt("t=%.3f plan_escalation worker=%s variant=%s",
                    now_ / 1000.0, worker_id.c_str(), variant_id.c_str()));
            break;
          }
          BinPackResult placed = dispatch_bin_pack(
              candidates, prof.resources, dominant_resource(prof.hardware));
          if (!placed.placed) {
            out_.scaling_log.push_back(
                fmt("t=%.3f plan_escalation worker=%s variant=%s",
                    now_ / 1000.0, worker_id.c_str(), variant_id.c_str()));
            break;
          }
          target = placed.worker_id;
        }
        start_load(variant_id, target, app_id);
      }
    } else if (action.delta < 0) {
      // Unload replicas on this worker, newest first; skip instances still
      // loading with queued queries.
      auto records = store_.instances_on_worker(worker_id);
      std::vector<const InstanceRecord*> of_variant;
      for (const InstanceRecord* rec : records) {
        if (rec->variant_id != variant_id) continue;
        const InstanceRuntime& rt = rt_.at(rec->key());
        if (rt.loading && !rt.pending_queries.empty()) continue;
        of_variant.push_back(rec);
      }
      std::sort(of_variant.begin(), of_variant.end(),
                [](const InstanceRecord* a, const InstanceRecord* b) {
                  return a->replica > b->replica;
                });
      int to_remove = -action.delta;
      for (const InstanceRecord* rec : of_variant) {
        if (to_remove == 0) break;
        unload_instance(rec->key());
        --to_remove;
      }
    }
  }
}

void Engine::handle_model_tick() {
  double period_s = thr_.model_autoscale_period_s;
  for (const auto& [worker_id, w] : store_.workers()) {
    long arrivals = 0;
    auto it = worker_tick_arrivals_.find(worker_id);
    if (it != worker_tick_arrivals_.end()) {
      arrivals = it->second;
      it->second = 0;
    }
    double load_qps = arrivals / period_s;

    std::vector<VariantState> running = running_on(worker_id, period_s);
    if (running.empty()) continue;

    // Requirements come from the app of the dominant running variant.
    const VariantState* pivot = &running.front();
    for (const VariantState& vs : running) {
      if (vs.served_qps > pivot->served_qps) pivot = &vs;
    }
    const AppSpec& app = app_of_worker_pivot(pivot->profile.arch_id);

    GreedyInput in;
    in.running = running;
    in.load_qps = load_qps;
    in.slo_ms = app.slo_ms;
    in.lambda = thr_.lambda;
    in.slack_threshold = thr_.slack_threshold;
    for (const auto& [type, total] : w.total) {
      in.free_resources[type] = w.free_amount(type);
    }
    if (sc_.mode == PolicyMode::Infaas) {
      for (const VariantProfile* v : store_.variants_of_arch(pivot->profile.arch_id)) {
        in.candidates.push_back(*v);
      }
    }

    ScalingPlan up = greedy_scale_up(in);
    if (!up.empty()) {
      pending_down_.erase(worker_id);  // load pressure cancels scale-down
      for (const auto& [variant_id, action] : up.actions) {
        out_.plan_log.push_back(fmt(
            "t=%.3f worker=%s variant=%s delta=%+d class=%s cost=%.4f trigger=%s",
            now_ / 1000.0, worker_id.c_str(), variant_id.c_str(), action.delta,
            to_string(action.cls), up.total_cost, up.trigger.c_str()));
      }
      apply_scale_plan(worker_id, up, app.app_id);
      continue;
    }

    // Pending scale-down: cancel on load increase, execute after T_v.
    auto pending = pending_down_.find(worker_id);
    if (pending != pending_down_.end()) {
      if (load_qps > pending->second.load_at_plan + kEps) {
        out_.plan_log.push_back(fmt("t=%.3f worker=%s scale_down_cancelled",
                                    now_ / 1000.0, worker_id.c_str()));
        pending_down_.erase(pending);
      } else if (now_ + kEps >= pending->second.execute_at_ms) {
        for (const auto& [variant_id, action] : pending->second.plan.actions) {
          out_.plan_log.push_back(fmt(
              "t=%.3f worker=%s variant=%s delta=%+d class=%s cost=%.4f trigger=%s",
              now_ / 1000.0, worker_id.c_str(), variant_id.c_str(), action.delta,
              to_string(action.cls), pending->second.plan.total_cost,
              pending->second.plan.trigger.c_str()));
        }
        apply_scale_plan(worker_id, pending->second.plan, app.app_id);
        pending_down_.erase(pending);
      }
      continue;
    }

    if (auto down = greedy_scale_down(in)) {
      PendingDown pd;
      pd.plan = std::move(down->plan);
      pd.execute_at_ms =
          now_ + std::max(down->delay_ms, thr_.model_autoscale_period_s * 1000.0);
      pd.load_at_plan = load_qps;
      pending_down_[worker_id] = std::move(pd);
    }
  }
}

const AppSpec& Engine::app_of_worker_pivot(const std::string& arch_id) const {
  for (const AppSpec& app : sc_.apps) {
    for (const std::string& a : app.arch_ids) {
      if (a == arch_id) return app;
    }
  }
  throw std::logic_error("arch without app: " + arch_id);
}

void Engine::handle_vm_tick() {
  ClusterView view;
  for (const auto& [worker_id, w] : store_.workers()) {
    ClusterView::WorkerInfo info;
    info.worker_id = worker_id;
    info.start_time_ms = w.start_time_ms;
    for (const auto& [type, total] : w.total) {
      if (total <= 0.0) continue;
      Hardware hw = class_of_resource(type);
      info.hardware.insert(hw);
      info.util[hw] =
          std::max(info.util.count(hw) ? info.util[hw] : 0.0,
                   w.util(dominant_resource(hw)));
    }
    auto records = store_.instances_on_worker(worker_id);
    for (const InstanceRecord* rec : records) {
      Hardware hw = store_.profile(rec->variant_id).hardware;
      if (rec->state == InstanceState::Interfered) info.interfered_on[hw] = true;
      if (rec->state == InstanceState::Overloaded) {
        info.overloaded_on[hw] += 1;
        info.has_overloaded = true;
      }
    }
    info.idle = records.empty();
    auto idle = idle_since_.find(worker_id);
    info.idle_since_ms = idle == idle_since_.end() ? now_ : idle->second;
    view.workers.push_back(std::move(info));
  }
  view.pending = pending_workers_;

  VmConfig cfg;
  cfg.util_threshold = thr_.vm_util_threshold;
  cfg.overloaded_share = 0.8;
  cfg.startup_latency_ms = thr_.vm_startup_s * 1000.0;
  cfg.idle_remove_ms = thr_.idle_remove_s * 1000.0;

  for (const VmAction& action : vm_scale_decision(view, now_, cfg)) {
    if (action.kind == VmAction::Kind::AddWorker) {
      pending_workers_.push_back({action.hardware, now_ + cfg.startup_latency_ms});
      Event e;
      e.t = now_ + cfg.startup_latency_ms;
      e.kind = EventKind::WorkerReady;
      e.hw = action.hardware;
      schedule(std::move(e));
      out_.scaling_log.push_back(fmt("t=%.3f add_worker hw=%s rule=%d",
                                     now_ / 1000.0, to_string(action.hardware),
                                     action.rule));
    } else {
      if (!store_.instances_on_worker(action.worker_id).empty()) continue;
      store_.remove_worker(action.worker_id);
      idle_since_.erase(action.worker_id);
      worker_tick_arrivals_.erase(action.worker_id);
      out_.scaling_log.push_back(fmt("t=%.3f remove_worker id=%s", now_ / 1000.0,
                                     action.worker_id.c_str()));
    }
  }
}

void Engine::handle_worker_ready(const Event& e) {
  WorkerState w;
  w.worker_id = fmt("w%03d", next_worker_++);
  w.total = default_worker_resources(e.hw);
  w.start_time_ms = now_;
  std::string id = w.worker_id;
  store_.add_worker(std::move(w));
  for (auto it = pending_workers_.begin(); it != pending_workers_.end(); ++it) {
    if (it->hardware == e.hw) {
      pending_workers_.erase(it);
      break;
    }
  }
  out_.scaling_log.push_back(
      fmt("t=%.3f worker_ready id=%s hw=%s", now_ / 1000.0, id.c_str(),
          to_string(e.hw)));
}

void Engine::schedule_chunk(JobRuntime& job) {
  const InstanceRecord* rec = store_.find_instance(job.inst_key);
  if (!rec) {
    job.inst_key.clear();
    Event e;
    e.t = now_;
    e.kind = EventKind::OfflineChunk;
    e.job_id = job.spec.job_id;
    schedule(std::move(e));
    return;
  }
  const VariantProfile& prof = store_.profile(rec->variant_id);
  const WorkerState& w = store_.worker(rec->worker_id);
  if (worker_max_util(w) > thr_.offline_util_threshold) {
    cur_.offline_chunks_started_hot += 1;  // should stay zero; see throttle
  }
  InstanceRuntime& rt = rt_.at(job.inst_key);
  long inputs =
      std::min<long>(job.spec.chunk_size, job.spec.total_inputs - job.processed);
  double start = std::max(now_, rt.next_free_ms);
  double dur_ms = inputs / prof.saturation_qps * 1000.0;
  rt.next_free_ms = start + dur_ms;
  job.chunk_in_flight = true;
  Event e;
  e.t = start + dur_ms;
  e.kind = EventKind::OfflineChunk;
  e.job_id = job.spec.job_id;
  e.chunk_inputs = inputs;
  schedule(std::move(e));
}

void Engine::handle_offline_chunk(const Event& e) {
  JobRuntime& job = jobs_.at(e.job_id);
  if (e.chunk_inputs > 0) {
    job.processed += e.chunk_inputs;
    cur_.offline_processed += e.chunk_inputs;
    out_.offline_processed[job.spec.job_id] = job.processed;
    job.chunk_in_flight = false;
    if (job.processed >= job.spec.total_inputs) {
      job.done = true;
      return;
    }
  }
  if (job.done || job.paused || job.chunk_in_flight) return;

  if (job.inst_key.empty()) {
    QueryRequest q;
    q.mode = QueryMode::ByRequirements;
    q.app_id = job.spec.app_id;
    q.kind = QueryKind::Offline;
    q.min_accuracy = job.spec.min_accuracy;
    q.latency_slo_ms = 1e12;  // latency tolerant
    q.batch = job.spec.batch;
    q.arrival_ms = now_;
    auto retry_later = [&] {
      Event r;
      r.t = now_ + thr_.monitor_period_s * 1000.0;
      r.kind = EventKind::OfflineChunk;
      r.job_id = job.spec.job_id;
      schedule(std::move(r));
    };
    SelectionResult res = get_variant_for_query(q, store_);
    if (!res.placed()) {
      retry_later();
      return;
    }
    const Placement& p = *res.placement;
    // Offline work runs on its own replica so its chunks never queue behind
    // (or in front of) online traffic.
    const VariantProfile& prof = store_.profile(p.variant_id);
    std::string target;
    if (store_.worker(p.worker_id).fits(prof.resources)) {
      target = p.worker_id;
    } else {
      for (const auto& [id, w] : store_.workers()) {
        if (w.has_resource(dominant_resource(prof.hardware)) &&
            w.fits(prof.resources)) {
          target = id;
          break;
        }
      }
    }
    if (target.empty()) {
      retry_later();
      return;
    }
    std::string key = start_load(p.variant_id, target, job.spec.app_id);
    job.inst_key = key;
    rt_.at(key).pending_jobs.push_back(job.spec.job_id);
    return;
  }
  schedule_chunk(job);
}

void Engine::handle_plan_execute(const Event&) {
  // Pending scale-down plans execute inside the model-autoscaler tick.
}

MetricsTrace Engine::run_all() {
  sc_.validate();
  setup();
  while (!queue_.empty()) {
    Event e = queue_.top();
    queue_.pop();
    if (e.t > horizon_ms_ + kEps) break;
    advance_to(e.t);
    switch (e.kind) {
      case EventKind::QueryArrival: handle_arrival(e); break;
      case EventKind::QueryComplete: handle_complete(e); break;
      case EventKind::LoadComplete: handle_load_complete(e); break;
      case EventKind::MonitorTick: handle_monitor(); break;
      case EventKind::ModelAutoscaleTick: handle_model_tick(); break;
      case EventKind::VmAutoscaleTick: handle_vm_tick(); break;
      case EventKind::WorkerReady: handle_worker_ready(e); break;
      case EventKind::OfflineChunk: handle_offline_chunk(e); break;
      case EventKind::PlanExecute: handle_plan_execute(e); break;
    }
  }
  while (interval_end_ms_ <= horizon_ms_ + kEps) close_interval();
  return std::move(out_);
}

}  // namespace

void write_metrics(const MetricsTrace& trace, std::ostream& out) {
  out << "time_s arrived served violations violation_ratio cost_cumulative "
         "util_cpu util_gpu util_accel active_workers\n";
  for (const MetricsInterval& iv : trace.intervals) {
    char line[256];
    snprintf(line, sizeof(line), "%.2f %ld %ld %ld %.6f %.6f %.4f %.4f %.4f %d\n",
             iv.time_s, iv.arrived, iv.served, iv.violations,
             iv.violation_ratio, iv.cost_cumulative, iv.util_cpu, iv.util_gpu,
             iv.util_accel, iv.active_workers);
    out << line;
  }
}

MetricsTrace run(const Scenario& scenario) {
  Engine engine(scenario);
  return engine.run_all();
}

}  // namespace servesim
