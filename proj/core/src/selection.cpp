#include "servesim/selection.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace servesim {

namespace {

struct Requirements {
  double min_accuracy = 0.0;
  double slo_ms = std::numeric_limits<double>::infinity();
  bool latency_bound = false;  // online by_requirements only
};

Requirements requirements_of(const QueryRequest& q) {
  Requirements r;
  if (q.mode == QueryMode::ByRequirements) {
    r.min_accuracy = *q.min_accuracy;
    if (q.kind == QueryKind::Online) {
      r.slo_ms = *q.latency_slo_ms;
      r.latency_bound = true;
    }
  }
  return r;
}

bool variant_matches(const VariantProfile& v, const QueryRequest& q,
                     const Requirements& r, const SelectionConfig& cfg) {
  if (cfg.model_filter && v.arch_id != *cfg.model_filter) return false;
  if (!v.has_batch(q.batch)) return false;
  return v.accuracy >= r.min_accuracy;
}

// Active instances with headroom (below saturation), excluding Overloaded and
// Interfered records.
std::vector<const InstanceRecord*> serving_instances(
    const MetadataStore& store, const std::string& variant_id) {
  std::vector<const InstanceRecord*> out;
  double saturation = store.profile(variant_id).saturation_qps;
  for (const InstanceRecord* rec : store.instances_of_variant(variant_id)) {
    if (rec->state != InstanceState::Active) continue;
    if (rec->current_qps >= saturation) continue;
    out.push_back(rec);
  }
  return out;
}

std::optional<Placement> try_active(const QueryRequest& q,
                                    const MetadataStore& store,
                                    const Requirements& r,
                                    const SelectionConfig& cfg) {
  auto candidates = store.candidates_by_requirements(
      q.app_id, r.min_accuracy, r.slo_ms, StateFilter::only_active());

  struct Option {
    double latency;
    double cost_rate;
    std::string variant_id;
  };
  std::vector<Option> options;
  for (const Candidate& c : candidates) {
    const VariantProfile& v = store.profile(c.variant_id);
    if (!variant_matches(v, q, r, cfg)) continue;
    double lat = v.inf_latency(q.batch);
    if (r.latency_bound && lat > r.slo_ms) continue;
    if (serving_instances(store, c.variant_id).empty()) continue;
    options.push_back({lat, v.cost_rate, c.variant_id});
  }
  if (options.empty()) return std::nullopt;
  std::sort(options.begin(), options.end(), [](const Option& a, const Option& b) {
    return std::tie(a.latency, a.cost_rate, a.variant_id) <
           std::tie(b.latency, b.cost_rate, b.variant_id);
  });
  const Option& best = options.front();
  std::vector<std::string> workers;
  for (const InstanceRecord* rec : serving_instances(store, best.variant_id)) {
    workers.push_back(rec->worker_id);
  }
  const VariantProfile& v = store.profile(best.variant_id);
  std::string worker = store.least_loaded_worker(workers, v.hardware);
  return Placement{best.variant_id, worker, false, best.latency};
}

// Least-utilized worker on the variant's target hardware with sufficient free
// resources; empty when nothing fits.
std::string place_for_load(const MetadataStore& store, const VariantProfile& v) {
  std::vector<std::string> capable;
  for (const auto& [id, w] : store.workers()) {
    if (!w.has_resource(dominant_resource(v.hardware))) continue;
    if (!w.fits(v.resources)) continue;
    capable.push_back(id);
  }
  if (capable.empty()) return {};
  return store.least_loaded_worker(capable, v.hardware);
}

SelectionResult try_load(const QueryRequest& q, const MetadataStore& store,
                         const Requirements& r, const SelectionConfig& cfg,
                         bool cheapest_first) {
  auto candidates = store.candidates_by_requirements(
      q.app_id, r.min_accuracy,
      cheapest_first ? std::numeric_limits<double>::infinity() : r.slo_ms,
      StateFilter::only_inactive());

  struct Option {
    double primary;  // combined latency, or cost rate for offline
    double secondary;
    std::string variant_id;
    double latency;
  };
  std::vector<Option> options;
  for (const Candidate& c : candidates) {
    const VariantProfile& v = store.profile(c.variant_id);
    if (!variant_matches(v, q, r, cfg)) continue;
    double combined = v.inf_latency(q.batch) + v.load_latency_ms;
    if (r.latency_bound && combined > r.slo_ms) continue;
    if (cheapest_first) {
      options.push_back({v.cost_rate, combined, c.variant_id, combined});
    } else {
      options.push_back({combined, v.cost_rate, c.variant_id, combined});
    }
  }
  if (options.empty()) return {};
  std::sort(options.begin(), options.end(), [](const Option& a, const Option& b) {
    return std::tie(a.primary, a.secondary, a.variant_id) <
           std::tie(b.primary, b.secondary, b.variant_id);
  });
  const Option& best = options.front();
  const VariantProfile& v = store.profile(best.variant_id);
  std::string worker = place_for_load(store, v);
  SelectionResult result;
  if (worker.empty()) {
    result.status = SelectionResult::Status::Unplaceable;
    result.vm_scale_signal = true;
    return result;
  }
  result.status = SelectionResult::Status::Placed;
  result.placement = Placement{best.variant_id, worker, true, best.latency};
  return result;
}

std::string closest_suggestion(const QueryRequest& q, const MetadataStore& store,
                               const Requirements& r,
                               const SelectionConfig& cfg) {
  // Min combined latency among accuracy-meeting variants, else max accuracy.
  std::string best_lat_id, best_acc_id;
  double best_lat = std::numeric_limits<double>::infinity();
  double best_acc = -1.0;
  for (const VariantProfile* v : store.variants_of_app(q.app_id)) {
    if (cfg.model_filter && v->arch_id != *cfg.model_filter) continue;
    if (!v->has_batch(q.batch)) continue;
    double combined = v->inf_latency(q.batch) + v->load_latency_ms;
    if (v->accuracy >= r.min_accuracy &&
        (combined < best_lat ||
         (combined == best_lat && v->variant_id < best_lat_id))) {
      best_lat = combined;
      best_lat_id = v->variant_id;
    }
    if (v->accuracy > best_acc ||
        (v->accuracy == best_acc && v->variant_id < best_acc_id)) {
      best_acc = v->accuracy;
      best_acc_id = v->variant_id;
    }
  }
  return !best_lat_id.empty() ? best_lat_id : best_acc_id;
}

SelectionResult select(const QueryRequest& q, const MetadataStore& store,
                       const SelectionConfig& cfg) {
  q.validate();
  Requirements r = requirements_of(q);
  bool offline = q.kind == QueryKind::Offline;

  if (offline && q.mode == QueryMode::ByRequirements) {
    // Latency tolerant: cheapest accuracy-feasible variant, loaded or not.
    SelectionResult loaded = try_load(q, store, r, cfg, /*cheapest_first=*/true);
    if (loaded.placed()) {
      // Prefer an already serving instance of the chosen variant.
      auto serving = serving_instances(store, loaded.placement->variant_id);
      if (!serving.empty()) {
        const VariantProfile& v = store.profile(loaded.placement->variant_id);
        std::vector<std::string> workers;
        for (const InstanceRecord* rec : serving) workers.push_back(rec->worker_id);
        loaded.placement->worker_id = store.least_loaded_worker(workers, v.hardware);
        loaded.placement->needs_load = false;
        loaded.placement->estimated_latency_ms = v.inf_latency(q.batch);
      }
      return loaded;
    }
    if (loaded.status == SelectionResult::Status::Unplaceable) return loaded;
  } else {
    if (auto placement = try_active(q, store, r, cfg)) {
      SelectionResult result;
      result.status = SelectionResult::Status::Placed;
      result.placement = *placement;
      return result;
    }
    SelectionResult loaded = try_load(q, store, r, cfg, /*cheapest_first=*/false);
    if (loaded.status != SelectionResult::Status::NoFeasibleVariant) return loaded;
  }

  SelectionResult result;
  result.status = SelectionResult::Status::NoFeasibleVariant;
  result.suggestion = closest_suggestion(q, store, r, cfg);
  return result;
}

}  // namespace

SelectionResult get_variant_for_query(const QueryRequest& q,
                                      const MetadataStore& store,
                                      const SelectionConfig& cfg) {
  if (q.mode == QueryMode::ByModel) return by_model_dispatch(q, store);
  if (!store.app_registered(q.app_id)) {
    throw std::invalid_argument("unknown app: " + q.app_id);
  }
  return select(q, store, cfg);
}

SelectionResult by_model_dispatch(const QueryRequest& q,
                                  const MetadataStore& store) {
  q.validate();
  const std::string& model = *q.model_name;
  if (!store.arch_registered(model)) {
    throw std::invalid_argument("unknown model: " + model);
  }
  QueryRequest scoped = q;
  scoped.mode = QueryMode::ByModel;
  scoped.app_id = store.app_of_arch(model);
  SelectionConfig cfg;
  cfg.model_filter = model;
  return select(scoped, store, cfg);
}

MigrationPlan mitigate(const InstanceRecord& instance, const MetadataStore& store) {
  if (instance.state != InstanceState::Interfered) {
    throw std::invalid_argument("mitigate requires an Interfered instance");
  }
  const VariantProfile& v = store.profile(instance.variant_id);
  const WorkerState& local = store.worker(instance.worker_id);
  if (local.fits(v.resources)) {
    return {MigrationPlan::Kind::IntraWorker, instance.worker_id};
  }
  std::vector<std::string> capable;
  for (const auto& [id, w] : store.workers()) {
    if (id == instance.worker_id) continue;
    if (!w.has_resource(dominant_resource(v.hardware))) continue;
    if (!w.fits(v.resources)) continue;
    capable.push_back(id);
  }
  if (capable.empty()) return {MigrationPlan::Kind::Escalate, ""};
  return {MigrationPlan::Kind::Remote,
          store.least_loaded_worker(capable, v.hardware)};
}

}  // namespace servesim
