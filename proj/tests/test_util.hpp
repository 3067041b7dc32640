#pragma once

// Shared fixtures and independent oracles used by the unit and acceptance
// suites. The oracles deliberately re-derive expected results by brute force
// so they can disagree with the library if the library regresses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "servesim/catalog.hpp"
#include "servesim/metadata_store.hpp"
#include "servesim/query.hpp"
#include "servesim/selection.hpp"

namespace testutil {

using namespace servesim;

// The three reference profiles used across golden tests:
//   fast-cheap:   200 ms,   5 QPS, cost 1
//   mid:           20 ms, 100 QPS, cost 3
//   fast-costly:   15 ms, 800 QPS, cost 16
inline VariantProfile ref_profile(const std::string& id, double inf_ms,
                                  double qps, double cost,
                                  double load_ms = 0.0,
                                  const std::string& arch = "resnet",
                                  double accuracy = 0.9,
                                  Hardware hw = Hardware::CPU) {
  VariantProfile v;
  v.variant_id = id;
  v.arch_id = arch;
  v.hardware = hw;
  v.max_batch = 1;
  v.accuracy = accuracy;
  v.inf_latency_ms[1] = inf_ms;
  v.load_latency_ms = load_ms;
  v.saturation_qps = qps;
  v.cost_rate = cost;
  return v;
}

inline std::vector<VariantProfile> table_abc(double load_ms = 0.0) {
  return {ref_profile("A", 200.0, 5.0, 1.0, load_ms),
          ref_profile("B", 20.0, 100.0, 3.0, load_ms),
          ref_profile("C", 15.0, 800.0, 16.0, load_ms)};
}

// --- Brute-force selection oracle -----------------------------------------

struct OracleResult {
  SelectionResult::Status status = SelectionResult::Status::NoFeasibleVariant;
  std::string variant_id;
  std::string worker_id;
  bool needs_load = false;
  std::string suggestion;
};

inline std::string least_util_worker(const MetadataStore& store,
                                     const std::vector<std::string>& ids,
                                     Hardware hw) {
  std::string best;
  double best_util = std::numeric_limits<double>::infinity();
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const std::string& id : sorted) {
    double u = store.worker(id).util(dominant_resource(hw));
    if (u < best_util) {
      best_util = u;
      best = id;
    }
  }
  return best;
}

// Mirrors the documented online by_requirements semantics by full enumeration.
inline OracleResult selection_oracle(const QueryRequest& q,
                                     const MetadataStore& store) {
  OracleResult out;
  double slo = *q.latency_slo_ms;
  double min_acc = *q.min_accuracy;
  bool offline = q.kind == QueryKind::Offline;

  auto variants = store.variants_of_app(q.app_id);

  if (!offline) {
    // Path (i): Active instance with headroom.
    struct ActiveOpt {
      double lat, cost;
      std::string id;
    };
    std::vector<ActiveOpt> active;
    for (const VariantProfile* v : variants) {
      if (v->accuracy < min_acc || !v->has_batch(q.batch)) continue;
      double lat = v->inf_latency(q.batch);
      if (lat > slo) continue;
      bool serving = false;
      for (const InstanceRecord* rec : store.instances_of_variant(v->variant_id)) {
        if (rec->state == InstanceState::Active &&
            rec->current_qps < v->saturation_qps) {
          serving = true;
        }
      }
      if (serving) active.push_back({lat, v->cost_rate, v->variant_id});
    }
    if (!active.empty()) {
      std::sort(active.begin(), active.end(),
                [](const ActiveOpt& a, const ActiveOpt& b) {
                  return std::tie(a.lat, a.cost, a.id) <
                         std::tie(b.lat, b.cost, b.id);
                });
      const VariantProfile& v = store.profile(active.front().id);
      std::vector<std::string> workers;
      for (const InstanceRecord* rec : store.instances_of_variant(v.variant_id)) {
        if (rec->state == InstanceState::Active &&
            rec->current_qps < v.saturation_qps) {
          workers.push_back(rec->worker_id);
        }
      }
      out.status = SelectionResult::Status::Placed;
      out.variant_id = v.variant_id;
      out.worker_id = least_util_worker(store, workers, v.hardware);
      out.needs_load = false;
      return out;
    }
  }

  // Path (ii): load the best cold variant.
  struct LoadOpt {
    double primary, secondary;
    std::string id;
  };
  std::vector<LoadOpt> load;
  for (const VariantProfile* v : variants) {
    if (v->accuracy < min_acc || !v->has_batch(q.batch)) continue;
    double combined = v->inf_latency(q.batch) + v->load_latency_ms;
    if (!offline && combined > slo) continue;
    if (offline) {
      load.push_back({v->cost_rate, combined, v->variant_id});
    } else {
      load.push_back({combined, v->cost_rate, v->variant_id});
    }
  }
  if (!load.empty()) {
    std::sort(load.begin(), load.end(), [](const LoadOpt& a, const LoadOpt& b) {
      return std::tie(a.primary, a.secondary, a.id) <
             std::tie(b.primary, b.secondary, b.id);
    });
    const VariantProfile& v = store.profile(load.front().id);
    std::vector<std::string> capable;
    for (const auto& [id, w] : store.workers()) {
      if (w.has_resource(dominant_resource(v.hardware)) && w.fits(v.resources)) {
        capable.push_back(id);
      }
    }
    if (capable.empty()) {
      out.status = SelectionResult::Status::Unplaceable;
      return out;
    }
    out.status = SelectionResult::Status::Placed;
    out.variant_id = v.variant_id;
    out.needs_load = true;
    out.worker_id = least_util_worker(store, capable, v.hardware);
    // Offline placements prefer a serving instance of the chosen variant.
    if (offline) {
      std::vector<std::string> serving;
      for (const InstanceRecord* rec : store.instances_of_variant(v.variant_id)) {
        if (rec->state == InstanceState::Active &&
            rec->current_qps < v.saturation_qps) {
          serving.push_back(rec->worker_id);
        }
      }
      if (!serving.empty()) {
        out.needs_load = false;
        out.worker_id = least_util_worker(store, serving, v.hardware);
      }
    }
    return out;
  }

  // Path (iii): suggestion.
  out.status = SelectionResult::Status::NoFeasibleVariant;
  std::string best_lat_id, best_acc_id;
  double best_lat = std::numeric_limits<double>::infinity();
  double best_acc = -1.0;
  for (const VariantProfile* v : variants) {
    if (!v->has_batch(q.batch)) continue;
    double combined = v->inf_latency(q.batch) + v->load_latency_ms;
    if (v->accuracy >= min_acc &&
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
  out.suggestion = !best_lat_id.empty() ? best_lat_id : best_acc_id;
  return out;
}

// --- Randomized store builder ----------------------------------------------

struct RandomStore {
  MetadataStore store;
  std::string app_id = "app";
};

inline RandomStore make_random_store(std::mt19937_64& rng, int max_variants = 50) {
  RandomStore out;
  std::uniform_int_distribution<int> nvar(1, max_variants);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  int n = nvar(rng);
  ModelArchitecture arch;
  arch.arch_id = "arch";
  arch.declared_accuracy = 1.0;
  std::vector<VariantProfile> variants;
  for (int i = 0; i < n; ++i) {
    VariantProfile v;
    char id[16];
    snprintf(id, sizeof(id), "v%03d", i);
    v.variant_id = id;
    v.arch_id = "arch";
    int hw = static_cast<int>(uni(rng) * 3.0);
    v.hardware = hw == 0 ? Hardware::CPU : hw == 1 ? Hardware::GPU : Hardware::ACCEL;
    v.max_batch = 1;
    v.accuracy = 0.5 + 0.5 * uni(rng);
    v.inf_latency_ms[1] = 1.0 + 299.0 * uni(rng);
    v.load_latency_ms = 500.0 * uni(rng);
    v.saturation_qps = 5.0 + 200.0 * uni(rng);
    v.cost_rate = 0.01 + uni(rng);
    v.resources[dominant_resource(v.hardware)] = 1.0 + 3.0 * uni(rng);
    variants.push_back(std::move(v));
  }
  out.store.register_model(arch, variants, out.app_id);

  int nworkers = 2 + static_cast<int>(uni(rng) * 4.0);
  for (int i = 0; i < nworkers; ++i) {
    WorkerState w;
    char id[16];
    snprintf(id, sizeof(id), "w%02d", i);
    w.worker_id = id;
    int hw = static_cast<int>(uni(rng) * 3.0);
    Hardware h = hw == 0 ? Hardware::CPU : hw == 1 ? Hardware::GPU : Hardware::ACCEL;
    w.total[dominant_resource(h)] = 4.0 + 20.0 * uni(rng);
    if (uni(rng) < 0.4) {  // some workers carry two classes
      Hardware h2 = h == Hardware::CPU ? Hardware::GPU : Hardware::CPU;
      w.total[dominant_resource(h2)] = 4.0 + 20.0 * uni(rng);
    }
    out.store.add_worker(std::move(w));
  }

  // Random instances in random states.
  for (const VariantProfile& v : variants) {
    if (uni(rng) > 0.5) continue;
    int copies = 1 + static_cast<int>(uni(rng) * 2.0);
    for (int c = 0; c < copies; ++c) {
      std::vector<std::string> capable;
      for (const auto& [id, w] : out.store.workers()) {
        if (w.fits(v.resources)) capable.push_back(id);
      }
      if (capable.empty()) break;
      const std::string& worker =
          capable[static_cast<std::size_t>(uni(rng) * capable.size()) %
                  capable.size()];
      InstanceRecord& rec =
          out.store.create_instance(v.variant_id, worker, out.app_id, 0.0);
      std::string key = rec.key();
      double r = uni(rng);
      if (r < 0.15) continue;  // stays Inactive (still loading)
      out.store.apply_event(key, LifecycleEvent::LoadComplete,
                            InstanceState::Active, 0.0);
      InstanceRecord active = *out.store.find_instance(key);
      active.current_qps = 1.5 * v.saturation_qps * uni(rng);
      out.store.update_instance(active);
      if (r < 0.65) continue;  // Active
      InstanceState unhealthy =
          r < 0.85 ? InstanceState::Overloaded : InstanceState::Interfered;
      out.store.apply_event(key, LifecycleEvent::Monitor, unhealthy, 1.0);
    }
  }
  return out;
}

}  // namespace testutil
