#pragma once

#include <optional>
#include <string>

#include "servesim/metadata_store.hpp"
#include "servesim/query.hpp"

namespace servesim {

struct Placement {
  std::string variant_id;
  std::string worker_id;
  bool needs_load = false;
  double estimated_latency_ms = 0.0;  // includes load latency iff needs_load
};

struct SelectionResult {
  enum class Status { Placed, NoFeasibleVariant, Unplaceable };
  Status status = Status::NoFeasibleVariant;
  std::optional<Placement> placement;
  std::string suggestion;       // closest variant when NoFeasibleVariant
  bool vm_scale_signal = false; // set on Unplaceable

  bool placed() const { return status == Status::Placed; }
};

struct SelectionConfig {
  // Restrict candidates to one model (by_model dispatch path).
  std::optional<std::string> model_filter;
};

/// Query-time variant selection. Prefers an Active instance with headroom on
/// the least-loaded worker running it; falls back to loading the variant with
/// the lowest combined loading + inference latency on the least-utilized
/// worker that fits it; otherwise reports the closest-achievable variant.
/// Never selects an Overloaded or Interfered instance. Offline queries take
/// the cheapest accuracy-feasible variant and ignore the latency SLO.
SelectionResult get_variant_for_query(const QueryRequest& q,
                                      const MetadataStore& store,
                                      const SelectionConfig& cfg = {});

/// Model-pinned dispatch: only variants of q.model_name, no accuracy or SLO
/// filtering, same Active -> Inactive fallback.
SelectionResult by_model_dispatch(const QueryRequest& q,
                                  const MetadataStore& store);

struct MigrationPlan {
  enum class Kind { IntraWorker, Remote, Escalate };
  Kind kind = Kind::Escalate;
  std::string target_worker;  // empty for Escalate
};

/// Mitigation for an Interfered instance: move within the worker when it has
/// free resources of the variant's type, else plan a load on the least-loaded
/// capable worker, else escalate to the VM-autoscaler.
MigrationPlan mitigate(const InstanceRecord& instance, const MetadataStore& store);

}  // namespace servesim
