#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "servesim/catalog.hpp"
#include "servesim/lifecycle.hpp"

namespace servesim {

struct WorkerState {
  std::string worker_id;
  std::map<std::string, double> total;  // resource type -> amount
  std::map<std::string, double> used;
  double start_time_ms = 0.0;

  bool has_resource(const std::string& type) const {
    auto it = total.find(type);
    return it != total.end() && it->second > 0.0;
  }
  double free_amount(const std::string& type) const;
  /// used/total for a resource type, in [0,1]; 0 when the type is absent.
  double util(const std::string& type) const;
  bool fits(const std::map<std::string, double>& demand) const;
};

struct Candidate {
  std::string variant_id;
  double key_latency_ms = 0.0;
};

/// Which lifecycle population a candidate query runs against. Inactive means
/// "loadable": every registered variant qualifies, keyed by combined
/// loading + inference latency. The loaded filters key by batch-1 inference
/// latency and require at least one instance in a matching state.
struct StateFilter {
  bool inactive = false;
  bool active = false;
  bool overloaded = false;
  bool interfered = false;

  static StateFilter only_active() { return {.active = true}; }
  static StateFilter only_inactive() { return {.inactive = true}; }
};

/// Central registry of variants, instances, and worker stats. Lookups run
/// against ordered secondary indexes (latency-sorted per app) so candidate
/// retrieval is an ordered prefix walk, not a full scan.
///
/// Single-writer, multi-reader: all mutations go through one caller.
class MetadataStore {
 public:
  struct Registration {
    std::string app_id;
    std::string arch_id;
    int variant_count = 0;
  };

  Registration register_model(const ModelArchitecture& arch,
                              const std::vector<VariantProfile>& variants,
                              const std::string& app_id);

  /// Variants of `app_id` with accuracy >= min_accuracy and key latency
  /// <= latency_budget_ms, ascending by (key latency, variant_id).
  std::vector<Candidate> candidates_by_requirements(const std::string& app_id,
                                                    double min_accuracy,
                                                    double latency_budget_ms,
                                                    StateFilter filter) const;

  /// Creates an Inactive record (next free replica index) and reserves the
  /// variant's resources on the worker. Rejects over-commit.
  InstanceRecord& create_instance(const std::string& variant_id,
                                  const std::string& worker_id,
                                  const std::string& app_id, double now_ms);

  /// Applies a lifecycle event to an instance; Unload releases resources and
  /// removes the record. `key` is InstanceRecord::key().
  InstanceRecord apply_event(const std::string& key, LifecycleEvent event,
                             InstanceState monitor_target, double now_ms);

  /// Replaces a record after validating the state edge. State indexes are
  /// updated in the same step.
  void update_instance(const InstanceRecord& record);

  /// Worker among `candidates` with the lowest utilization on the dominant
  /// resource of `hw`; ties break to the lowest worker_id.
  std::string least_loaded_worker(const std::vector<std::string>& candidates,
                                  Hardware hw) const;

  void add_worker(WorkerState worker);
  void remove_worker(const std::string& worker_id);
  const WorkerState& worker(const std::string& id) const;
  WorkerState& worker_mut(const std::string& id);
  const std::map<std::string, WorkerState>& workers() const { return workers_; }

  bool app_registered(const std::string& app_id) const {
    return apps_.count(app_id) > 0;
  }
  bool arch_registered(const std::string& arch_id) const {
    return arch_to_app_.count(arch_id) > 0;
  }
  const VariantProfile& profile(const std::string& variant_id) const;
  std::vector<const VariantProfile*> variants_of_arch(
      const std::string& arch_id) const;
  std::vector<const VariantProfile*> variants_of_app(
      const std::string& app_id) const;
  std::string app_of_arch(const std::string& arch_id) const;

  const InstanceRecord* find_instance(const std::string& key) const;
  std::vector<const InstanceRecord*> instances_of_variant(
      const std::string& variant_id) const;
  std::vector<const InstanceRecord*> instances_on_worker(
      const std::string& worker_id) const;
  std::vector<const InstanceRecord*> instances_in_state(InstanceState s) const;
  bool variant_has_state(const std::string& variant_id, InstanceState s) const;

  /// Full store state as stable-ordered text, for debugging and golden tests.
  void dump(std::ostream& out) const;

 private:
  struct AppIndex {
    // (batch-1 inference latency, variant_id) and
    // (batch-1 inference + load latency, variant_id)
    std::set<std::pair<double, std::string>> by_inf_latency;
    std::set<std::pair<double, std::string>> by_combined_latency;
    std::set<std::string> arch_ids;
  };

  void index_state(const std::string& key, InstanceState s);
  void unindex_state(const std::string& key, InstanceState s);

  std::map<std::string, ModelArchitecture> architectures_;
  std::map<std::string, VariantProfile> variants_;
  std::map<std::string, AppIndex> apps_;
  std::map<std::string, std::string> arch_to_app_;
  std::map<std::string, InstanceRecord> instances_;  // key: variant@worker
  std::map<InstanceState, std::set<std::string>> state_buckets_;
  std::map<std::string, std::set<std::string>> variant_instances_;
  std::map<std::string, std::set<std::string>> worker_instances_;
  std::map<std::string, WorkerState> workers_;
};

}  // namespace servesim
