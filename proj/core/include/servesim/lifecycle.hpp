#pragma once

#include <string>

#include "servesim/catalog.hpp"

namespace servesim {

enum class InstanceState { Inactive, Active, Overloaded, Interfered };

const char* to_string(InstanceState s);

/// Lifecycle events driving instance state transitions.
enum class LifecycleEvent { LoadComplete, Unload, Monitor, Mitigated };

/// Edge set of the instance state machine:
///   Inactive -> Active                        (load_complete)
///   Active   -> Overloaded | Interfered       (monitor)
///   Overloaded | Interfered -> Active         (monitor healthy, mitigated)
///   any loaded state -> Inactive              (unload)
bool legal_edge(InstanceState from, InstanceState to);

/// A loaded (or loading) variant on a worker, keyed by {variant, worker}.
struct InstanceRecord {
  std::string variant_id;
  std::string worker_id;
  std::string app_id;
  int replica = 0;  // distinguishes co-located replicas of one variant
  InstanceState state = InstanceState::Inactive;
  double current_qps = 0.0;
  double observed_latency_ms = 0.0;  // exponentially smoothed
  double since_ms = 0.0;             // simulation time of last state change

  std::string key() const {
    return variant_id + "@" + worker_id + "#" + std::to_string(replica);
  }
};

/// Applies an event to a record, enforcing the edge set. `monitor_target`
/// is consulted only for Monitor events. Throws on an illegal edge, naming it.
InstanceRecord transition(InstanceRecord record, LifecycleEvent event,
                          InstanceState monitor_target, double now_ms);

/// One monitoring-window observation of a loaded instance.
struct MonitorSample {
  std::string variant_id;
  std::string worker_id;
  double window_qps = 0.0;
  double window_avg_latency_ms = 0.0;
  int serving_batch = 1;
};

/// Overloaded if the window throughput reached saturation; otherwise
/// Interfered if the observed latency exceeds interference_factor times the
/// profiled latency at the serving batch; otherwise Active. Overloaded wins
/// over Interfered.
InstanceState classify(const MonitorSample& sample, const VariantProfile& profile,
                       double interference_factor = 1.2);

}  // namespace servesim
