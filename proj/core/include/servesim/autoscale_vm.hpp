#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "servesim/catalog.hpp"

namespace servesim {

/// Controller-side snapshot used for VM-level scaling decisions.
struct ClusterView {
  struct WorkerInfo {
    std::string worker_id;
    std::set<Hardware> hardware;              // resource classes present
    std::map<Hardware, double> util;          // dominant-resource utilization
    std::map<Hardware, bool> interfered_on;   // hosts an Interfered instance
    std::map<Hardware, int> overloaded_on;    // Overloaded instances per class
    bool has_overloaded = false;
    bool idle = false;            // no instances and zero load
    double idle_since_ms = 0.0;
    double start_time_ms = 0.0;
  };
  struct PendingWorker {
    Hardware hardware;
    double ready_at_ms = 0.0;
  };
  std::vector<WorkerInfo> workers;
  std::vector<PendingWorker> pending;
};

struct VmConfig {
  double util_threshold = 0.8;      // rule R1
  double overloaded_share = 0.8;    // rule R3
  double startup_latency_ms = 30'000.0;
  double idle_remove_ms = 60'000.0;
};

struct VmAction {
  enum class Kind { AddWorker, RemoveWorker };
  Kind kind = Kind::AddWorker;
  Hardware hardware = Hardware::CPU;
  std::string worker_id;  // RemoveWorker only
  int rule = 0;           // 1..3 for adds, 0 for removals
};

/// Scale-up rules, evaluated per hardware class H:
///   R1: every worker having H runs H above util_threshold.
///   R2: every worker having H hosts an Interfered instance on H.
///   R3: more than overloaded_share of all workers have an Overloaded
///       instance; the new worker gets the class hosting the most of them.
/// A pending startup of class H suppresses further adds of H. Scale-down
/// removes a worker idle for idle_remove_ms, but never before
/// start + startup latency + idle window.
std::vector<VmAction> vm_scale_decision(const ClusterView& view, double now_ms,
                                        const VmConfig& cfg = {});

struct BinPackCandidate {
  std::string worker_id;
  std::map<std::string, double> free;
};

struct BinPackResult {
  bool placed = false;
  std::string worker_id;
};

/// Best-fit online packing on the dominant resource: the worker whose free
/// dominant-resource amount after placement is smallest but non-negative,
/// provided every demanded type fits. Ties break to the lowest worker_id.
BinPackResult dispatch_bin_pack(const std::vector<BinPackCandidate>& candidates,
                                const std::map<std::string, double>& demand,
                                const std::string& dominant_type);

}  // namespace servesim
