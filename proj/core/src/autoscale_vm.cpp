#include "servesim/autoscale_vm.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace servesim {

namespace {

constexpr Hardware kClasses[] = {Hardware::CPU, Hardware::GPU, Hardware::ACCEL};

bool pending_for(const ClusterView& view, Hardware hw) {
  for (const auto& p : view.pending) {
    if (p.hardware == hw) return true;
  }
  return false;
}

}  // namespace

std::vector<VmAction> vm_scale_decision(const ClusterView& view, double now_ms,
                                        const VmConfig& cfg) {
  std::vector<VmAction> actions;
  std::set<Hardware> added;

  for (Hardware hw : kClasses) {
    int with_hw = 0;
    int hot = 0;
    int interfered = 0;
    for (const auto& w : view.workers) {
      if (!w.hardware.count(hw)) continue;
      ++with_hw;
      auto u = w.util.find(hw);
      if (u != w.util.end() && u->second > cfg.util_threshold) ++hot;
      auto i = w.interfered_on.find(hw);
      if (i != w.interfered_on.end() && i->second) ++interfered;
    }
    if (with_hw == 0 || pending_for(view, hw) || added.count(hw)) continue;
    if (hot == with_hw) {
      actions.push_back({VmAction::Kind::AddWorker, hw, "", 1});
      added.insert(hw);
    } else if (interfered == with_hw) {
      actions.push_back({VmAction::Kind::AddWorker, hw, "", 2});
      added.insert(hw);
    }
  }

  // R3: share of workers with an Overloaded instance, any hardware.
  if (!view.workers.empty()) {
    int overloaded_workers = 0;
    std::map<Hardware, int> overloaded_by_class;
    for (const auto& w : view.workers) {
      if (w.has_overloaded) ++overloaded_workers;
      for (const auto& [hw, count] : w.overloaded_on) {
        overloaded_by_class[hw] += count;
      }
    }
    double share =
        static_cast<double>(overloaded_workers) / view.workers.size();
    if (share > cfg.overloaded_share) {
      Hardware target = Hardware::CPU;
      int most = -1;
      for (Hardware hw : kClasses) {
        auto it = overloaded_by_class.find(hw);
        int count = it == overloaded_by_class.end() ? 0 : it->second;
        if (count > most) {
          most = count;
          target = hw;
        }
      }
      if (!pending_for(view, target) && !added.count(target)) {
        actions.push_back({VmAction::Kind::AddWorker, target, "", 3});
      }
    }
  }

  // Idle scale-down, guarded against removing freshly added workers.
  for (const auto& w : view.workers) {
    if (!w.idle) continue;
    if (now_ms - w.idle_since_ms < cfg.idle_remove_ms) continue;
    if (now_ms < w.start_time_ms + cfg.startup_latency_ms + cfg.idle_remove_ms) {
      continue;
    }
    Hardware hw = w.hardware.empty() ? Hardware::CPU : *w.hardware.begin();
    actions.push_back({VmAction::Kind::RemoveWorker, hw, w.worker_id, 0});
  }

  return actions;
}

BinPackResult dispatch_bin_pack(const std::vector<BinPackCandidate>& candidates,
                                const std::map<std::string, double>& demand,
                                const std::string& dominant_type) {
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  double demand_dominant = 0.0;
  auto d = demand.find(dominant_type);
  if (d != demand.end()) demand_dominant = d->second;

  BinPackResult result;
  double best_leftover = std::numeric_limits<double>::infinity();
  for (const BinPackCandidate& c : candidates) {
    bool fits = true;
    for (const auto& [type, amount] : demand) {
      auto f = c.free.find(type);
      double avail = f == c.free.end() ? 0.0 : f->second;
      if (amount > avail) {
        fits = false;
        break;
      }
    }
    if (!fits) continue;
    auto f = c.free.find(dominant_type);
    double leftover = (f == c.free.end() ? 0.0 : f->second) - demand_dominant;
    if (leftover < best_leftover ||
        (leftover == best_leftover &&
         (!result.placed || c.worker_id < result.worker_id))) {
      best_leftover = leftover;
      result.placed = true;
      result.worker_id = c.worker_id;
    }
  }
  return result;
}

}  // namespace servesim
