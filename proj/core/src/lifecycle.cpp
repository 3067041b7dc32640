#include "servesim/lifecycle.hpp"

#include <stdexcept>

namespace servesim {

const char* to_string(InstanceState s) {
  switch (s) {
    case InstanceState::Inactive: return "Inactive";
    case InstanceState::Active: return "Active";
    case InstanceState::Overloaded: return "Overloaded";
    case InstanceState::Interfered: return "Interfered";
  }
  return "?";
}

bool legal_edge(InstanceState from, InstanceState to) {
  if (from == to) return false;
  switch (from) {
    case InstanceState::Inactive:
      return to == InstanceState::Active;
    case InstanceState::Active:
      return to == InstanceState::Overloaded || to == InstanceState::Interfered ||
             to == InstanceState::Inactive;
    case InstanceState::Overloaded:
    case InstanceState::Interfered:
      return to == InstanceState::Active || to == InstanceState::Inactive;
  }
  return false;
}

InstanceRecord transition(InstanceRecord record, LifecycleEvent event,
                          InstanceState monitor_target, double now_ms) {
  InstanceState target = record.state;
  switch (event) {
    case LifecycleEvent::LoadComplete:
      if (record.state != InstanceState::Inactive) {
        throw std::invalid_argument(std::string("illegal edge: ") +
                                    to_string(record.state) +
                                    " -> Active (load_complete)");
      }
      target = InstanceState::Active;
      break;
    case LifecycleEvent::Unload:
      if (record.state == InstanceState::Inactive) {
        throw std::invalid_argument("illegal edge: Inactive -> Inactive (unload)");
      }
      target = InstanceState::Inactive;
      break;
    case LifecycleEvent::Monitor:
      if (monitor_target == InstanceState::Inactive ||
          record.state == InstanceState::Inactive) {
        throw std::invalid_argument("illegal edge: monitor cannot enter or "
                                    "leave Inactive");
      }
      target = monitor_target;
      break;
    case LifecycleEvent::Mitigated:
      if (record.state != InstanceState::Overloaded &&
          record.state != InstanceState::Interfered) {
        throw std::invalid_argument(std::string("illegal edge: ") +
                                    to_string(record.state) +
                                    " -> Active (mitigated)");
      }
      target = InstanceState::Active;
      break;
  }
  if (target != record.state) {
    if (!legal_edge(record.state, target)) {
      throw std::invalid_argument(std::string("illegal edge: ") +
                                  to_string(record.state) + " -> " +
                                  to_string(target));
    }
    record.state = target;
    record.since_ms = now_ms;
    if (target == InstanceState::Inactive) record.current_qps = 0.0;
  }
  return record;
}

InstanceState classify(const MonitorSample& sample, const VariantProfile& profile,
                       double interference_factor) {
  if (sample.window_qps < 0.0 || sample.window_avg_latency_ms < 0.0) {
    throw std::invalid_argument("negative monitor sample");
  }
  if (sample.window_qps >= profile.saturation_qps) {
    return InstanceState::Overloaded;
  }
  double profiled = profile.inf_latency(sample.serving_batch);
  if (sample.window_avg_latency_ms > interference_factor * profiled) {
    return InstanceState::Interfered;
  }
  return InstanceState::Active;
}

}  // namespace servesim
