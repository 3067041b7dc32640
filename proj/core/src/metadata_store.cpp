#include "servesim/metadata_store.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace servesim {

double WorkerState::free_amount(const std::string& type) const {
  auto t = total.find(type);
  if (t == total.end()) return 0.0;
  auto u = used.find(type);
  return t->second - (u == used.end() ? 0.0 : u->second);
}

double WorkerState::util(const std::string& type) const {
  auto t = total.find(type);
  if (t == total.end() || t->second <= 0.0) return 0.0;
  auto u = used.find(type);
  double frac = (u == used.end() ? 0.0 : u->second) / t->second;
  return std::clamp(frac, 0.0, 1.0);
}

bool WorkerState::fits(const std::map<std::string, double>& demand) const {
  for (const auto& [type, amount] : demand) {
    if (amount > 0.0 && free_amount(type) < amount) return false;
  }
  return true;
}

MetadataStore::Registration MetadataStore::register_model(
    const ModelArchitecture& arch, const std::vector<VariantProfile>& variants,
    const std::string& app_id) {
  auto existing = arch_to_app_.find(arch.arch_id);
  if (existing != arch_to_app_.end() && existing->second == app_id) {
    throw std::invalid_argument("duplicate registration: " + arch.arch_id +
                                " already registered for app " + app_id);
  }
  for (const VariantProfile& v : variants) {
    if (v.arch_id != arch.arch_id) {
      throw std::invalid_argument("variant " + v.variant_id +
                                  " references unknown arch " + v.arch_id);
    }
    v.validate();
    if (variants_.count(v.variant_id)) {
      throw std::invalid_argument("duplicate variant_id: " + v.variant_id);
    }
  }
  architectures_[arch.arch_id] = arch;
  architectures_[arch.arch_id].app_ids.insert(app_id);
  arch_to_app_[arch.arch_id] = app_id;
  AppIndex& idx = apps_[app_id];
  idx.arch_ids.insert(arch.arch_id);
  for (const VariantProfile& v : variants) {
    variants_.emplace(v.variant_id, v);
    idx.by_inf_latency.insert({v.batch1_latency_ms(), v.variant_id});
    idx.by_combined_latency.insert(
        {v.batch1_latency_ms() + v.load_latency_ms, v.variant_id});
  }
  return Registration{app_id, arch.arch_id, static_cast<int>(variants.size())};
}

std::vector<Candidate> MetadataStore::candidates_by_requirements(
    const std::string& app_id, double min_accuracy, double latency_budget_ms,
    StateFilter filter) const {
  auto app = apps_.find(app_id);
  if (app == apps_.end()) throw std::invalid_argument("unknown app: " + app_id);

  const auto& index =
      filter.inactive ? app->second.by_combined_latency : app->second.by_inf_latency;
  std::vector<Candidate> out;
  for (const auto& [latency, variant_id] : index) {
    if (latency > latency_budget_ms) break;  // ordered index: prefix walk
    const VariantProfile& v = variants_.at(variant_id);
    if (v.accuracy < min_accuracy) continue;
    if (!filter.inactive) {
      bool match = (filter.active && variant_has_state(variant_id, InstanceState::Active)) ||
                   (filter.overloaded &&
                    variant_has_state(variant_id, InstanceState::Overloaded)) ||
                   (filter.interfered &&
                    variant_has_state(variant_id, InstanceState::Interfered));
      if (!match) continue;
    }
    out.push_back({variant_id, latency});
  }
  return out;
}

InstanceRecord& MetadataStore::create_instance(const std::string& variant_id,
                                               const std::string& worker_id,
                                               const std::string& app_id,
                                               double now_ms) {
  const VariantProfile& v = profile(variant_id);
  WorkerState& w = worker_mut(worker_id);
  if (!w.fits(v.resources)) {
    throw std::invalid_argument("worker " + worker_id +
                                " lacks resources for " + variant_id);
  }
  for (const auto& [type, amount] : v.resources) w.used[type] += amount;
  InstanceRecord rec;
  rec.variant_id = variant_id;
  rec.worker_id = worker_id;
  rec.app_id = app_id;
  rec.state = InstanceState::Inactive;
  rec.since_ms = now_ms;
  while (instances_.count(rec.key())) ++rec.replica;
  std::string key = rec.key();
  auto [it, ok] = instances_.emplace(key, std::move(rec));
  index_state(key, InstanceState::Inactive);
  variant_instances_[variant_id].insert(key);
  worker_instances_[worker_id].insert(key);
  return it->second;
}

InstanceRecord MetadataStore::apply_event(const std::string& key,
                                          LifecycleEvent event,
                                          InstanceState monitor_target,
                                          double now_ms) {
  auto it = instances_.find(key);
  if (it == instances_.end()) {
    throw std::invalid_argument("unknown instance: " + key);
  }
  InstanceRecord next = transition(it->second, event, monitor_target, now_ms);
  if (event == LifecycleEvent::Unload) {
    const VariantProfile& v = profile(it->second.variant_id);
    WorkerState& w = worker_mut(it->second.worker_id);
    for (const auto& [type, amount] : v.resources) {
      w.used[type] = std::max(0.0, w.used[type] - amount);
    }
    unindex_state(key, it->second.state);
    variant_instances_[it->second.variant_id].erase(key);
    worker_instances_[it->second.worker_id].erase(key);
    instances_.erase(it);
    return next;
  }
  if (next.state != it->second.state) {
    unindex_state(key, it->second.state);
    index_state(key, next.state);
  }
  it->second = next;
  return next;
}

void MetadataStore::update_instance(const InstanceRecord& record) {
  std::string key = record.key();
  auto it = instances_.find(key);
  if (it == instances_.end()) {
    throw std::invalid_argument("unknown instance: " + key);
  }
  if (record.state != it->second.state &&
      !legal_edge(it->second.state, record.state)) {
    throw std::invalid_argument(std::string("illegal edge: ") +
                                to_string(it->second.state) + " -> " +
                                to_string(record.state));
  }
  if (record.state == InstanceState::Inactive && record.current_qps != 0.0) {
    throw std::invalid_argument("Inactive record must carry current_qps = 0");
  }
  if (record.state != it->second.state) {
    unindex_state(key, it->second.state);
    index_state(key, record.state);
  }
  it->second = record;
}

std::string MetadataStore::least_loaded_worker(
    const std::vector<std::string>& candidates, Hardware hw) const {
  if (candidates.empty()) throw std::invalid_argument("no worker");
  const char* type = dominant_resource(hw);
  std::string best;
  double best_util = std::numeric_limits<double>::infinity();
  std::vector<std::string> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  for (const std::string& id : sorted) {
    double u = worker(id).util(type);
    if (u < best_util) {
      best_util = u;
      best = id;
    }
  }
  return best;
}

void MetadataStore::add_worker(WorkerState w) {
  if (workers_.count(w.worker_id)) {
    throw std::invalid_argument("duplicate worker: " + w.worker_id);
  }
  workers_.emplace(w.worker_id, std::move(w));
}

void MetadataStore::remove_worker(const std::string& worker_id) {
  auto inst = worker_instances_.find(worker_id);
  if (inst != worker_instances_.end() && !inst->second.empty()) {
    throw std::invalid_argument("worker " + worker_id + " still has instances");
  }
  worker_instances_.erase(worker_id);
  if (workers_.erase(worker_id) == 0) {
    throw std::invalid_argument("unknown worker: " + worker_id);
  }
}

const WorkerState& MetadataStore::worker(const std::string& id) const {
  auto it = workers_.find(id);
  if (it == workers_.end()) throw std::invalid_argument("unknown worker: " + id);
  return it->second;
}

WorkerState& MetadataStore::worker_mut(const std::string& id) {
  auto it = workers_.find(id);
  if (it == workers_.end()) throw std::invalid_argument("unknown worker: " + id);
  return it->second;
}

const VariantProfile& MetadataStore::profile(const std::string& variant_id) const {
  auto it = variants_.find(variant_id);
  if (it == variants_.end()) {
    throw std::invalid_argument("unknown variant: " + variant_id);
  }
  return it->second;
}

std::vector<const VariantProfile*> MetadataStore::variants_of_arch(
    const std::string& arch_id) const {
  std::vector<const VariantProfile*> out;
  for (const auto& [id, v] : variants_) {
    if (v.arch_id == arch_id) out.push_back(&v);
  }
  return out;
}

std::vector<const VariantProfile*> MetadataStore::variants_of_app(
    const std::string& app_id) const {
  auto app = apps_.find(app_id);
  if (app == apps_.end()) throw std::invalid_argument("unknown app: " + app_id);
  std::vector<const VariantProfile*> out;
  for (const auto& [lat, id] : app->second.by_inf_latency) {
    out.push_back(&variants_.at(id));
  }
  return out;
}

std::string MetadataStore::app_of_arch(const std::string& arch_id) const {
  auto it = arch_to_app_.find(arch_id);
  if (it == arch_to_app_.end()) {
    throw std::invalid_argument("unknown arch: " + arch_id);
  }
  return it->second;
}

const InstanceRecord* MetadataStore::find_instance(const std::string& key) const {
  auto it = instances_.find(key);
  return it == instances_.end() ? nullptr : &it->second;
}

std::vector<const InstanceRecord*> MetadataStore::instances_of_variant(
    const std::string& variant_id) const {
  std::vector<const InstanceRecord*> out;
  auto it = variant_instances_.find(variant_id);
  if (it == variant_instances_.end()) return out;
  for (const std::string& key : it->second) out.push_back(&instances_.at(key));
  return out;
}

std::vector<const InstanceRecord*> MetadataStore::instances_on_worker(
    const std::string& worker_id) const {
  std::vector<const InstanceRecord*> out;
  auto it = worker_instances_.find(worker_id);
  if (it == worker_instances_.end()) return out;
  for (const std::string& key : it->second) out.push_back(&instances_.at(key));
  return out;
}

std::vector<const InstanceRecord*> MetadataStore::instances_in_state(
    InstanceState s) const {
  std::vector<const InstanceRecord*> out;
  auto it = state_buckets_.find(s);
  if (it == state_buckets_.end()) return out;
  for (const std::string& key : it->second) out.push_back(&instances_.at(key));
  return out;
}

bool MetadataStore::variant_has_state(const std::string& variant_id,
                                      InstanceState s) const {
  auto it = variant_instances_.find(variant_id);
  if (it == variant_instances_.end()) return false;
  for (const std::string& key : it->second) {
    if (instances_.at(key).state == s) return true;
  }
  return false;
}

void MetadataStore::index_state(const std::string& key, InstanceState s) {
  state_buckets_[s].insert(key);
}

void MetadataStore::unindex_state(const std::string& key, InstanceState s) {
  auto it = state_buckets_.find(s);
  if (it != state_buckets_.end()) it->second.erase(key);
}

void MetadataStore::dump(std::ostream& out) const {
  out << "[architectures]\n";
  for (const auto& [id, a] : architectures_) {
    out << id << " declared_accuracy=" << a.declared_accuracy << "\n";
  }
  out << "[variants]\n";
  for (const auto& [id, v] : variants_) {
    out << id << " arch=" << v.arch_id << " hw=" << to_string(v.hardware)
        << " batch=" << v.max_batch << " acc=" << v.accuracy
        << " inf1=" << v.batch1_latency_ms() << " load=" << v.load_latency_ms
        << " qps=" << v.saturation_qps << " cost=" << v.cost_rate << "\n";
  }
  out << "[instances]\n";
  for (const auto& [key, r] : instances_) {
    out << key << " app=" << r.app_id << " state=" << to_string(r.state)
        << " qps=" << r.current_qps << " lat=" << r.observed_latency_ms
        << " since=" << r.since_ms << "\n";
  }
  out << "[workers]\n";
  for (const auto& [id, w] : workers_) {
    out << id;
    for (const auto& [type, amount] : w.total) {
      out << " " << type << "=" << w.free_amount(type) << "/" << amount;
    }
    out << "\n";
  }
}

}  // namespace servesim
