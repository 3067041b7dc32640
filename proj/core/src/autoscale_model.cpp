#include "servesim/autoscale_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace servesim {

namespace {

constexpr double kEps = 1e-9;

int ceil_div(double need, double unit) {
  if (need <= kEps) return 0;
  return static_cast<int>(std::ceil(need / unit - kEps));
}

// Pivot for replicate/upgrade comparisons: the running variant carrying the
// highest served load, ties to higher count then lower id.
const VariantState* pivot_of(const std::vector<VariantState>& running) {
  const VariantState* best = nullptr;
  for (const VariantState& v : running) {
    if (v.running <= 0) continue;
    if (!best || v.served_qps > best->served_qps ||
        (v.served_qps == best->served_qps &&
         (v.running > best->running ||
          (v.running == best->running &&
           v.profile.variant_id < best->profile.variant_id)))) {
      best = &v;
    }
  }
  return best;
}

ActionClass classify_positive(const VariantState& v, const VariantState* pivot) {
  if (v.running > 0) return ActionClass::Replicate;
  if (!pivot) return ActionClass::Upgrade;
  return v.profile.cost_rate > pivot->profile.cost_rate ? ActionClass::Upgrade
                                                        : ActionClass::Downgrade;
}

}  // namespace

double action_cost(int delta, const VariantProfile& profile, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  double load_s = profile.load_latency_ms / 1000.0;
  return profile.cost_rate *
         (delta + lambda * load_s * std::max(delta, 0));
}

const char* to_string(ActionClass c) {
  switch (c) {
    case ActionClass::Replicate: return "replicate";
    case ActionClass::Upgrade: return "upgrade";
    case ActionClass::Downgrade: return "downgrade";
    case ActionClass::Unload: return "unload";
  }
  return "?";
}

const char* to_string(ConstraintClass c) {
  switch (c) {
    case ConstraintClass::None: return "none";
    case ConstraintClass::Capacity: return "capacity";
    case ConstraintClass::Slo: return "slo";
    case ConstraintClass::Resources: return "resources";
    case ConstraintClass::NonNegative: return "non_negative";
  }
  return "?";
}

ConstraintClass check_plan(const ScalingProblem& problem,
                           const ScalingPlan& plan) {
  double capacity = 0.0;
  std::map<std::string, double> used;
  for (const VariantState& v : problem.variants) {
    int delta = 0;
    auto it = plan.actions.find(v.profile.variant_id);
    if (it != plan.actions.end()) delta = it->second.delta;
    int count = v.running + delta;
    if (count < 0) return ConstraintClass::NonNegative;
    if (delta > 0 && v.profile.batch1_latency_ms() > problem.slo_ms + kEps) {
      return ConstraintClass::Slo;
    }
    capacity += v.profile.saturation_qps * count;
    for (const auto& [type, amount] : v.profile.resources) {
      used[type] += amount * count;
    }
  }
  if (capacity + kEps < problem.load_qps + problem.slack_qps) {
    return ConstraintClass::Capacity;
  }
  for (const auto& [type, amount] : used) {
    auto it = problem.resources_total.find(type);
    double total = it == problem.resources_total.end() ? 0.0 : it->second;
    if (amount > total + kEps) return ConstraintClass::Resources;
  }
  return ConstraintClass::None;
}

namespace {

struct SearchVariant {
  const VariantState* state;
  int delta_min;
  int delta_max;
  double min_cost;  // cost at delta_min (cost is increasing in delta)
};

struct IlpSearch {
  const ScalingProblem& problem;
  std::vector<SearchVariant> vars;
  std::vector<double> suffix_min_cost;
  std::vector<double> suffix_max_capacity;
  double target;  // L + slack
  std::vector<int> current;
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;

  explicit IlpSearch(const ScalingProblem& p) : problem(p), target(p.load_qps + p.slack_qps) {}

  void dfs(size_t i, double cost, double capacity,
           std::map<std::string, double>& used) {
    if (cost + suffix_min_cost[i] >= best_cost - kEps) return;
    if (capacity + suffix_max_capacity[i] + kEps < target) return;
    if (i == vars.size()) {
      if (capacity + kEps >= target) {
        best_cost = cost;
        best = current;
        found = true;
      }
      return;
    }
    const SearchVariant& sv = vars[i];
    const VariantProfile& prof = sv.state->profile;
    for (int delta = sv.delta_min; delta <= sv.delta_max; ++delta) {
      int count = sv.state->running + delta;
      bool fits = true;
      for (const auto& [type, amount] : prof.resources) {
        if (amount <= 0.0) continue;
        double next = used[type] + amount * count;
        auto t = problem.resources_total.find(type);
        double total = t == problem.resources_total.end() ? 0.0 : t->second;
        if (next > total + kEps) {
          fits = false;
          break;
        }
      }
      if (!fits) break;  // deltas ascend and usage grows with delta
      for (const auto& [type, amount] : prof.resources) used[type] += amount * count;
      current[i] = delta;
      dfs(i + 1, cost + action_cost(delta, prof, problem.lambda),
          capacity + prof.saturation_qps * count, used);
      for (const auto& [type, amount] : prof.resources) used[type] -= amount * count;
    }
    current[i] = 0;
  }
};

}  // namespace

IlpResult solve_ilp(const ScalingProblem& problem, int max_variants) {
  if (static_cast<int>(problem.variants.size()) > max_variants) {
    throw std::invalid_argument("instance exceeds exact-search cap");
  }
  IlpSearch search(problem);
  bool any_slo_ok = false;
  for (const VariantState& v : problem.variants) {
    SearchVariant sv;
    sv.state = &v;
    sv.delta_min = -v.running;
    bool slo_ok = v.profile.batch1_latency_ms() <= problem.slo_ms + kEps;
    any_slo_ok = any_slo_ok || slo_ok;
    int dmax = 0;
    if (slo_ok) {
      // Enough instances of this variant alone to cover the target; more is
      // never cheaper.
      dmax = ceil_div(search.target, v.profile.saturation_qps);
      for (const auto& [type, amount] : v.profile.resources) {
        if (amount <= 0.0) continue;
        auto t = problem.resources_total.find(type);
        double total = t == problem.resources_total.end() ? 0.0 : t->second;
        dmax = std::min(dmax, static_cast<int>(total / amount + kEps) - v.running);
      }
      dmax = std::min(dmax, problem.delta_cap);
    }
    sv.delta_max = std::max(dmax, 0);
    sv.min_cost = action_cost(sv.delta_min, v.profile, problem.lambda);
    search.vars.push_back(sv);
  }

  size_t n = search.vars.size();
  search.suffix_min_cost.assign(n + 1, 0.0);
  search.suffix_max_capacity.assign(n + 1, 0.0);
  for (size_t i = n; i-- > 0;) {
    const SearchVariant& sv = search.vars[i];
    search.suffix_min_cost[i] = search.suffix_min_cost[i + 1] + sv.min_cost;
    search.suffix_max_capacity[i] =
        search.suffix_max_capacity[i + 1] +
        sv.state->profile.saturation_qps * (sv.state->running + sv.delta_max);
  }
  search.current.assign(n, 0);
  std::map<std::string, double> used;
  search.dfs(0, 0.0, 0.0, used);

  IlpResult result;
  if (!search.found) {
    // Diagnose the binding constraint class.
    double cap_unbounded = 0.0;
    double cap_ignoring_slo = 0.0;
    for (const VariantState& v : problem.variants) {
      double per = v.profile.saturation_qps;
      int need = std::min(ceil_div(search.target, per), problem.delta_cap);
      cap_ignoring_slo += per * (v.running + need);
      bool slo_ok = v.profile.batch1_latency_ms() <= problem.slo_ms + kEps;
      cap_unbounded += per * (v.running + (slo_ok ? need : 0));
    }
    if (cap_unbounded + kEps >= search.target) {
      result.violated = ConstraintClass::Resources;
    } else if (cap_ignoring_slo + kEps >= search.target) {
      result.violated = ConstraintClass::Slo;
    } else {
      result.violated = ConstraintClass::Capacity;
    }
    return result;
  }

  result.feasible = true;
  const VariantState* pivot = pivot_of(problem.variants);
  for (size_t i = 0; i < n; ++i) {
    int delta = search.best[i];
    if (delta == 0) continue;
    const VariantState& v = *search.vars[i].state;
    ScalingAction action;
    action.delta = delta;
    action.cls = delta < 0 ? ActionClass::Unload : classify_positive(v, pivot);
    result.plan.actions[v.profile.variant_id] = action;
  }
  result.plan.total_cost = search.best_cost;
  result.plan.trigger = "ilp";
  return result;
}

double headroom(const std::vector<VariantState>& running) {
  double capacity = 0.0;
  double served = 0.0;
  bool any = false;
  for (const VariantState& v : running) {
    if (v.running <= 0) continue;
    any = true;
    capacity += v.profile.saturation_qps * v.running;
    served += v.served_qps;
  }
  if (!any) throw std::invalid_argument("headroom requires a running instance");
  if (served <= 0.0) return std::numeric_limits<double>::infinity();
  return capacity / served;
}

namespace {

bool exceeds_free(const std::map<std::string, double>& free_resources,
                  const VariantProfile& profile, int count) {
  for (const auto& [type, amount] : profile.resources) {
    if (amount <= 0.0) continue;
    auto it = free_resources.find(type);
    double avail = it == free_resources.end() ? 0.0 : it->second;
    if (amount * count > avail + kEps) return true;
  }
  return false;
}

}  // namespace

ScalingPlan greedy_scale_up(const GreedyInput& in) {
  ScalingPlan plan;
  const VariantState* pivot = pivot_of(in.running);
  if (!pivot) {
    plan.trigger = "escalate_vm";
    return plan;
  }
  double h = headroom(in.running);
  if (h >= in.slack_threshold) return plan;  // trigger not met

  double required = in.slack_threshold * in.load_qps;
  double existing = 0.0;
  for (const VariantState& v : in.running) {
    existing += v.profile.saturation_qps * v.running;
  }
  double shortfall = required - existing;
  if (shortfall <= kEps) return plan;

  struct Option {
    double cost;
    const VariantProfile* profile;
    int count;
    bool replicate;
  };
  std::vector<Option> options;

  int k = std::max(1, ceil_div(shortfall, pivot->profile.saturation_qps));
  options.push_back(
      {action_cost(k, pivot->profile, in.lambda), &pivot->profile, k, true});

  for (const VariantProfile& c : in.candidates) {
    if (c.arch_id != pivot->profile.arch_id) continue;
    if (c.variant_id == pivot->profile.variant_id) continue;
    if (c.batch1_latency_ms() > in.slo_ms + kEps) continue;
    if (c.saturation_qps <= pivot->profile.saturation_qps) continue;
    int m = std::max(1, ceil_div(shortfall, c.saturation_qps));
    options.push_back({action_cost(m, c, in.lambda), &c, m, false});
  }

  std::sort(options.begin(), options.end(), [](const Option& a, const Option& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.replicate != b.replicate) return a.replicate;
    return a.profile->variant_id < b.profile->variant_id;
  });
  const Option& best = options.front();

  ScalingAction action;
  action.delta = best.count;
  action.cls = best.replicate
                   ? ActionClass::Replicate
                   : (best.profile->cost_rate > pivot->profile.cost_rate
                          ? ActionClass::Upgrade
                          : ActionClass::Downgrade);
  plan.actions[best.profile->variant_id] = action;
  plan.total_cost = best.cost;
  plan.needs_controller_placement =
      exceeds_free(in.free_resources, *best.profile, best.count);
  plan.trigger = "headroom_below_threshold";
  return plan;
}

std::optional<ScaleDownPlan> greedy_scale_down(const GreedyInput& in) {
  const VariantState* pivot = pivot_of(in.running);
  if (!pivot) return std::nullopt;

  double required = in.slack_threshold * in.load_qps;
  double existing = 0.0;
  for (const VariantState& v : in.running) {
    existing += v.profile.saturation_qps * v.running;
  }

  struct Option {
    double objective;
    ScalingPlan plan;
  };
  std::vector<Option> options;

  // Remove one replica of the pivot.
  if (existing - pivot->profile.saturation_qps + kEps >= required) {
    ScalingPlan p;
    p.actions[pivot->profile.variant_id] = {-1, ActionClass::Unload};
    p.total_cost = action_cost(-1, pivot->profile, in.lambda);
    p.trigger = "scale_down_remove";
    options.push_back({p.total_cost, std::move(p)});
  }

  // Swap every pivot instance for a cheaper same-architecture variant.
  double others = existing - pivot->profile.saturation_qps * pivot->running;
  for (const VariantProfile& c : in.candidates) {
    if (c.arch_id != pivot->profile.arch_id) continue;
    if (c.variant_id == pivot->profile.variant_id) continue;
    if (c.cost_rate + kEps >= pivot->profile.cost_rate) continue;
    if (c.batch1_latency_ms() > in.slo_ms + kEps) continue;
    int m = ceil_div(required - others, c.saturation_qps);
    // Steady-state spend must actually drop.
    if (m * c.cost_rate + kEps >= pivot->running * pivot->profile.cost_rate) {
      continue;
    }
    ScalingPlan p;
    p.actions[pivot->profile.variant_id] = {-pivot->running, ActionClass::Unload};
    if (m > 0) p.actions[c.variant_id] = {m, ActionClass::Downgrade};
    p.total_cost = action_cost(-pivot->running, pivot->profile, in.lambda) +
                   action_cost(m, c, in.lambda);
    p.trigger = "scale_down_downgrade";
    options.push_back({p.total_cost, std::move(p)});
  }

  if (options.empty()) return std::nullopt;
  std::stable_sort(options.begin(), options.end(),
                   [](const Option& a, const Option& b) {
                     return a.objective < b.objective;
                   });
  ScaleDownPlan out;
  out.plan = std::move(options.front().plan);
  out.delay_ms = pivot->profile.load_latency_ms;
  return out;
}

}  // namespace servesim
