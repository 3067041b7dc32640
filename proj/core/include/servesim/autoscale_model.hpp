#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "servesim/catalog.hpp"

namespace servesim {

/// Objective contribution of one scaling action:
/// cost_rate * (delta + lambda * load_latency_seconds * max(delta, 0)).
double action_cost(int delta, const VariantProfile& profile, double lambda);

enum class ActionClass { Replicate, Upgrade, Downgrade, Unload };
const char* to_string(ActionClass c);

struct ScalingAction {
  int delta = 0;
  ActionClass cls = ActionClass::Replicate;
};

struct ScalingPlan {
  std::map<std::string, ScalingAction> actions;
  double total_cost = 0.0;
  bool needs_controller_placement = false;
  std::string trigger;

  bool empty() const { return actions.empty(); }
};

/// One variant's standing in a scaling problem.
struct VariantState {
  VariantProfile profile;
  int running = 0;       // N_ij
  double served_qps = 0.0;
};

struct ScalingProblem {
  std::vector<VariantState> variants;
  double load_qps = 0.0;   // L
  double slo_ms = 0.0;     // S, bound on newly loaded variants
  double slack_qps = 0.0;  // additive headroom in the capacity constraint
  double lambda = 0.0;
  std::map<std::string, double> resources_total;  // R_total per type
  int delta_cap = 64;  // safety bound on per-variant positive delta
};

enum class ConstraintClass { None, Capacity, Slo, Resources, NonNegative };
const char* to_string(ConstraintClass c);

struct IlpResult {
  bool feasible = false;
  ScalingPlan plan;
  ConstraintClass violated = ConstraintClass::None;
};

/// Exact minimum-cost plan by exhaustive bounded enumeration with
/// branch-and-bound pruning. Feasible plans satisfy
///   sum Q(N+delta) >= L + slack,
///   inf_latency <= S for every delta > 0,
///   sum R(N+delta) <= R_total per type,
///   N + delta >= 0.
/// Intended for small instances (<= 8 variants by default).
IlpResult solve_ilp(const ScalingProblem& problem, int max_variants = 8);

/// Checks a plan against the four constraints; returns the first violated
/// class, or None.
ConstraintClass check_plan(const ScalingProblem& problem, const ScalingPlan& plan);

/// Ratio of combined saturation throughput to combined served load across the
/// running variants; +infinity when nothing is being served.
double headroom(const std::vector<VariantState>& running);

/// Worker-local view for the greedy heuristic.
struct GreedyInput {
  std::vector<VariantState> running;        // running variants on the worker
  std::vector<VariantProfile> candidates;   // same-architecture alternatives
  double load_qps = 0.0;
  double slo_ms = 0.0;
  double lambda = 0.0;
  double slack_threshold = 1.05;
  std::map<std::string, double> free_resources;  // local worker headroom
};

/// Replicate-vs-upgrade decision when headroom dropped below the
/// slack-threshold: compares the minimum-instance replicate plan against
/// upgrade plans for faster same-architecture SLO-meeting variants and
/// returns the cheaper objective. Plans whose resources exceed the local
/// worker are tagged for controller placement. Returns an empty plan when
/// headroom is already sufficient.
ScalingPlan greedy_scale_up(const GreedyInput& in);

struct ScaleDownPlan {
  ScalingPlan plan;
  double delay_ms = 0.0;  // T_v: loading latency of the affected variant
};

/// Remove-replica or downgrade plan when the load stays sustainable without
/// the removed capacity. Execution must be delayed by delay_ms and cancelled
/// if load rises in the meantime (the caller owns the pending state).
std::optional<ScaleDownPlan> greedy_scale_down(const GreedyInput& in);

}  // namespace servesim
