#include <cmath>
#include <random>

#include "doctest.h"
#include "servesim/autoscale_model.hpp"
#include "test_util.hpp"

using namespace servesim;

namespace {

std::vector<VariantState> abc_states(int na = 0, int nb = 0, int nc = 0) {
  auto vs = testutil::table_abc();
  std::vector<VariantState> out;
  out.push_back({vs[0], na, 0.0});
  out.push_back({vs[1], nb, 0.0});
  out.push_back({vs[2], nc, 0.0});
  return out;
}

ScalingProblem abc_problem(double load, double slo) {
  ScalingProblem p;
  p.variants = abc_states();
  p.load_qps = load;
  p.slo_ms = slo;
  p.slack_qps = 0.0;
  p.lambda = 0.0;
  return p;
}

int delta_of(const ScalingPlan& plan, const std::string& id) {
  auto it = plan.actions.find(id);
  return it == plan.actions.end() ? 0 : it->second.delta;
}

}  // namespace

TEST_CASE("action_cost follows the objective") {
  VariantProfile b = testutil::ref_profile("B", 20.0, 100.0, 3.0);
  CHECK(action_cost(0, b, 0.1) == 0.0);
  CHECK(action_cost(-2, b, 0.1) == doctest::Approx(-6.0));
  VariantProfile slow = testutil::ref_profile("S", 20.0, 100.0, 3.0, 5000.0);
  CHECK(action_cost(1, slow, 0.1) == doctest::Approx(4.5));
  CHECK_THROWS_AS(action_cost(1, b, -0.1), std::invalid_argument);
}

TEST_CASE("headroom arithmetic") {
  VariantProfile b = testutil::ref_profile("B", 20.0, 100.0, 3.0);
  CHECK(headroom({{b, 1, 50.0}}) == doctest::Approx(2.0));
  CHECK(headroom({{b, 1, 90.0}, {b, 1, 100.0}}) == doctest::Approx(200.0 / 190.0));
  CHECK(std::isinf(headroom({{b, 1, 0.0}})));
  CHECK_THROWS_AS(headroom({}), std::invalid_argument);
  CHECK_THROWS_AS(headroom({{b, 0, 0.0}}), std::invalid_argument);
}

TEST_CASE("exact solver: low load, loose bound picks two cheap instances") {
  IlpResult r = solve_ilp(abc_problem(10.0, 300.0));
  REQUIRE(r.feasible);
  CHECK(r.plan.actions.size() == 1);
  CHECK(delta_of(r.plan, "A") == 2);
  CHECK(r.plan.total_cost == doctest::Approx(2.0));
  CHECK(r.plan.actions.at("A").cls == ActionClass::Upgrade);  // nothing running
}

TEST_CASE("exact solver: low load, tight bound forces the 20 ms variant") {
  IlpResult r = solve_ilp(abc_problem(10.0, 50.0));
  REQUIRE(r.feasible);
  CHECK(r.plan.actions.size() == 1);
  CHECK(delta_of(r.plan, "B") == 1);
  CHECK(r.plan.total_cost == doctest::Approx(3.0));
}

TEST_CASE("exact solver: high load mixes variants for minimum cost") {
  IlpResult r = solve_ilp(abc_problem(1000.0, 300.0));
  REQUIRE(r.feasible);
  CHECK(delta_of(r.plan, "B") == 2);
  CHECK(delta_of(r.plan, "C") == 1);
  CHECK(delta_of(r.plan, "A") == 0);
  CHECK(r.plan.total_cost == doctest::Approx(22.0));
}

TEST_CASE("exact solver: unload contributions count negatively") {
  ScalingProblem p = abc_problem(10.0, 300.0);
  p.variants[2].running = 1;  // one expensive instance already up
  IlpResult r = solve_ilp(p);
  REQUIRE(r.feasible);
  // Dropping C (-16) and covering 10 QPS with 2xA (+2) is the minimum.
  CHECK(delta_of(r.plan, "C") == -1);
  CHECK(delta_of(r.plan, "A") == 2);
  CHECK(r.plan.actions.at("C").cls == ActionClass::Unload);
  CHECK(r.plan.total_cost == doctest::Approx(-14.0));
}

TEST_CASE("exact solver: infeasibility diagnosis") {
  // SLO unreachable by any variant.
  IlpResult slo = solve_ilp(abc_problem(10.0, 10.0));
  CHECK_FALSE(slo.feasible);
  CHECK(slo.violated == ConstraintClass::Slo);

  // Resources too small for the required instance count.
  ScalingProblem p = abc_problem(10.0, 300.0);
  for (auto& v : p.variants) v.profile.resources[resource::kCpuCores] = 2.0;
  p.variants[1].profile.hardware = Hardware::CPU;
  p.variants[2].profile.hardware = Hardware::CPU;
  p.resources_total[resource::kCpuCores] = 1.0;
  IlpResult res = solve_ilp(p);
  CHECK_FALSE(res.feasible);
  CHECK(res.violated == ConstraintClass::Resources);

  // Capacity impossible even ignoring the SLO (delta capped).
  ScalingProblem cap = abc_problem(1e9, 300.0);
  cap.delta_cap = 1;
  IlpResult c = solve_ilp(cap);
  CHECK_FALSE(c.feasible);
  CHECK(c.violated == ConstraintClass::Capacity);
}

TEST_CASE("exact solver: rejects instances above the search cap") {
  ScalingProblem p = abc_problem(10.0, 300.0);
  CHECK_THROWS_AS(solve_ilp(p, 2), std::invalid_argument);
}

TEST_CASE("check_plan reports the first violated constraint") {
  ScalingProblem p = abc_problem(10.0, 50.0);
  ScalingPlan plan;
  plan.actions["A"] = {-1, ActionClass::Unload};  // N=0, going negative
  CHECK(check_plan(p, plan) == ConstraintClass::NonNegative);

  ScalingPlan slow;
  slow.actions["A"] = {3, ActionClass::Replicate};  // 200 ms > 50 ms bound
  CHECK(check_plan(p, slow) == ConstraintClass::Slo);

  ScalingPlan small;
  small.actions["B"] = {1, ActionClass::Replicate};
  CHECK(check_plan(p, small) == ConstraintClass::None);
  p.load_qps = 200.0;
  CHECK(check_plan(p, small) == ConstraintClass::Capacity);
}

TEST_CASE("exact solver matches unpruned enumeration on random instances") {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 120; ++trial) {
    ScalingProblem p;
    int n = 1 + static_cast<int>(uni(rng) * 4.0);
    for (int i = 0; i < n; ++i) {
      VariantProfile v = testutil::ref_profile(
          "v" + std::to_string(i), 5.0 + 295.0 * uni(rng),
          5.0 + 100.0 * uni(rng), 0.5 + 10.0 * uni(rng),
          1000.0 * uni(rng));
      p.variants.push_back({v, static_cast<int>(uni(rng) * 3.0), 0.0});
    }
    p.load_qps = 400.0 * uni(rng);
    p.slo_ms = 50.0 + 300.0 * uni(rng);
    p.slack_qps = 10.0 * uni(rng);
    p.lambda = uni(rng) < 0.5 ? 0.0 : 0.1;
    p.delta_cap = 8;

    IlpResult got = solve_ilp(p);

    // Full enumeration over the same bounded delta ranges.
    double best = std::numeric_limits<double>::infinity();
    bool feasible = false;
    std::vector<int> lo(n), hi(n), cur(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = -p.variants[i].running;
      bool slo_ok = p.variants[i].profile.batch1_latency_ms() <= p.slo_ms;
      hi[i] = slo_ok ? 8 : 0;
      cur[i] = lo[i];
    }
    while (true) {
      ScalingPlan plan;
      double cost = 0.0;
      for (int i = 0; i < n; ++i) {
        if (cur[i] != 0) {
          plan.actions[p.variants[i].profile.variant_id] = {cur[i],
                                                            ActionClass::Replicate};
        }
        cost += action_cost(cur[i], p.variants[i].profile, p.lambda);
      }
      if (check_plan(p, plan) == ConstraintClass::None) {
        feasible = true;
        best = std::min(best, cost);
      }
      int i = 0;
      while (i < n && cur[i] == hi[i]) {
        cur[i] = lo[i];
        ++i;
      }
      if (i == n) break;
      ++cur[i];
    }

    CHECK(got.feasible == feasible);
    if (feasible) {
      CHECK(got.plan.total_cost == doctest::Approx(best).epsilon(1e-9));
      CHECK(check_plan(p, got.plan) == ConstraintClass::None);
    }
  }
}

TEST_CASE("greedy scale-up: replicate beats upgrade at small shortfall") {
  GreedyInput in;
  in.running = abc_states(1, 0, 0);
  in.running[0].served_qps = 12.0;
  in.candidates = testutil::table_abc();
  in.load_qps = 12.0;
  in.slo_ms = 300.0;
  in.lambda = 0.0;
  in.slack_threshold = 1.0;
  ScalingPlan plan = greedy_scale_up(in);
  REQUIRE_FALSE(plan.empty());
  CHECK(delta_of(plan, "A") == 2);
  CHECK(plan.actions.at("A").cls == ActionClass::Replicate);
  CHECK(plan.total_cost == doctest::Approx(2.0));
  CHECK(plan.trigger == "headroom_below_threshold");
}

TEST_CASE("greedy scale-up: upgrade beats replication at large shortfall") {
  GreedyInput in;
  in.running = abc_states(2, 0, 0);
  in.running[0].served_qps = 90.0;
  in.candidates = testutil::table_abc();
  in.load_qps = 90.0;
  in.slo_ms = 300.0;
  in.lambda = 0.0;
  in.slack_threshold = 1.0;
  ScalingPlan plan = greedy_scale_up(in);
  REQUIRE_FALSE(plan.empty());
  CHECK(delta_of(plan, "B") == 1);
  CHECK(plan.actions.at("B").cls == ActionClass::Upgrade);
  CHECK(plan.total_cost == doctest::Approx(3.0));
}

TEST_CASE("greedy scale-up: sufficient headroom emits an empty plan") {
  GreedyInput in;
  in.running = abc_states(0, 1, 0);
  in.running[1].served_qps = 50.0;  // headroom 2.0
  in.candidates = testutil::table_abc();
  in.load_qps = 50.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.05;
  CHECK(greedy_scale_up(in).empty());
}

TEST_CASE("greedy scale-up: nothing running escalates to VM scaling") {
  GreedyInput in;
  in.candidates = testutil::table_abc();
  in.load_qps = 10.0;
  in.slo_ms = 300.0;
  ScalingPlan plan = greedy_scale_up(in);
  CHECK(plan.empty());
  CHECK(plan.trigger == "escalate_vm");
}

TEST_CASE("greedy scale-up: plans beyond local resources are tagged") {
  GreedyInput in;
  auto vs = testutil::table_abc();
  for (auto& v : vs) v.resources[resource::kCpuCores] = 2.0;
  in.running.push_back({vs[0], 1, 12.0});
  in.candidates = vs;
  in.load_qps = 12.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.0;
  in.free_resources[resource::kCpuCores] = 1.0;  // cannot host +2 x 2 cores
  ScalingPlan tight = greedy_scale_up(in);
  REQUIRE_FALSE(tight.empty());
  CHECK(tight.needs_controller_placement);
  in.free_resources[resource::kCpuCores] = 8.0;
  ScalingPlan roomy = greedy_scale_up(in);
  CHECK_FALSE(roomy.needs_controller_placement);
}

TEST_CASE("greedy scale-down: spare replica is removed after the delay") {
  GreedyInput in;
  in.running = abc_states(2, 0, 0);
  in.running[0].served_qps = 4.0;
  in.candidates = testutil::table_abc();
  in.load_qps = 4.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.0;
  auto down = greedy_scale_down(in);
  REQUIRE(down.has_value());
  CHECK(delta_of(down->plan, "A") == -1);
  CHECK(down->plan.actions.at("A").cls == ActionClass::Unload);
  CHECK(down->plan.trigger == "scale_down_remove");
  CHECK(down->delay_ms == doctest::Approx(0.0));  // A loads instantly here
}

TEST_CASE("greedy scale-down: expensive variant downgrades to the cheapest fit") {
  GreedyInput in;
  in.running = abc_states(0, 0, 1);
  in.running[2].served_qps = 3.0;
  in.candidates = testutil::table_abc();
  in.load_qps = 3.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.0;
  auto down = greedy_scale_down(in);
  REQUIRE(down.has_value());
  CHECK(delta_of(down->plan, "C") == -1);
  CHECK(delta_of(down->plan, "A") == 1);
  CHECK(down->plan.actions.at("A").cls == ActionClass::Downgrade);
  CHECK(down->plan.trigger == "scale_down_downgrade");
}

TEST_CASE("greedy scale-down: delay equals the affected variant's load latency") {
  GreedyInput in;
  auto vs = testutil::table_abc(750.0);
  in.running.push_back({vs[0], 2, 4.0});
  in.candidates = vs;
  in.load_qps = 4.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.0;
  auto down = greedy_scale_down(in);
  REQUIRE(down.has_value());
  CHECK(down->delay_ms == doctest::Approx(750.0));
}

TEST_CASE("greedy scale-down: fully used capacity yields no plan") {
  GreedyInput in;
  in.running = abc_states(1, 0, 0);
  in.running[0].served_qps = 4.0;
  in.candidates = testutil::table_abc();
  in.load_qps = 4.0;
  in.slo_ms = 300.0;
  in.slack_threshold = 1.0;
  CHECK_FALSE(greedy_scale_down(in).has_value());
}

TEST_CASE("greedy plans are feasible under the planning constraints") {
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    auto vs = testutil::table_abc();
    GreedyInput in;
    // Keep the scenario self-consistent: the running variant meets the SLO.
    double slo = uni(rng) < 0.5 ? 300.0 : 50.0;
    int pivot = static_cast<int>(uni(rng) * 3.0) % 3;
    if (slo == 50.0 && pivot == 0) pivot = 1;
    int count = 1 + static_cast<int>(uni(rng) * 3.0);
    in.running.push_back({vs[pivot], count, 0.0});
    in.running[0].served_qps =
        vs[pivot].saturation_qps * count * (0.3 + 1.2 * uni(rng));
    in.candidates = vs;
    in.load_qps = in.running[0].served_qps;
    in.slo_ms = slo;
    in.lambda = 0.1 * uni(rng);
    in.slack_threshold = 1.05;

    ScalingProblem check;
    check.variants = in.running;
    for (const auto& c : vs) {
      if (c.variant_id != vs[pivot].variant_id) check.variants.push_back({c, 0, 0.0});
    }
    check.load_qps = in.load_qps;
    check.slack_qps = (in.slack_threshold - 1.0) * in.load_qps;
    check.slo_ms = in.slo_ms;
    check.lambda = in.lambda;

    ScalingPlan up = greedy_scale_up(in);
    if (!up.empty()) {
      CHECK(check_plan(check, up) == ConstraintClass::None);
    }
    auto down = greedy_scale_down(in);
    if (down.has_value()) {
      CHECK(check_plan(check, down->plan) == ConstraintClass::None);
    }
  }
}
