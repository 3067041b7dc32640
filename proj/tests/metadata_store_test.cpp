#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "servesim/metadata_store.hpp"
#include "test_util.hpp"

using namespace servesim;

namespace {

MetadataStore store_with_abc(double load_ms = 0.0) {
  MetadataStore store;
  ModelArchitecture arch;
  arch.arch_id = "resnet";
  arch.declared_accuracy = 0.9;
  store.register_model(arch, testutil::table_abc(load_ms), "demo");
  return store;
}

WorkerState cpu_worker(const std::string& id, double cores = 16.0,
                       double mem = 64.0) {
  WorkerState w;
  w.worker_id = id;
  w.total[resource::kCpuCores] = cores;
  w.total[resource::kCpuMemGb] = mem;
  return w;
}

}  // namespace

TEST_CASE("register_model indexes variants and rejects re-registration") {
  MetadataStore store = store_with_abc();
  auto vs = store.variants_of_app("demo");
  REQUIRE(vs.size() == 3);
  std::vector<std::string> ids;
  for (const auto* v : vs) ids.push_back(v->variant_id);
  std::sort(ids.begin(), ids.end());
  CHECK(ids == std::vector<std::string>{"A", "B", "C"});

  ModelArchitecture arch;
  arch.arch_id = "resnet";
  arch.declared_accuracy = 0.9;
  CHECK_THROWS_AS(store.register_model(arch, {}, "demo"), std::invalid_argument);
}

TEST_CASE("register_model rejects variants of a different architecture") {
  MetadataStore store;
  ModelArchitecture arch;
  arch.arch_id = "resnet";
  auto bad = testutil::table_abc();
  bad[0].arch_id = "other";
  CHECK_THROWS_AS(store.register_model(arch, bad, "demo"),
                  std::invalid_argument);
}

TEST_CASE("candidates: budget filters and orders by key latency") {
  MetadataStore store;
  ModelArchitecture arch;
  arch.arch_id = "m";
  std::vector<VariantProfile> vs{
      testutil::ref_profile("v30", 30.0, 10.0, 1.0, 0.0, "m"),
      testutil::ref_profile("v100", 100.0, 10.0, 1.0, 0.0, "m"),
      testutil::ref_profile("v400", 400.0, 10.0, 1.0, 0.0, "m")};
  store.register_model(arch, vs, "app");
  auto got = store.candidates_by_requirements("app", 0.0, 200.0,
                                              StateFilter::only_inactive());
  REQUIRE(got.size() == 2);
  CHECK(got[0].variant_id == "v30");
  CHECK(got[0].key_latency_ms == 30.0);
  CHECK(got[1].variant_id == "v100");
}

TEST_CASE("candidates: reference variants at budget 50 give [C, B]") {
  MetadataStore store = store_with_abc(0.0);
  auto got = store.candidates_by_requirements("demo", 0.0, 50.0,
                                              StateFilter::only_inactive());
  REQUIRE(got.size() == 2);
  CHECK(got[0].variant_id == "C");
  CHECK(got[0].key_latency_ms == 15.0);
  CHECK(got[1].variant_id == "B");
  CHECK(got[1].key_latency_ms == 20.0);
}

TEST_CASE("candidates: accuracy bar above every variant gives empty") {
  MetadataStore store = store_with_abc();
  CHECK(store
            .candidates_by_requirements("demo", 0.99, 1e9,
                                        StateFilter::only_inactive())
            .empty());
}

TEST_CASE("candidates: unknown app rejected") {
  MetadataStore store = store_with_abc();
  CHECK_THROWS_AS(store.candidates_by_requirements("nope", 0.0, 100.0,
                                                   StateFilter::only_inactive()),
                  std::invalid_argument);
}

TEST_CASE("create_instance reserves resources and rejects over-commit") {
  // Give A a 2-core footprint so a second copy cannot fit a 2-core worker.
  MetadataStore s2;
  ModelArchitecture arch;
  arch.arch_id = "resnet";
  auto vs = testutil::table_abc();
  vs[0].resources[resource::kCpuCores] = 2.0;
  s2.register_model(arch, vs, "demo");
  s2.add_worker(cpu_worker("w0", 2.0, 64.0));
  InstanceRecord& rec = s2.create_instance("A", "w0", "demo", 0.0);
  CHECK(rec.state == InstanceState::Inactive);
  CHECK(s2.worker("w0").util(resource::kCpuCores) == doctest::Approx(1.0));
  CHECK_THROWS_AS(s2.create_instance("A", "w0", "demo", 0.0),
                  std::invalid_argument);
}

TEST_CASE("replica indices distinguish co-located copies") {
  MetadataStore store = store_with_abc();
  store.add_worker(cpu_worker("w0"));
  InstanceRecord& r0 = store.create_instance("A", "w0", "demo", 0.0);
  InstanceRecord& r1 = store.create_instance("A", "w0", "demo", 0.0);
  CHECK(r0.replica == 0);
  CHECK(r1.replica == 1);
  CHECK(store.instances_of_variant("A").size() == 2);
}

TEST_CASE("update_instance: legal transitions accepted, illegal rejected") {
  MetadataStore store = store_with_abc();
  store.add_worker(cpu_worker("w0"));
  std::string key = store.create_instance("A", "w0", "demo", 0.0).key();

  InstanceRecord rec = *store.find_instance(key);
  rec.state = InstanceState::Active;
  CHECK_NOTHROW(store.update_instance(rec));

  rec = *store.find_instance(key);
  rec.state = InstanceState::Overloaded;
  rec.current_qps = 6.0;
  CHECK_NOTHROW(store.update_instance(rec));

  rec = *store.find_instance(key);
  rec.state = InstanceState::Interfered;  // Overloaded -> Interfered is illegal
  CHECK_THROWS_AS(store.update_instance(rec), std::invalid_argument);
}

TEST_CASE("update_instance: Inactive records must carry zero load") {
  MetadataStore store = store_with_abc();
  store.add_worker(cpu_worker("w0"));
  std::string key = store.create_instance("A", "w0", "demo", 0.0).key();
  InstanceRecord rec = *store.find_instance(key);
  rec.current_qps = 2.0;  // still Inactive
  CHECK_THROWS_AS(store.update_instance(rec), std::invalid_argument);
}

TEST_CASE("apply_event: unload releases resources and removes the record") {
  MetadataStore s2;
  ModelArchitecture arch;
  arch.arch_id = "resnet";
  auto vs = testutil::table_abc();
  vs[0].resources[resource::kCpuCores] = 2.0;
  s2.register_model(arch, vs, "demo");
  s2.add_worker(cpu_worker("w0", 4.0, 64.0));
  std::string key = s2.create_instance("A", "w0", "demo", 0.0).key();
  s2.apply_event(key, LifecycleEvent::LoadComplete, InstanceState::Active, 1.0);
  CHECK(s2.worker("w0").util(resource::kCpuCores) == doctest::Approx(0.5));
  s2.apply_event(key, LifecycleEvent::Unload, InstanceState::Active, 2.0);
  CHECK(s2.find_instance(key) == nullptr);
  CHECK(s2.worker("w0").util(resource::kCpuCores) == doctest::Approx(0.0));
}

TEST_CASE("least_loaded_worker: minimum utilization, ties to lowest id") {
  MetadataStore store;
  WorkerState w1 = cpu_worker("w1");
  w1.used[resource::kCpuCores] = 0.2 * 16;
  WorkerState w2 = cpu_worker("w2");
  w2.used[resource::kCpuCores] = 0.7 * 16;
  store.add_worker(w1);
  store.add_worker(w2);
  CHECK(store.least_loaded_worker({"w1", "w2"}, Hardware::CPU) == "w1");

  MetadataStore tied;
  WorkerState t1 = cpu_worker("w1");
  t1.used[resource::kCpuCores] = 8.0;
  WorkerState t2 = cpu_worker("w2");
  t2.used[resource::kCpuCores] = 8.0;
  tied.add_worker(t1);
  tied.add_worker(t2);
  CHECK(tied.least_loaded_worker({"w2", "w1"}, Hardware::CPU) == "w1");
  CHECK(tied.least_loaded_worker({"w2"}, Hardware::CPU) == "w2");
  CHECK_THROWS_WITH_AS(tied.least_loaded_worker({}, Hardware::CPU), "no worker",
                       std::invalid_argument);
}

TEST_CASE("state buckets partition the instance set under random updates") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    testutil::RandomStore rs = testutil::make_random_store(rng, 20);
    std::size_t bucketed = 0;
    std::size_t total = 0;
    std::set<std::string> seen;
    for (InstanceState s :
         {InstanceState::Inactive, InstanceState::Active,
          InstanceState::Overloaded, InstanceState::Interfered}) {
      for (const InstanceRecord* rec : rs.store.instances_in_state(s)) {
        CHECK(rec->state == s);
        CHECK(seen.insert(rec->key()).second);  // no instance in two buckets
        ++bucketed;
      }
    }
    for (const VariantProfile* v : rs.store.variants_of_app(rs.app_id)) {
      total += rs.store.instances_of_variant(v->variant_id).size();
    }
    CHECK(bucketed == total);  // none missing
  }
}

TEST_CASE("index/scan equivalence on randomized stores") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    testutil::RandomStore rs = testutil::make_random_store(rng, 30);
    double min_acc = 0.4 + 0.6 * uni(rng);
    double budget = 600.0 * uni(rng);
    bool inactive = uni(rng) < 0.5;
    StateFilter filter = inactive ? StateFilter::only_inactive()
                                  : StateFilter::only_active();

    auto got = rs.store.candidates_by_requirements(rs.app_id, min_acc, budget,
                                                   filter);

    // Brute force: filter every variant, sort by (key latency, id).
    std::vector<Candidate> want;
    for (const VariantProfile* v : rs.store.variants_of_app(rs.app_id)) {
      double key = inactive ? v->batch1_latency_ms() + v->load_latency_ms
                            : v->batch1_latency_ms();
      if (key > budget || v->accuracy < min_acc) continue;
      if (!inactive &&
          !rs.store.variant_has_state(v->variant_id, InstanceState::Active)) {
        continue;
      }
      want.push_back({v->variant_id, key});
    }
    std::sort(want.begin(), want.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(a.key_latency_ms, a.variant_id) <
             std::tie(b.key_latency_ms, b.variant_id);
    });

    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].variant_id == want[i].variant_id);
      CHECK(got[i].key_latency_ms == doctest::Approx(want[i].key_latency_ms));
    }
  }
}

TEST_CASE("dump emits a stable snapshot") {
  MetadataStore store = store_with_abc();
  store.add_worker(cpu_worker("w0"));
  store.create_instance("A", "w0", "demo", 0.0);
  std::ostringstream a, b;
  store.dump(a);
  store.dump(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("[variants]") != std::string::npos);
  CHECK(a.str().find("A@w0#0") != std::string::npos);
}

TEST_CASE("remove_worker refuses while instances remain") {
  MetadataStore store = store_with_abc();
  store.add_worker(cpu_worker("w0"));
  std::string key = store.create_instance("A", "w0", "demo", 0.0).key();
  CHECK_THROWS_AS(store.remove_worker("w0"), std::invalid_argument);
  store.apply_event(key, LifecycleEvent::LoadComplete, InstanceState::Active, 0.0);
  store.apply_event(key, LifecycleEvent::Unload, InstanceState::Active, 1.0);
  CHECK_NOTHROW(store.remove_worker("w0"));
  CHECK_THROWS_AS(store.remove_worker("w0"), std::invalid_argument);
}
