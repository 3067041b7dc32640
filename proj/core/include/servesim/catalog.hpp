#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace servesim {

enum class Hardware { CPU, GPU, ACCEL };
enum class Optimizer { None, GraphOptimized };
enum class Task { Classification, Translation, Other };

const char* to_string(Hardware hw);
const char* to_string(Optimizer opt);
Hardware hardware_from_string(const std::string& s);
Optimizer optimizer_from_string(const std::string& s);

/// Resource type keys used in resource maps.
namespace resource {
inline constexpr const char* kCpuCores = "cpu_cores";
inline constexpr const char* kCpuMemGb = "cpu_mem_gb";
inline constexpr const char* kGpuMemGb = "gpu_mem_gb";
inline constexpr const char* kAccelCores = "accel_cores";
}  // namespace resource

/// Dominant resource type for a hardware class; utilization and
/// least-loaded decisions key off this.
const char* dominant_resource(Hardware hw);

struct ModelArchitecture {
  std::string arch_id;
  Task task = Task::Other;
  std::set<std::string> app_ids;
  double declared_accuracy = 0.0;  // in [0,1]
};

/// Static profile of one deployable model-variant: latencies, saturation
/// throughput, resource footprint, and cost rate.
struct VariantProfile {
  std::string variant_id;
  std::string arch_id;
  Hardware hardware = Hardware::CPU;
  Optimizer optimizer = Optimizer::None;
  int max_batch = 1;  // power of two, <= 64
  double accuracy = 0.0;
  std::map<int, double> inf_latency_ms;  // batch -> milliseconds
  double load_latency_ms = 0.0;
  double saturation_qps = 0.0;
  double cost_rate = 0.0;  // dollars per second while loaded
  std::map<std::string, double> resources;

  double batch1_latency_ms() const;
  /// Profiled latency at `batch`; batches outside the profiled set are
  /// rejected (throws std::out_of_range).
  double inf_latency(int batch) const;
  bool has_batch(int batch) const { return inf_latency_ms.count(batch) > 0; }
  double combined_latency_ms(int batch) const {
    return inf_latency(batch) + load_latency_ms;
  }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

bool is_power_of_two(int v);

/// Hardware entry of the generation grid.
struct HardwareSpec {
  Hardware hardware = Hardware::CPU;
  double speedup = 1.0;            // latency divisor relative to the CPU base
  bool graph_optimizer = false;    // also emit graph-optimized variants
  double optimizer_speedup = 1.5;  // extra latency divisor when optimized
  double mem_gb_base = 1.0;
  double mem_gb_per_batch = 0.05;
  double cores = 2.0;  // cpu_cores or accel_cores footprint
};

/// Parametric profile model. Latency scales with batch as
/// L(b) = L0 * (alpha + (1 - alpha) * b) and saturation throughput is
/// batch / L(batch) * pipeline_factor.
struct ProfileModelParams {
  double batch_alpha = 0.25;
  double pipeline_factor = 1.0;
  double load_ms_per_gb = 1000.0;
  // $/(GB*s) normalization per hardware class.
  double cost_per_gb_s_cpu = 0.031;
  double cost_per_gb_s_gpu = 0.498;
  double cost_per_gb_s_accel = 0.190;
};

struct Catalog {
  std::map<std::string, ModelArchitecture> architectures;
  std::map<std::string, VariantProfile> variants;

  void add_architecture(ModelArchitecture arch);
  void add_variant(VariantProfile profile);  // validates, rejects duplicates
  const VariantProfile& variant(const std::string& id) const;
  std::vector<const VariantProfile*> variants_of(const std::string& arch_id) const;
  bool empty() const { return variants.empty(); }
};

/// Enumerates the (hardware, optimizer, batch) grid for one architecture and
/// fills profiles from the parametric model. Deterministic.
std::vector<VariantProfile> generate_variants(
    const ModelArchitecture& arch, double base_latency_ms,
    const std::vector<HardwareSpec>& hw_catalog,
    const std::vector<int>& batch_sizes,
    const ProfileModelParams& params = {});

/// Parses the comma-delimited profile file (header line required).
/// Saturation throughput is derived as max over profiled batches of
/// batch / latency_seconds(batch).
Catalog load_profiles(std::istream& in);
Catalog load_profiles_file(const std::string& path);

void save_profiles(const Catalog& catalog, std::ostream& out);

}  // namespace servesim
