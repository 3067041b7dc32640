#include "servesim/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace servesim {

const char* to_string(Hardware hw) {
  switch (hw) {
    case Hardware::CPU: return "CPU";
    case Hardware::GPU: return "GPU";
    case Hardware::ACCEL: return "ACCEL";
  }
  return "?";
}

const char* to_string(Optimizer opt) {
  return opt == Optimizer::GraphOptimized ? "graph_optimized" : "none";
}

Hardware hardware_from_string(const std::string& s) {
  if (s == "CPU" || s == "cpu") return Hardware::CPU;
  if (s == "GPU" || s == "gpu") return Hardware::GPU;
  if (s == "ACCEL" || s == "accel") return Hardware::ACCEL;
  throw std::invalid_argument("unknown hardware: " + s);
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "none") return Optimizer::None;
  if (s == "graph_optimized") return Optimizer::GraphOptimized;
  throw std::invalid_argument("unknown optimizer: " + s);
}

const char* dominant_resource(Hardware hw) {
  switch (hw) {
    case Hardware::CPU: return resource::kCpuCores;
    case Hardware::GPU: return resource::kGpuMemGb;
    case Hardware::ACCEL: return resource::kAccelCores;
  }
  return resource::kCpuCores;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

double VariantProfile::batch1_latency_ms() const { return inf_latency(1); }

double VariantProfile::inf_latency(int batch) const {
  auto it = inf_latency_ms.find(batch);
  if (it == inf_latency_ms.end()) {
    throw std::out_of_range("batch " + std::to_string(batch) +
                            " not profiled for variant " + variant_id);
  }
  return it->second;
}

void VariantProfile::validate() const {
  if (variant_id.empty()) throw std::invalid_argument("variant_id: empty");
  if (arch_id.empty()) throw std::invalid_argument("arch_id: empty");
  if (!is_power_of_two(max_batch) || max_batch > 64) {
    throw std::invalid_argument("max_batch: must be a power of two <= 64");
  }
  if (accuracy < 0.0 || accuracy > 1.0) {
    throw std::invalid_argument("accuracy: out of [0,1]");
  }
  if (inf_latency_ms.count(1) == 0) {
    throw std::invalid_argument("inf_latency_ms: batch 1 missing");
  }
  double prev = 0.0;
  for (const auto& [batch, lat] : inf_latency_ms) {
    if (batch < 1 || lat <= 0.0) {
      throw std::invalid_argument("inf_latency_ms: nonpositive entry");
    }
    if (lat < prev) {
      throw std::invalid_argument("inf_latency_ms: not non-decreasing in batch");
    }
    prev = lat;
  }
  if (saturation_qps <= 0.0) {
    throw std::invalid_argument("saturation_qps: must be positive");
  }
  if (cost_rate <= 0.0) throw std::invalid_argument("cost_rate: must be positive");
  if (load_latency_ms < 0.0) {
    throw std::invalid_argument("load_latency_ms: must be non-negative");
  }
  // Only resource entries relevant to the hardware class may be nonzero.
  for (const auto& [type, amount] : resources) {
    if (amount < 0.0) throw std::invalid_argument("resources: negative amount");
    if (amount == 0.0) continue;
    bool ok = false;
    switch (hardware) {
      case Hardware::CPU:
        ok = type == resource::kCpuCores || type == resource::kCpuMemGb;
        break;
      case Hardware::GPU:
        ok = type == resource::kGpuMemGb;
        break;
      case Hardware::ACCEL:
        ok = type == resource::kAccelCores;
        break;
    }
    if (!ok) {
      throw std::invalid_argument("resources: " + type + " not valid for " +
                                  to_string(hardware) + " variant");
    }
  }
}

void Catalog::add_architecture(ModelArchitecture arch) {
  if (arch.declared_accuracy < 0.0 || arch.declared_accuracy > 1.0) {
    throw std::invalid_argument("declared_accuracy: out of [0,1]");
  }
  if (!architectures.emplace(arch.arch_id, std::move(arch)).second) {
    throw std::invalid_argument("duplicate arch_id");
  }
}

void Catalog::add_variant(VariantProfile profile) {
  profile.validate();
  if (variants.count(profile.variant_id)) {
    throw std::invalid_argument("duplicate variant_id: " + profile.variant_id);
  }
  variants.emplace(profile.variant_id, std::move(profile));
}

const VariantProfile& Catalog::variant(const std::string& id) const {
  auto it = variants.find(id);
  if (it == variants.end()) throw std::out_of_range("unknown variant: " + id);
  return it->second;
}

std::vector<const VariantProfile*> Catalog::variants_of(
    const std::string& arch_id) const {
  std::vector<const VariantProfile*> out;
  for (const auto& [id, v] : variants) {
    if (v.arch_id == arch_id) out.push_back(&v);
  }
  return out;
}

namespace {

double parametric_latency_ms(double base_ms, double alpha, int batch) {
  return base_ms * (alpha + (1.0 - alpha) * static_cast<double>(batch));
}

double cost_per_gb_s(Hardware hw, const ProfileModelParams& p) {
  switch (hw) {
    case Hardware::CPU: return p.cost_per_gb_s_cpu;
    case Hardware::GPU: return p.cost_per_gb_s_gpu;
    case Hardware::ACCEL: return p.cost_per_gb_s_accel;
  }
  return p.cost_per_gb_s_cpu;
}

std::string variant_name(const std::string& arch_id, Hardware hw, Optimizer opt,
                         int batch) {
  std::string id = arch_id + "-";
  id += hw == Hardware::CPU ? "cpu" : hw == Hardware::GPU ? "gpu" : "accel";
  if (opt == Optimizer::GraphOptimized) id += "-opt";
  id += "-b" + std::to_string(batch);
  return id;
}

}  // namespace

std::vector<VariantProfile> generate_variants(
    const ModelArchitecture& arch, double base_latency_ms,
    const std::vector<HardwareSpec>& hw_catalog,
    const std::vector<int>& batch_sizes, const ProfileModelParams& params) {
  if (hw_catalog.empty()) throw std::invalid_argument("no hardware");
  if (batch_sizes.empty()) throw std::invalid_argument("invalid batch");
  for (int b : batch_sizes) {
    if (!is_power_of_two(b) || b > 64) throw std::invalid_argument("invalid batch");
  }

  std::vector<int> batches = batch_sizes;
  std::sort(batches.begin(), batches.end());
  batches.erase(std::unique(batches.begin(), batches.end()), batches.end());

  std::vector<VariantProfile> out;
  for (const HardwareSpec& hw : hw_catalog) {
    std::vector<Optimizer> opts{Optimizer::None};
    if (hw.graph_optimizer) opts.push_back(Optimizer::GraphOptimized);
    for (Optimizer opt : opts) {
      double hw_base =
          base_latency_ms / hw.speedup /
          (opt == Optimizer::GraphOptimized ? hw.optimizer_speedup : 1.0);
      for (int max_b : batches) {
        VariantProfile v;
        v.variant_id = variant_name(arch.arch_id, hw.hardware, opt, max_b);
        v.arch_id = arch.arch_id;
        v.hardware = hw.hardware;
        v.optimizer = opt;
        v.max_batch = max_b;
        v.accuracy = arch.declared_accuracy;
        for (int b = 1; b <= max_b; b *= 2) {
          v.inf_latency_ms[b] =
              parametric_latency_ms(hw_base, params.batch_alpha, b);
        }
        double lat_s = v.inf_latency_ms.at(max_b) / 1000.0;
        v.saturation_qps = max_b / lat_s * params.pipeline_factor;
        double mem_gb = hw.mem_gb_base + hw.mem_gb_per_batch * max_b;
        v.load_latency_ms = params.load_ms_per_gb * mem_gb;
        v.cost_rate = mem_gb * cost_per_gb_s(hw.hardware, params);
        switch (hw.hardware) {
          case Hardware::CPU:
            v.resources[resource::kCpuCores] = hw.cores;
            v.resources[resource::kCpuMemGb] = mem_gb;
            break;
          case Hardware::GPU:
            v.resources[resource::kGpuMemGb] = mem_gb;
            break;
          case Hardware::ACCEL:
            v.resources[resource::kAccelCores] = hw.cores;
            break;
        }
        v.validate();
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, delim)) parts.push_back(cur);
  return parts;
}

// "key=value:key=value" pairs.
std::map<std::string, double> parse_pairs(const std::string& field, int line_no) {
  std::map<std::string, double> out;
  if (field.empty()) return out;
  for (const std::string& pair : split(field, ':')) {
    auto eq = pair.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": malformed pair '" + pair + "'");
    }
    out[pair.substr(0, eq)] = std::stod(pair.substr(eq + 1));
  }
  return out;
}

}  // namespace

Catalog load_profiles(std::istream& in) {
  Catalog catalog;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;  // header line required, content not interpreted
      continue;
    }
    std::vector<std::string> f = split(line, ',');
    if (f.size() != 10) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": expected 10 fields, got " +
                                  std::to_string(f.size()));
    }
    VariantProfile v;
    try {
      v.variant_id = f[0];
      v.arch_id = f[1];
      v.hardware = hardware_from_string(f[2]);
      v.optimizer = optimizer_from_string(f[3]);
      v.max_batch = std::stoi(f[4]);
      v.accuracy = std::stod(f[5]);
      v.load_latency_ms = std::stod(f[6]);
      v.cost_rate = std::stod(f[7]);
      v.resources = parse_pairs(f[8], line_no);
      for (const auto& [batch, lat] : parse_pairs(f[9], line_no)) {
        v.inf_latency_ms[std::stoi(batch)] = lat;
      }
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
    for (const auto& [batch, lat] : v.inf_latency_ms) {
      v.saturation_qps =
          std::max(v.saturation_qps, batch / (lat / 1000.0));
    }
    try {
      v.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
    if (catalog.variants.count(v.variant_id)) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": duplicate variant_id " + v.variant_id);
    }
    if (!catalog.architectures.count(v.arch_id)) {
      ModelArchitecture arch;
      arch.arch_id = v.arch_id;
      arch.declared_accuracy = v.accuracy;
      catalog.add_architecture(std::move(arch));
    }
    ModelArchitecture& arch = catalog.architectures.at(v.arch_id);
    arch.declared_accuracy = std::max(arch.declared_accuracy, v.accuracy);
    catalog.variants.emplace(v.variant_id, std::move(v));
  }
  return catalog;
}

Catalog load_profiles_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open profile file: " + path);
  return load_profiles(in);
}

void save_profiles(const Catalog& catalog, std::ostream& out) {
  out << "variant_id,arch_id,hardware,optimizer,max_batch,accuracy,"
         "load_latency_ms,cost_rate,resources,latencies\n";
  for (const auto& [id, v] : catalog.variants) {
    out << v.variant_id << ',' << v.arch_id << ',' << to_string(v.hardware)
        << ',' << to_string(v.optimizer) << ',' << v.max_batch << ','
        << v.accuracy << ',' << v.load_latency_ms << ',' << v.cost_rate << ',';
    bool first = true;
    for (const auto& [type, amount] : v.resources) {
      if (!first) out << ':';
      out << type << '=' << amount;
      first = false;
    }
    out << ',';
    first = true;
    for (const auto& [batch, lat] : v.inf_latency_ms) {
      if (!first) out << ':';
      out << batch << '=' << lat;
      first = false;
    }
    out << '\n';
  }
}

}  // namespace servesim
