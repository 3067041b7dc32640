#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "servesim/query.hpp"

namespace servesim {

struct ArrivalTrace {
  std::vector<QueryRequest> arrivals;  // nondecreasing arrival_ms
  std::uint64_t seed = 0;
  std::string description;

  std::size_t size() const { return arrivals.size(); }
};

enum class PatternKind { FlatLow, SteadyHigh, Fluctuating };

struct PatternParams {
  double duration_s = 120.0;
  // FlatLow
  double flat_rate_qps = 4.0;
  // SteadyHigh
  double ramp_start_qps = 650.0;
  double ramp_end_qps = 700.0;
  // Fluctuating: baseline with spike windows.
  double low_qps = 4.0;
  double high_qps = 80.0;
  std::vector<std::pair<double, double>> spike_windows_s = {{60, 90}, {150, 180}};
  // Request template.
  QueryRequest request;
};

/// Poisson arrivals following the pattern's rate curve; deterministic per seed.
ArrivalTrace gen_pattern(PatternKind kind, const PatternParams& params,
                         std::uint64_t seed);

/// Replays a bucketed count trace with its per-bucket counts affinely mapped
/// so min -> qps_min and max -> qps_max; Poisson arrivals per bucket.
ArrivalTrace replay_trace(std::istream& trace_file, double qps_min,
                          double qps_max, double duration_s, std::uint64_t seed,
                          const QueryRequest& request_template);
ArrivalTrace replay_trace_file(const std::string& path, double qps_min,
                               double qps_max, double duration_s,
                               std::uint64_t seed,
                               const QueryRequest& request_template);

/// Maps the bucket counts of a trace file to rates in [qps_min, qps_max];
/// exposed for direct testing of the affine map.
std::vector<double> map_bucket_rates(const std::vector<double>& counts,
                                     double qps_min, double qps_max);

/// Zipf(s = 1) model popularity: `popular_share` of draws come from the
/// popular set, the remainder from the rest. Deterministic per seed.
class PopularitySampler {
 public:
  PopularitySampler(std::vector<std::string> models,
                    std::vector<std::string> popular_set, double popular_share,
                    std::uint64_t seed);
  const std::string& sample();

 private:
  std::vector<std::string> popular_;
  std::vector<std::string> rest_;
  std::vector<double> popular_cdf_;
  std::vector<double> rest_cdf_;
  double share_;
  std::uint64_t rng_state_;
  double next_uniform();
};

/// Exact per-arrival serialization:
/// timestamp_ms,app_id,mode,slo_ms,min_accuracy,batch
void save_trace(const ArrivalTrace& trace, std::ostream& out);
ArrivalTrace load_trace(std::istream& in);

}  // namespace servesim
