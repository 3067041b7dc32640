#include "servesim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace servesim {

namespace {

// Piecewise-constant-rate Poisson process: exponential inter-arrivals within
// each one-second segment.
void emit_poisson_segment(std::mt19937_64& rng, double start_ms, double end_ms,
                          double rate_qps, const QueryRequest& tmpl,
                          std::vector<QueryRequest>& out) {
  if (rate_qps <= 0.0) throw std::invalid_argument("nonpositive rate");
  std::exponential_distribution<double> gap(rate_qps / 1000.0);  // per ms
  double t = start_ms + gap(rng);
  while (t < end_ms) {
    QueryRequest q = tmpl;
    q.arrival_ms = t;
    out.push_back(std::move(q));
    t += gap(rng);
  }
}

double pattern_rate(PatternKind kind, const PatternParams& p, double t_s) {
  switch (kind) {
    case PatternKind::FlatLow:
      return p.flat_rate_qps;
    case PatternKind::SteadyHigh: {
      double frac = p.duration_s <= 0.0 ? 0.0 : t_s / p.duration_s;
      return p.ramp_start_qps + (p.ramp_end_qps - p.ramp_start_qps) * frac;
    }
    case PatternKind::Fluctuating:
      for (const auto& [lo, hi] : p.spike_windows_s) {
        if (t_s >= lo && t_s < hi) return p.high_qps;
      }
      return p.low_qps;
  }
  return 0.0;
}

}  // namespace

ArrivalTrace gen_pattern(PatternKind kind, const PatternParams& params,
                         std::uint64_t seed) {
  if (params.duration_s < 0.0) throw std::invalid_argument("nonpositive rate");
  ArrivalTrace trace;
  trace.seed = seed;
  trace.description = kind == PatternKind::FlatLow      ? "flat_low"
                      : kind == PatternKind::SteadyHigh ? "steady_high"
                                                        : "fluctuating";
  std::mt19937_64 rng(seed);
  int seconds = static_cast<int>(std::ceil(params.duration_s));
  for (int s = 0; s < seconds; ++s) {
    double end_s = std::min<double>(s + 1, params.duration_s);
    emit_poisson_segment(rng, s * 1000.0, end_s * 1000.0,
                         pattern_rate(kind, params, s), params.request,
                         trace.arrivals);
  }
  return trace;
}

std::vector<double> map_bucket_rates(const std::vector<double>& counts,
                                     double qps_min, double qps_max) {
  if (counts.size() < 2) throw std::invalid_argument("need >= 2 buckets");
  auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo == *hi) throw std::invalid_argument("degenerate trace");
  std::vector<double> rates;
  rates.reserve(counts.size());
  double scale = (qps_max - qps_min) / (*hi - *lo);
  for (double c : counts) rates.push_back(qps_min + (c - *lo) * scale);
  return rates;
}

ArrivalTrace replay_trace(std::istream& trace_file, double qps_min,
                          double qps_max, double duration_s, std::uint64_t seed,
                          const QueryRequest& request_template) {
  std::string line;
  double bucket_width_s = 0.0;
  if (!std::getline(trace_file, line)) {
    throw std::invalid_argument("empty trace file");
  }
  {
    std::istringstream header(line);
    std::string key;
    header >> key >> bucket_width_s;
    if (key != "bucket_width_s" || bucket_width_s <= 0.0) {
      throw std::invalid_argument("trace header must be 'bucket_width_s <w>'");
    }
  }
  std::vector<double> counts;
  while (std::getline(trace_file, line)) {
    if (line.empty()) continue;
    counts.push_back(std::stod(line));
  }
  std::vector<double> rates = map_bucket_rates(counts, qps_min, qps_max);

  ArrivalTrace trace;
  trace.seed = seed;
  trace.description = "replay";
  std::mt19937_64 rng(seed);
  double t_ms = 0.0;
  double horizon_ms = duration_s * 1000.0;
  std::size_t bucket = 0;
  while (t_ms < horizon_ms) {
    double end_ms = std::min(t_ms + bucket_width_s * 1000.0, horizon_ms);
    emit_poisson_segment(rng, t_ms, end_ms, rates[bucket % rates.size()],
                         request_template, trace.arrivals);
    t_ms = t_ms + bucket_width_s * 1000.0;
    ++bucket;
  }
  return trace;
}

ArrivalTrace replay_trace_file(const std::string& path, double qps_min,
                               double qps_max, double duration_s,
                               std::uint64_t seed,
                               const QueryRequest& request_template) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open trace file: " + path);
  return replay_trace(in, qps_min, qps_max, duration_s, seed, request_template);
}

namespace {

std::vector<double> zipf_cdf(std::size_t n) {
  std::vector<double> cdf(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += 1.0 / (i + 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += 1.0 / (i + 1) / sum;
    cdf[i] = acc;
  }
  return cdf;
}

std::size_t sample_cdf(const std::vector<double>& cdf, double u) {
  return std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
}

}  // namespace

PopularitySampler::PopularitySampler(std::vector<std::string> models,
                                     std::vector<std::string> popular_set,
                                     double popular_share, std::uint64_t seed)
    : share_(popular_share), rng_state_(seed ^ 0x9e3779b97f4a7c15ULL) {
  if (popular_share <= 0.0 || popular_share >= 1.0) {
    throw std::invalid_argument("popular_share must be in (0,1)");
  }
  if (popular_set.empty()) throw std::invalid_argument("empty popular_set");
  for (const std::string& p : popular_set) {
    if (std::find(models.begin(), models.end(), p) == models.end()) {
      throw std::invalid_argument("popular model not in model set: " + p);
    }
  }
  popular_ = std::move(popular_set);
  for (std::string& m : models) {
    if (std::find(popular_.begin(), popular_.end(), m) == popular_.end()) {
      rest_.push_back(std::move(m));
    }
  }
  popular_cdf_ = zipf_cdf(popular_.size());
  if (!rest_.empty()) rest_cdf_ = zipf_cdf(rest_.size());
}

double PopularitySampler::next_uniform() {
  // splitmix64, enough for sampling and stable across platforms
  rng_state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = rng_state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z = z ^ (z >> 31);
  return (z >> 11) * 0x1.0p-53;
}

const std::string& PopularitySampler::sample() {
  double u = next_uniform();
  if (u < share_ || rest_.empty()) {
    return popular_[sample_cdf(popular_cdf_, next_uniform())];
  }
  return rest_[sample_cdf(rest_cdf_, next_uniform())];
}

void save_trace(const ArrivalTrace& trace, std::ostream& out) {
  out << std::setprecision(17);  // lossless double round-trip
  out << "timestamp_ms,app_id,mode,slo_ms,min_accuracy,batch\n";
  for (const QueryRequest& q : trace.arrivals) {
    out << q.arrival_ms << ',' << q.app_id << ','
        << (q.kind == QueryKind::Online ? "online" : "offline") << ','
        << (q.latency_slo_ms ? *q.latency_slo_ms : 0.0) << ','
        << (q.min_accuracy ? *q.min_accuracy : 0.0) << ',' << q.batch << '\n';
  }
}

ArrivalTrace load_trace(std::istream& in) {
  ArrivalTrace trace;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream row(line);
    std::string field;
    QueryRequest q;
    std::getline(row, field, ',');
    q.arrival_ms = std::stod(field);
    std::getline(row, q.app_id, ',');
    std::getline(row, field, ',');
    q.kind = field == "offline" ? QueryKind::Offline : QueryKind::Online;
    std::getline(row, field, ',');
    q.latency_slo_ms = std::stod(field);
    std::getline(row, field, ',');
    q.min_accuracy = std::stod(field);
    std::getline(row, field, ',');
    q.batch = std::stoi(field);
    trace.arrivals.push_back(std::move(q));
  }
  return trace;
}

}  // namespace servesim
