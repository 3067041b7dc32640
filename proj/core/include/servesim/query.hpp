#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace servesim {

enum class QueryMode { ByModel, ByRequirements };
enum class QueryKind { Online, Offline };

struct QueryRequest {
  QueryMode mode = QueryMode::ByRequirements;
  std::string app_id;
  std::optional<std::string> model_name;      // ByModel
  std::optional<double> latency_slo_ms;       // ByRequirements
  std::optional<double> min_accuracy;         // ByRequirements
  QueryKind kind = QueryKind::Online;
  int batch = 1;
  double arrival_ms = 0.0;

  void validate() const {
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (mode == QueryMode::ByModel && !model_name) {
      throw std::invalid_argument("by_model query requires model_name");
    }
    if (mode == QueryMode::ByRequirements &&
        (!latency_slo_ms || !min_accuracy)) {
      throw std::invalid_argument(
          "by_requirements query requires latency_slo_ms and min_accuracy");
    }
  }
};

}  // namespace servesim
