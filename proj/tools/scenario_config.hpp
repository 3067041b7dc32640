#pragma once

#include <string>

#include "json.hpp"
#include "servesim/simulator.hpp"
#include "servesim/workload.hpp"

namespace servesim::config {

/// Builds a full scenario from a parsed config object. Relative paths resolve
/// against `base_dir`. Throws std::invalid_argument on any schema problem.
Scenario scenario_from_json(const nlohmann::json& cfg,
                            const std::string& base_dir);

/// Catalog from either {"profiles_file": path} or {"generate": {...}}.
Catalog catalog_from_json(const nlohmann::json& cfg,
                          const std::string& base_dir);

/// Arrival trace from a pattern spec, a replay spec, or a saved arrivals file.
ArrivalTrace workload_from_json(const nlohmann::json& cfg,
                                const std::string& base_dir,
                                std::uint64_t seed);

QueryRequest request_from_json(const nlohmann::json& cfg);

/// Directory part of a path ("." when none).
std::string dir_of(const std::string& path);

nlohmann::json load_json_file(const std::string& path);

}  // namespace servesim::config
