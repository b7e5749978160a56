#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "uvoc/design.hpp"
#include "uvoc/simulator.hpp"
#include "uvoc/smallsignal.hpp"

namespace uvoc {

using Json = nlohmann::json;

/// Reads and parses a JSON file. Missing files raise Io, malformed text Schema.
Json read_json_file(const std::string& path);

/// Applies "a.b.c=value" assignments. The value is parsed as JSON when possible
/// (numbers, booleans, null, objects such as {"pu":0.5}) and kept as a string
/// otherwise. Paths are checked later by the strict loaders.
void apply_overrides(Json& doc, const std::vector<std::string>& overrides);

/// Strict scenario schema: unknown keys are rejected. Numeric fields accept
/// SI values or {"pu": x}, resolved against the ratings block.
Scenario scenario_from_json(const Json& doc);
Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {});

/// Linear-analysis configuration: a scenario plus the operating condition.
struct AnalysisConfig {
    Scenario scenario;
    GridCondition grid;
    double P0 = 0.0;
    double Q0 = 0.0;
    AnalysisMode mode = AnalysisMode::Normal;
    double band_lo = 0.1;    ///< rad/s
    double band_hi = 1000.0;
};

AnalysisConfig analysis_from_json(const Json& doc);
AnalysisConfig load_analysis(const std::string& path, const std::vector<std::string>& overrides = {});

/// Lumped model parameters: L_e = L_a + L_g + L_N + L_vir, R_e = R_vir + r_a + r_g + R_N.
SmallSignalParams small_signal_params(const Scenario& s);

struct DesignConfig {
    DesignSpec spec;
    PlantParams plant;
    EviParams evi;
    PowerMapOptions map;
};

DesignConfig design_from_json(const Json& doc);
DesignConfig load_design(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace uvoc
