#pragma once
#include <optional>
#include <string>

#include <json.hpp>

#include "twocabin/estimation.hpp"

namespace twocabin {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitSolver = 3,
    kExitData = 4,
};

/// Resolved run configuration: one JSON document, command-line overrides
/// applied, validated before any compute.  Every run writes the resolved
/// snapshot next to its outputs.
struct RunConfig {
    std::optional<FlightParams> params;
    std::optional<ParamBox> box;
    CabinState initial{20, 4};
    std::uint64_t seed = 1;
    int workers = 0;
    std::string output_dir = "out";
    bool force = false;

    SolverConfig solver;
    EstimationConfig estimation;  // S and B live below
    int est_S = 200;
    int est_B = 0;  // bootstrap refits; 0 skips the bootstrap
    MechanismConfig counterfactual;
    int sim_flights = 100;
    bool sim_price_paths = false;
    std::string tickets_path;    // input for moments/estimate
    std::string estimates_path;  // optional input for density-averaged counterfactuals
    int psi_draws = 0;           // counterfactual parameter draws from the estimates

    /// Parse and validate; throws std::runtime_error naming the offending key.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
};

int cmd_solve(const RunConfig& cfg);
int cmd_simulate(const RunConfig& cfg);
int cmd_moments(const RunConfig& cfg);
int cmd_estimate(const RunConfig& cfg);
int cmd_counterfactual(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

}  // namespace twocabin
