#pragma once
#include <string>

#include <json.hpp>

#include "twocabin/demand.hpp"
#include "twocabin/solver.hpp"

namespace twocabin {

/// Shortest round-trip decimal form of a double (std::to_chars), used for
/// every number we write so that reruns are byte-identical.
std::string format_double(double x);

void to_json(nlohmann::json& j, const FlightParams& p);
void from_json(const nlohmann::json& j, FlightParams& p);

void to_json(nlohmann::json& j, const SolverConfig& cfg);
void from_json(const nlohmann::json& j, SolverConfig& cfg);

void to_json(nlohmann::json& j, const TypedPolicy& p);
void from_json(const nlohmann::json& j, TypedPolicy& p);

}  // namespace twocabin
