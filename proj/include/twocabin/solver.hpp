#pragma once
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "twocabin/market.hpp"

namespace twocabin {

/// Controls for the backward-induction solver.
struct SolverConfig {
    enum class ReleaseMode { Auto, Full, Window, AllRemaining };

    ReleaseMode release_mode = ReleaseMode::Auto;
    int window = 16;        // half-width of the release window around expected demand
    int refine_top = 12;    // screened release pairs given a full price search
    int multistart = 3;     // price-search starts on the leading pair
    int max_price_evals = 120;
    double price_tol = 1e-7;   // relative simplex tolerance
    double poisson_eps = 1e-10;
    bool warm_start = true;    // seed from the uniform-price solution and neighbors
    bool uniform_price = false;   // constrain one price across cabins
    bool pooled_release = false;  // with uniform_price: one pooled cap across cabins
    bool typed_prices = false;    // type-specific prices (screening counterfactual)
    MarketRules rules;
    int workers = 0;  // 0: hardware concurrency

    // price box; negative entries are filled from the demand primitives
    double price_hi_e = -1.0;
    double price_hi_f = -1.0;

    std::uint64_t content_hash(const FlightParams& params) const;
};

/// Stored state range for one period: k_e in [lo_e, k_e0], k_f in [lo_f, k_f0].
/// Early periods only keep states reachable from the initial capacity.
struct StateBand {
    int lo_e = 0;
    int lo_f = 0;
    int hi_e = 0;
    int hi_f = 0;

    bool contains(const CabinState& s) const {
        return s.k_e >= lo_e && s.k_e <= hi_e && s.k_f >= lo_f && s.k_f <= hi_f;
    }
    std::size_t size() const {
        return static_cast<std::size_t>(hi_e - lo_e + 1) *
               static_cast<std::size_t>(hi_f - lo_f + 1);
    }
    std::size_t index(const CabinState& s) const {
        return static_cast<std::size_t>(s.k_e - lo_e) *
                   static_cast<std::size_t>(hi_f - lo_f + 1) +
               static_cast<std::size_t>(s.k_f - lo_f);
    }
};

/// Solved value and policy tables with enough metadata to reproduce them.
struct SolvedModel {
    FlightParams params;
    CabinState initial;
    SolverConfig cfg;
    std::vector<StateBand> bands;                 // [t-1]
    std::vector<std::vector<double>> value;       // [t-1][band index]
    std::vector<std::vector<TypedPolicy>> policy; // [t-1][band index]
    std::uint64_t content_hash = 0;

    /// V_t(state); t = T+1 returns 0.  Throws std::out_of_range off the band.
    double value_at(int t, const CabinState& s) const;
    const TypedPolicy& policy_at(int t, const CabinState& s) const;

    std::uint64_t compute_hash() const;
};

/// Backward induction over every state reachable from the initial capacity:
/// per state, enumerate integer releases (full or windowed), optimize prices
/// by multistart local search warm-started from the uniform-price solution
/// and adjacent states, and keep the argmax with deterministic tie-breaking
/// (smallest releases, then lowest prices).
SolvedModel solve(const FlightParams& params, const CabinState& initial,
                  const SolverConfig& cfg = {});

/// Same problem with one price per period across both cabins.
SolvedModel solve_uniform_price(const FlightParams& params, const CabinState& initial,
                                const SolverConfig& cfg = {});

/// Type-specific prices (business and leisure each see their own price pair)
/// with shared seat-release caps.
SolvedModel solve_third_degree(const FlightParams& params, const CabinState& initial,
                               const SolverConfig& cfg = {});

/// Warm-started variants for callers that already hold the natural reference
/// solution (the uniform-price model for solve, the two-price model for the
/// screening variant); the reference policies are injected as search
/// candidates, which also pins down the strategy-space nesting inequalities.
SolvedModel solve(const FlightParams& params, const CabinState& initial,
                  const SolverConfig& cfg, const SolvedModel& reference);
SolvedModel solve_third_degree(const FlightParams& params, const CabinState& initial,
                               const SolverConfig& cfg, const SolvedModel& reference);

struct PriceOpt {
    double p_e = 0.0;
    double p_f = 0.0;
    double value = 0.0;
};

/// One-state price optimization at fixed releases against an arbitrary
/// continuation function.
PriceOpt optimize_prices(const FlightParams& params, int t, const CabinState& state,
                         int q_e, int q_f,
                         const std::function<double(CabinState)>& v_next,
                         const SolverConfig& cfg = {});

/// Per-state opportunity costs (expected next-period value lost by removing
/// one seat, under the optimal policy's kernel), total marginal costs, the
/// price-derivative diagnostic from the first-order conditions, and the
/// state-visitation distribution from forward induction.
struct ShadowEntry {
    int t = 0;
    CabinState state;
    double visit_prob = 0.0;
    double opp_e = 0.0;
    double opp_f = 0.0;
    double mc_e = 0.0;  // opp_e + peanut cost
    double mc_f = 0.0;
    double dEV_dpe = 0.0;  // finite-difference continuation derivatives
    double dEV_dpf = 0.0;
};

struct ShadowCostReport {
    std::vector<ShadowEntry> entries;  // ordered by (t, k_e, k_f)
};

ShadowCostReport shadow_costs(const SolvedModel& model);

/// Finite-difference diagnostics of the demand-regularity conditions
/// (downward demand, concave own-price demand, negative cross-price
/// curvature) on a price grid.  Reports violations instead of failing.
struct RegularityReport {
    int points_checked = 0;
    int downward_violations = 0;
    int concavity_violations = 0;
    int cross_violations = 0;

    bool clean() const {
        return downward_violations == 0 && concavity_violations == 0 &&
               cross_violations == 0;
    }
};

RegularityReport check_regularity(const FlightParams& params, int t, double p_lo,
                                  double p_hi, int grid_n);

/// Versioned persistence; load verifies the stored content hash and format
/// version and throws std::runtime_error on mismatch or corruption.
void save_model(const SolvedModel& model, const std::string& path);
SolvedModel load_model(const std::string& path);

}  // namespace twocabin
