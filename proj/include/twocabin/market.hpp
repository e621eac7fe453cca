#pragma once
#include <functional>
#include <utility>
#include <vector>

#include "twocabin/demand.hpp"
#include "twocabin/random.hpp"

namespace twocabin {

/// Unsold seats by cabin; the dynamic-programming state.
struct CabinState {
    int k_e = 0;
    int k_f = 0;

    bool operator==(const CabinState&) const = default;
};

/// One period's controls: posted prices and integer seat-release caps.
struct PolicyEntry {
    double p_e = 0.0;
    double p_f = 0.0;
    int q_e = 0;
    int q_f = 0;
};

/// Generalized policy used internally and by the screening counterfactual:
/// type-specific prices, shared integer caps, and an optional pooled cap on
/// total sales across cabins (negative disables it).
struct TypedPolicy {
    PricePair business;
    PricePair leisure;
    int q_e = 0;
    int q_f = 0;
    int cap_total = -1;

    static TypedPolicy from(const PolicyEntry& pol) {
        return {{pol.p_e, pol.p_f}, {pol.p_e, pol.p_f}, pol.q_e, pol.q_f, -1};
    }
};

/// Market-clearing conventions.  re_choice: an arrival finding its preferred
/// cabin exhausted re-evaluates among the remaining options (default); with
/// re_choice off it walks away instead.
struct MarketRules {
    bool re_choice = true;
};

struct ServedPassenger {
    PassengerType type;
    double v = 0.0;
    double xi = 1.0;
    Cabin cabin = Cabin::Economy;
    double fare = 0.0;
};

/// The arrival's choice among the open options: 1 first class, 0 economy,
/// -1 outside.  Ties go to first class, and buying beats indifference to the
/// outside option.
int choose_option(double v, double xi, const PricePair& prices, bool open_e, bool open_f);

struct PeriodOutcome {
    int sales_e = 0;
    int sales_f = 0;
    std::vector<ServedPassenger> served;
    int turned_away = 0;  // arrivals who wanted a seat but were not served
};

/// Exact distribution of (sales_e, sales_f) for one period, with the
/// probability-weighted expected revenue accumulated per cell (so screening
/// mechanisms with type-specific fares need no type-indexed state).
struct SalesPmf {
    int a_max = 0;  // support bound on economy sales
    int b_max = 0;  // support bound on first-class sales
    std::vector<double> prob;  // (a_max+1)*(b_max+1), row-major in b
    std::vector<double> rev;   // E[revenue * 1{cell}] per cell

    double p(int a, int b) const { return prob[idx(a, b)]; }
    double r(int a, int b) const { return rev[idx(a, b)]; }
    std::size_t idx(int a, int b) const {
        return static_cast<std::size_t>(a) * static_cast<std::size_t>(b_max + 1) +
               static_cast<std::size_t>(b);
    }

    double expected_sales_e() const;
    double expected_sales_f() const;
    double expected_revenue() const;
};

/// Reusable buffers for the within-period chain; one per worker thread.
struct ChainWorkspace {
    std::vector<double> cur_p, cur_r, nxt_p, nxt_r;
};

/// Per-arrival purchase probabilities and conditional fares for each
/// availability regime, pooled over the type mixture of period t.
struct RegimeChoice {
    // indexed by: 0 = BothOpen, 1 = EconomyOnly, 2 = FirstOnly
    double pe[3] = {0, 0, 0};
    double pf[3] = {0, 0, 0};
    double fare_e[3] = {0, 0, 0};
    double fare_f[3] = {0, 0, 0};

    static RegimeChoice make(const FlightParams& p, int t, const TypedPolicy& pol,
                             const MarketRules& rules = {});
};

/// Exact sales distribution by conditioning on the Poisson arrival count and
/// evolving an arrival-by-arrival chain over sold counts; the per-arrival
/// choice law switches with the availability regime as caps fill.
SalesPmf sales_pmf(const FlightParams& p, int t, const CabinState& state,
                   const PolicyEntry& pol, double eps = 1e-10,
                   const MarketRules& rules = {});

SalesPmf sales_pmf_typed(const FlightParams& p, int t, const CabinState& state,
                         const TypedPolicy& pol, double eps = 1e-10,
                         const MarketRules& rules = {});

/// Low-level entry point with caller-owned buffers and a precomputed choice
/// table.
SalesPmf sales_pmf_with(ChainWorkspace& ws, const RegimeChoice& rc, double lambda_t,
                        const CabinState& state, const TypedPolicy& pol, double eps);

/// Fused expected one-period value: flow profit plus the continuation
/// expectation, evaluated without materializing the pmf.  cont_at_sales is
/// called as cont(sales_e, sales_f).  This is the solver's hot path; it must
/// agree with the sales_pmf route to numerical precision.
double chain_value(ChainWorkspace& ws, const RegimeChoice& rc, double lambda_t,
                   const CabinState& state, const TypedPolicy& pol, double eps,
                   double c_e, double c_f,
                   const std::function<double(int, int)>& cont_at_sales);

/// Push-forward of sales_pmf onto next-period states.
std::vector<std::pair<CabinState, double>> transition_kernel(
    const FlightParams& p, int t, const CabinState& state, const PolicyEntry& pol,
    double eps = 1e-10, const MarketRules& rules = {});

/// Single-cabin uncensored transition law: reaching m' from m is a Poisson
/// draw of m - m' sales at rate lambda_t * buy_prob, with the leftover tail
/// mass pooled at the sell-out state m' = 0.  Indexed by m'.
std::vector<double> single_cabin_kernel(double lambda_t, double buy_prob, int m);

/// Expected one-period profit sum((p - c) * sales) under the exact pmf.
double expected_flow_profit(const FlightParams& p, int t, const CabinState& state,
                            const PolicyEntry& pol, double eps = 1e-10,
                            const MarketRules& rules = {});

/// Monte Carlo realization of one period: Poisson arrival count, iid types
/// and tastes, sequential choices in arrival order with regime switching as
/// caps fill.  Consumes a fixed number of uniforms per arrival.
PeriodOutcome simulate_period(RandomStream& s, const FlightParams& p, int t,
                              const CabinState& state, const PolicyEntry& pol,
                              const MarketRules& rules = {});

PeriodOutcome simulate_period_typed(RandomStream& s, const FlightParams& p, int t,
                                    const CabinState& state, const TypedPolicy& pol,
                                    const MarketRules& rules = {});

}  // namespace twocabin
