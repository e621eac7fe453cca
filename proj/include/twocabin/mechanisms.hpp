#pragma once
#include <string>
#include <vector>

#include "twocabin/solver.hpp"

namespace twocabin {

/// One full realization of the demand process: per period, the arrivals in
/// their (random) arrival order with type and tastes.  Reproducible from
/// (seed, replication id) and shared across mechanisms in a comparison run.
struct ArrivalDraw {
    struct Arrival {
        bool business = false;
        double v = 0.0;
        double xi = 1.0;
    };
    std::vector<std::vector<Arrival>> periods;  // [t-1], in arrival order

    static ArrivalDraw generate(const FlightParams& p, RandomStream s);
};

struct WelfareReport {
    double producer_surplus = 0.0;
    double ps_se = 0.0;
    double consumer_surplus = 0.0;
    double cs_se = 0.0;
    double cs_business = 0.0;
    double cs_business_se = 0.0;
    double cs_leisure = 0.0;
    double cs_leisure_se = 0.0;
    double total_surplus = 0.0;
    double ts_se = 0.0;
    double seats_sold_e = 0.0;
    double seats_sold_f = 0.0;
    double load_factor = 0.0;
    long replications = 0;
};

/// Expected next-period values when the airline observes realized arrivals
/// (the perfect-discrimination continuation), estimated by Monte Carlo with
/// common random numbers across states.  Stored on the full state rectangle.
struct ObservedValueTable {
    int T = 0;
    CabinState cap;
    std::vector<std::vector<double>> v;  // [t-1][ke*(cap.k_f+1)+kf], t = 1..T

    double at(int t, int k_e, int k_f) const {
        if (t > T) return 0.0;
        return v[static_cast<std::size_t>(t - 1)]
                [static_cast<std::size_t>(k_e) * static_cast<std::size_t>(cap.k_f + 1) +
                 static_cast<std::size_t>(k_f)];
    }
};

ObservedValueTable observed_value_table(const FlightParams& p, const CabinState& cap,
                                        int batches, std::uint64_t seed, int workers = 0);

/// One period's efficient assignment of observed arrivals to the remaining
/// seats (exact passenger-indexed dynamic program) and the per-winner
/// Vickrey-Clarke-Groves payments: what the rest of the market would gain if
/// the winner vanished, peanut costs and continuation values included.
struct PeriodAuction {
    std::vector<int> assignment;   // per arrival: 1 first, 0 economy, -1 unserved
    std::vector<double> payments;  // per arrival; 0 where unserved
    double welfare = 0.0;          // assigned value net of costs plus continuation
};

PeriodAuction auction_period(const std::vector<ArrivalDraw::Arrival>& batch,
                             const CabinState& remaining, double c_e, double c_f,
                             const std::function<double(int, int)>& continuation,
                             bool with_payments = true);

struct MechanismConfig {
    int R = 5000;           // evaluation replications
    int M = 200;            // Monte Carlo batches per (t, state) for the observed table
    std::uint64_t seed = 1;
    int workers = 0;
    bool pooled_release = false;  // pool the uniform mechanism's seat release
};

/// Simulate R flights under the stored optimal policy; producer surplus adds
/// fare minus peanut cost, consumer surplus adds value minus fare by type.
WelfareReport run_baseline(const SolvedModel& model, std::uint64_t seed, int R,
                           int workers = 0);

/// Prices by reason for travel with shared seat releases, then simulation.
WelfareReport run_third_degree(const FlightParams& p, const CabinState& initial,
                               const SolverConfig& cfg, std::uint64_t seed, int R,
                               int workers = 0);

/// The airline observes each period's realized arrivals and assigns them to
/// seats to maximize value net of peanut and opportunity costs, charging each
/// winner its valuation: consumer surplus is identically zero.
WelfareReport run_first_degree(const FlightParams& p, const CabinState& initial,
                               const SolverConfig& cfg, std::uint64_t seed, int R,
                               int M = 200, int workers = 0);

/// Same efficient within-period allocation, priced by per-period
/// Vickrey-Clarke-Groves payments (the externality each winner imposes,
/// including peanut costs and continuation values).
WelfareReport run_vcg(const FlightParams& p, const CabinState& initial,
                      const SolverConfig& cfg, std::uint64_t seed, int R, int M = 200,
                      int workers = 0);

/// Offline benchmark: all arrivals pooled across periods and assigned to
/// seats to maximize total value net of peanut costs.  The report carries the
/// full-extraction split (producer takes everything); the zero-price split
/// swaps the two sides.
WelfareReport run_first_best(const FlightParams& p, const CabinState& initial,
                             std::uint64_t seed, int R, int workers = 0);

struct ComparisonRow {
    std::string mechanism;
    WelfareReport report;
    double efficiency_ratio = 0.0;  // mean TS over mean first-best TS
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    // per-replication total surplus, aligned with rows; kept for pathwise checks
    std::vector<std::vector<double>> ts_series;

    const ComparisonRow& row(const std::string& name) const;
};

/// Run every mechanism on common arrival draws.
Comparison compare(const FlightParams& p, const CabinState& initial,
                   const SolverConfig& cfg, const MechanismConfig& mcfg);

}  // namespace twocabin
