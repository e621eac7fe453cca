#pragma once
#include <utility>
#include <vector>

#include "twocabin/distributions.hpp"

namespace twocabin {

/// Demand primitives of one flight plus fixed per-passenger service costs
/// and the sales horizon.  Valuations are truncated normals (location mu,
/// scale cv*mu, left-truncated at zero); the business location is
/// mu_l*(1+delta_b).  Scales are parameterized as coefficients of variation
/// to stay scale-free during estimation.
struct FlightParams {
    double mu_l = 413.234;    // leisure valuation location (dollars)
    double cv_l = 0.608;      // sigma_l / mu_l
    double delta_b = 0.226;   // business premium on the location, >= 0
    double cv_b = 0.353;      // sigma_b / mu_b
    double mu_xi = 0.230;     // mean of the exponential part of the premium
    double lambda0 = 23.318;  // arrival rate in period 1
    double d_lambda = -0.071; // per-period arrival drift
    double d_theta = 0.077;   // per-period business-share drift, >= 0
    int T = 8;
    double c_e = 14.0;        // economy peanut cost
    double c_f = 40.0;        // first-class peanut cost

    double mu_b() const { return mu_l * (1.0 + delta_b); }
    double sigma_l() const { return cv_l * mu_l; }
    double sigma_b() const { return cv_b * mu_b(); }

    TruncNormal leisure_values() const { return TruncNormal(mu_l, sigma_l()); }
    TruncNormal business_values() const { return TruncNormal(mu_b(), sigma_b()); }
    PremiumDist premium() const { return PremiumDist(mu_xi); }

    /// Throws std::domain_error if any invariant fails.
    void validate() const;
};

enum class Regime { BothOpen, EconomyOnly, FirstOnly, Closed };
enum class Cabin { Economy, First };
enum class PassengerType { Business, Leisure };

/// lambda_t = lambda0 + d_lambda*(t-1), clamped below at zero.
double arrival_rate(const FlightParams& p, int t);

/// theta_t = min(d_theta*(t-1), 1); zero in the first period.
double business_share(const FlightParams& p, int t);

/// Purchase probabilities for one passenger type at given prices, plus the
/// expected fare conditional on purchase (just the posted price here; the
/// pooled aggregate needs it when types face different prices).
struct TypeChoice {
    double p_e = 0.0;
    double p_f = 0.0;
    double p_out = 1.0;
    double fare_e = 0.0;
    double fare_f = 0.0;
};

struct ChoiceProbs {
    TypeChoice business;
    TypeChoice leisure;
    TypeChoice pooled;
};

/// Prices one type faces; mechanisms that screen on the reason for travel
/// pass a different pair per type.
struct PricePair {
    double p_e = 0.0;
    double p_f = 0.0;
};

/// Exact per-arrival choice probabilities in period t under the given
/// availability regime.  An arrival buys first class when
/// v*xi - p_f >= max(0, v - p_e), economy when v - p_e >= max(0, v*xi - p_f)
/// (ties go to first class, buy beats indifference to the outside option),
/// and walks away otherwise; closed cabins drop out of the comparison.
ChoiceProbs choice_probs(const FlightParams& p, int t, double p_e, double p_f,
                         Regime regime);

/// Same, with type-specific prices.
ChoiceProbs choice_probs_typed(const FlightParams& p, int t, const PricePair& business,
                               const PricePair& leisure, Regime regime);

/// Uncensored expected per-period demand (lambda_t * P^e, lambda_t * P^f)
/// when both cabins are open.
std::pair<double, double> expected_demand(const FlightParams& p, int t, double p_e,
                                          double p_f);

/// Willingness-to-pay density for a seat in the given cabin in period t, on a
/// uniform value grid: the business/leisure mixture for economy, and the
/// distribution of v*xi under the same mixture for first class.
std::vector<std::pair<double, double>> wtp_density(const FlightParams& p, int t,
                                                   Cabin cabin, int grid_n = 4096);

}  // namespace twocabin
