#pragma once
#include <vector>

#include "twocabin/random.hpp"

namespace twocabin {

/// Standard normal CDF, accurate in both tails.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Inverse standard normal CDF (Wichura's PPND16 algorithm).
/// Requires p in (0,1).
double normal_quantile(double p);

/// Normal distribution left-truncated at zero.  mu and sigma are the
/// location and scale of the untruncated law; the reported moments are
/// those of the truncated law.
struct TruncNormal {
    double mu = 0.0;
    double sigma = 1.0;
    static constexpr double lower = 0.0;

    TruncNormal() = default;
    TruncNormal(double mu_, double sigma_);

    /// P(V <= x); 0 for x <= 0.  Throws std::domain_error on non-finite x.
    double cdf(double x) const;

    /// Density of the truncated law at x (0 outside the support).
    double pdf(double x) const;

    /// Inverse CDF on the truncated scale, u in [0,1].
    double quantile(double u) const;

    /// Inverse-CDF draw: consumes exactly one uniform per variate so that
    /// common-random-number alignment survives across mechanisms.
    double sample(RandomStream& s) const { return quantile(s.uniform01()); }

    /// Mean of the truncated law.
    double mean() const;

  private:
    double alpha_ = 0.0;     // standardized truncation point, -mu/sigma
    double mass_ = 1.0;      // P(N(mu, sigma) > 0)
    double cdf_alpha_ = 0.0; // Phi(alpha_)
};

/// First-class quality premium: xi = 1 + Exponential(mean mu_xi), support
/// [1, inf), mean 1 + mu_xi.
struct PremiumDist {
    double mu_xi = 0.0;

    PremiumDist() = default;
    explicit PremiumDist(double mu_xi_);

    /// P(xi >= x): 1 for x <= 1, exp(-(x-1)/mu_xi) above.
    double tail(double x) const;

    /// Density at x (0 below 1).
    double pdf(double x) const;

    double quantile(double u) const;
    double sample(RandomStream& s) const { return quantile(s.uniform01()); }
    double mean() const { return 1.0 + mu_xi; }
};

/// Poisson pmf truncated to [0, n_max] with tail mass at most eps, then
/// renormalized so the retained weights sum to exactly one (downstream
/// transition kernels stay stochastic matrices).
struct PoissonWeights {
    std::vector<double> weights;  // weights[n] = renormalized pmf at n
    int n_max = 0;
    bool renormalized = false;
    double truncated_mass = 0.0;  // pre-renormalization tail mass

    /// Inverse-CDF draw of the truncated count.
    int sample(RandomStream& s) const;
};

/// Truncation threshold eps must lie in (0,1); lambda < 0 is a domain error.
PoissonWeights poisson_weights(double lambda, double eps = 1e-10);

}  // namespace twocabin
