#include "twocabin/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace twocabin {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

double normal_pdf(double x) {
    return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

double normal_quantile(double p) {
    // Wichura (1988), algorithm AS 241, PPND16.
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                  3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

TruncNormal::TruncNormal(double mu_, double sigma_) : mu(mu_), sigma(sigma_) {
    if (!(sigma > 0.0) || !std::isfinite(mu) || !std::isfinite(sigma))
        throw std::domain_error("TruncNormal: sigma must be positive and finite");
    alpha_ = -mu / sigma;
    cdf_alpha_ = normal_cdf(alpha_);
    mass_ = normal_cdf(mu / sigma);  // 1 - Phi(alpha), computed without cancellation
    if (mass_ <= 0.0)
        throw std::domain_error("TruncNormal: no mass above the truncation point");
}

double TruncNormal::cdf(double x) const {
    if (!std::isfinite(x)) {
        if (std::isnan(x)) throw std::domain_error("TruncNormal::cdf: non-finite x");
        return x > 0.0 ? 1.0 : 0.0;
    }
    if (x <= 0.0) return 0.0;
    const double z = (x - mu) / sigma;
    const double p = (normal_cdf(z) - cdf_alpha_) / mass_;
    return std::clamp(p, 0.0, 1.0);
}

double TruncNormal::pdf(double x) const {
    if (x < 0.0) return 0.0;
    const double z = (x - mu) / sigma;
    return normal_pdf(z) / (sigma * mass_);
}

double TruncNormal::quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    const double p = cdf_alpha_ + u * mass_;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return std::max(mu + sigma * 8.5, 0.0) + sigma;  // effectively the upper tail
    return std::max(mu + sigma * normal_quantile(p), 0.0);
}

double TruncNormal::mean() const {
    return mu + sigma * normal_pdf(alpha_) / mass_;
}

PremiumDist::PremiumDist(double mu_xi_) : mu_xi(mu_xi_) {
    if (!(mu_xi > 0.0) || !std::isfinite(mu_xi))
        throw std::domain_error("PremiumDist: mu_xi must be positive and finite");
}

double PremiumDist::tail(double x) const {
    if (x <= 1.0) return 1.0;
    return std::exp(-(x - 1.0) / mu_xi);
}

double PremiumDist::pdf(double x) const {
    if (x < 1.0) return 0.0;
    return std::exp(-(x - 1.0) / mu_xi) / mu_xi;
}

double PremiumDist::quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0 - 1e-16);
    return 1.0 - mu_xi * std::log1p(-u);
}

int PoissonWeights::sample(RandomStream& s) const {
    const double u = s.uniform01();
    double cum = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        cum += weights[static_cast<std::size_t>(n)];
        if (u < cum) return n;
    }
    return n_max;
}

PoissonWeights poisson_weights(double lambda, double eps) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::domain_error("poisson_weights: lambda must be >= 0 and finite");
    if (!(eps > 0.0 && eps < 1.0))
        throw std::domain_error("poisson_weights: eps must lie in (0,1)");

    PoissonWeights out;
    if (lambda == 0.0) {
        out.weights = {1.0};
        out.n_max = 0;
        return out;
    }

    std::vector<double> w;
    double cum = 0.0;
    if (lambda <= 300.0) {
        double p = std::exp(-lambda);
        int n = 0;
        w.push_back(p);
        cum = p;
        // keep going past the mode until the retained mass reaches 1 - eps
        while (cum < 1.0 - eps || n < lambda) {
            ++n;
            p *= lambda / n;
            w.push_back(p);
            cum += p;
            if (n > 10'000'000) break;
        }
    } else {
        // large rates: build the pmf in log space to dodge underflow at n=0
        const int hi = static_cast<int>(lambda + 12.0 * std::sqrt(lambda) + 50.0);
        w.resize(static_cast<std::size_t>(hi) + 1);
        const double loglam = std::log(lambda);
        for (int n = 0; n <= hi; ++n)
            w[static_cast<std::size_t>(n)] = std::exp(-lambda + n * loglam - std::lgamma(n + 1.0));
        int n = static_cast<int>(lambda);
        cum = 0.0;
        for (int k = 0; k <= n; ++k) cum += w[static_cast<std::size_t>(k)];
        while (cum < 1.0 - eps && n < hi) {
            ++n;
            cum += w[static_cast<std::size_t>(n)];
        }
        w.resize(static_cast<std::size_t>(n) + 1);
    }

    out.n_max = static_cast<int>(w.size()) - 1;
    out.truncated_mass = std::max(0.0, 1.0 - cum);
    out.renormalized = true;
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    out.weights = std::move(w);
    return out;
}

}  // namespace twocabin
