#include "twocabin/demand.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twocabin/quadrature.hpp"

namespace twocabin {

void FlightParams::validate() const {
    auto fail = [](const char* what) { throw std::domain_error(what); };
    if (!(mu_l > 0.0) || !std::isfinite(mu_l)) fail("FlightParams: mu_l must be positive");
    if (!(cv_l > 0.0)) fail("FlightParams: cv_l must be positive");
    if (!(delta_b >= 0.0)) fail("FlightParams: delta_b must be >= 0");
    if (!(cv_b > 0.0)) fail("FlightParams: cv_b must be positive");
    if (!(mu_xi > 0.0)) fail("FlightParams: mu_xi must be positive");
    if (!(lambda0 >= 0.0)) fail("FlightParams: lambda0 must be >= 0");
    if (!std::isfinite(d_lambda)) fail("FlightParams: d_lambda must be finite");
    if (!(d_theta >= 0.0)) fail("FlightParams: d_theta must be >= 0");
    if (T < 1) fail("FlightParams: T must be >= 1");
    if (!(c_e >= 0.0) || !(c_f >= c_e)) fail("FlightParams: need c_f >= c_e >= 0");
}

namespace {

void check_period(const FlightParams& p, int t) {
    if (t < 1 || t > p.T) throw std::out_of_range("period t outside 1..T");
}

// Choice probabilities for one type with value law F and premium xi.
TypeChoice type_choice(const TruncNormal& values, const PremiumDist& xi, double p_e,
                       double p_f, Regime regime) {
    if (!(p_e >= 0.0) || !(p_f >= 0.0))
        throw std::domain_error("choice_probs: prices must be >= 0");
    TypeChoice out;
    out.fare_e = p_e;
    out.fare_f = p_f;
    switch (regime) {
        case Regime::Closed:
            out.fare_e = out.fare_f = 0.0;
            return out;
        case Regime::EconomyOnly:
            out.p_e = 1.0 - values.cdf(p_e);
            out.p_out = 1.0 - out.p_e;
            return out;
        case Regime::FirstOnly:
            if (!std::isinf(p_f)) {
                out.p_f = std::clamp(
                    integrate_v(
                        [&](double v) { return xi.tail(p_f / std::max(v, 1e-300)); },
                        values, {p_f}),
                    0.0, 1.0);
                out.p_out = 1.0 - out.p_f;
            }
            return out;
        case Regime::BothOpen:
            break;
    }
    // Both cabins open.  Conditional on v, first class needs
    // xi >= max(p_f/v, 1 + (p_f - p_e)/v): the first term beats the outside
    // option, the second beats economy (and binds exactly when v >= p_e).
    // Economy needs v >= p_e and xi below that second threshold.
    const double gap = p_f - p_e;
    if (!std::isinf(p_f)) {
        out.p_f = integrate_v(
            [&](double v) {
                v = std::max(v, 1e-300);
                return xi.tail(std::max(p_f / v, 1.0 + gap / v));
            },
            values, {p_e, p_f});
    }
    if (std::isinf(p_f)) {
        out.p_e = 1.0 - values.cdf(p_e);
    } else if (gap > 0.0) {
        out.p_e = integrate_v(
            [&](double v) {
                if (v < p_e) return 0.0;
                return 1.0 - xi.tail(1.0 + gap / std::max(v, 1e-300));
            },
            values, {p_e, p_f});
    }
    // gap <= 0 leaves p_e at zero: xi >= 1 makes first class dominate.
    out.p_e = std::clamp(out.p_e, 0.0, 1.0);
    out.p_f = std::clamp(out.p_f, 0.0, 1.0 - out.p_e);
    out.p_out = std::max(0.0, 1.0 - out.p_e - out.p_f);
    return out;
}

TypeChoice mix_types(const TypeChoice& b, const TypeChoice& l, double theta) {
    TypeChoice m;
    m.p_e = theta * b.p_e + (1.0 - theta) * l.p_e;
    m.p_f = theta * b.p_f + (1.0 - theta) * l.p_f;
    m.p_out = theta * b.p_out + (1.0 - theta) * l.p_out;
    const double rev_e = theta * b.p_e * b.fare_e + (1.0 - theta) * l.p_e * l.fare_e;
    const double rev_f = theta * b.p_f * b.fare_f + (1.0 - theta) * l.p_f * l.fare_f;
    m.fare_e = m.p_e > 0.0 ? rev_e / m.p_e : 0.0;
    m.fare_f = m.p_f > 0.0 ? rev_f / m.p_f : 0.0;
    return m;
}

}  // namespace

double arrival_rate(const FlightParams& p, int t) {
    check_period(p, t);
    return std::max(0.0, p.lambda0 + p.d_lambda * (t - 1));
}

double business_share(const FlightParams& p, int t) {
    check_period(p, t);
    return std::min(p.d_theta * (t - 1), 1.0);
}

ChoiceProbs choice_probs_typed(const FlightParams& p, int t, const PricePair& business,
                               const PricePair& leisure, Regime regime) {
    check_period(p, t);
    const PremiumDist xi = p.premium();
    ChoiceProbs out;
    out.business = type_choice(p.business_values(), xi, business.p_e, business.p_f, regime);
    out.leisure = type_choice(p.leisure_values(), xi, leisure.p_e, leisure.p_f, regime);
    out.pooled = mix_types(out.business, out.leisure, business_share(p, t));
    return out;
}

ChoiceProbs choice_probs(const FlightParams& p, int t, double p_e, double p_f,
                         Regime regime) {
    return choice_probs_typed(p, t, PricePair{p_e, p_f}, PricePair{p_e, p_f}, regime);
}

std::pair<double, double> expected_demand(const FlightParams& p, int t, double p_e,
                                          double p_f) {
    const double lam = arrival_rate(p, t);
    if (lam == 0.0) return {0.0, 0.0};
    const ChoiceProbs cp = choice_probs(p, t, p_e, p_f, Regime::BothOpen);
    return {lam * cp.pooled.p_e, lam * cp.pooled.p_f};
}

std::vector<std::pair<double, double>> wtp_density(const FlightParams& p, int t,
                                                   Cabin cabin, int grid_n) {
    check_period(p, t);
    const double theta = business_share(p, t);
    const TruncNormal fb = p.business_values();
    const TruncNormal fl = p.leisure_values();
    const PremiumDist xi = p.premium();

    const double vmax_e = std::max(fb.mu + 8.0 * fb.sigma, fl.mu + 8.0 * fl.sigma);
    const double vmax = (cabin == Cabin::Economy)
                            ? vmax_e
                            : vmax_e * (1.0 + p.mu_xi * std::log(1e8));

    // density of w = v*xi for one type: integral of f_v(v) f_xi(w/v) / v
    auto first_density = [&](const TruncNormal& f, double w) {
        return integrate_v(
            [&](double v) {
                if (v <= 0.0 || v > w) return 0.0;
                return xi.pdf(w / v) / v;
            },
            f, {w}, 1e-9);
    };

    std::vector<std::pair<double, double>> curve(static_cast<std::size_t>(grid_n));
    for (int i = 0; i < grid_n; ++i) {
        const double w = vmax * (i + 0.5) / grid_n;
        double dens;
        if (cabin == Cabin::Economy) {
            dens = theta * fb.pdf(w) + (1.0 - theta) * fl.pdf(w);
        } else {
            dens = theta * first_density(fb, w) + (1.0 - theta) * first_density(fl, w);
        }
        curve[static_cast<std::size_t>(i)] = {w, dens};
    }
    return curve;
}

}  // namespace twocabin
