#include "twocabin/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "twocabin/common.hpp"

namespace twocabin {

namespace {

// Gauss-Legendre nodes/weights on [-1,1], generated once by Newton iteration
// on the Legendre polynomial (machine precision, no typed-in tables).
template <int N>
struct GaussLegendre {
    std::array<double, N> x{};
    std::array<double, N> w{};

    GaussLegendre() {
        for (int i = 0; i < N; ++i) {
            double xi = std::cos(M_PI * (i + 0.75) / (N + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = xi;
                for (int k = 2; k <= N; ++k) {
                    const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = N * (xi * p1 - p0) / (xi * xi - 1.0);
                const double step = p1 / dp;
                xi -= step;
                if (std::fabs(step) < 1e-16) break;
            }
            double p0 = 1.0, p1 = xi;
            for (int k = 2; k <= N; ++k) {
                const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = N * (xi * p1 - p0) / (xi * xi - 1.0);
            x[static_cast<std::size_t>(i)] = xi;
            w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - xi * xi) * dp * dp);
        }
    }
};

const GaussLegendre<15> kGL15;

template <typename F>
double gl15(const F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < 15; ++i)
        sum += kGL15.w[static_cast<std::size_t>(i)] * f(c + h * kGL15.x[static_cast<std::size_t>(i)]);
    return h * sum;
}

struct AdaptState {
    double abs_tol;
    int max_depth;
    double worst_err = 0.0;
    bool failed = false;
};

template <typename F>
double adapt(const F& f, AdaptState& st, double a, double b, double whole, int depth) {
    const double m = 0.5 * (a + b);
    const double left = gl15(f, a, m);
    const double right = gl15(f, m, b);
    const double err = std::fabs(left + right - whole);
    if (err <= st.abs_tol || depth >= st.max_depth) {
        if (err > st.abs_tol) {
            st.failed = true;
            st.worst_err = std::max(st.worst_err, err);
        }
        return left + right;
    }
    return adapt(f, st, a, m, left, depth + 1) + adapt(f, st, m, b, right, depth + 1);
}

}  // namespace

double integrate_interval(const std::function<double(double)>& f, double a, double b,
                          double abs_tol) {
    if (!(b > a)) return 0.0;
    AdaptState st{abs_tol, 40};
    const double whole = gl15(f, a, b);
    const double result = adapt(f, st, a, b, whole, 0);
    if (st.failed)
        throw NumericalError("integrate_interval: tolerance not reached", st.worst_err);
    return result;
}

double integrate_v(const std::function<double(double)>& f, const TruncNormal& d,
                   const std::vector<double>& breakpoints, double tol) {
    const double hi = d.mu + 10.0 * d.sigma;
    std::vector<double> cuts;
    cuts.push_back(0.0);
    for (double b : breakpoints)
        if (b > 0.0 && b < hi && std::isfinite(b)) cuts.push_back(b);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
               cuts.end());

    auto g = [&](double v) { return f(v) * d.pdf(v); };

    // first pass: cheap estimate to set the absolute target for the adaptive pass
    double rough = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) rough += gl15(g, cuts[i], cuts[i + 1]);
    const double scale = std::max(std::fabs(rough), 1e-3);
    const double seg_tol = tol * scale / static_cast<double>(cuts.size());

    double total = 0.0;
    double worst = 0.0;
    bool failed = false;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        AdaptState st{seg_tol, 40};
        const double whole = gl15(g, cuts[i], cuts[i + 1]);
        total += adapt(g, st, cuts[i], cuts[i + 1], whole, 0);
        failed |= st.failed;
        worst = std::max(worst, st.worst_err);
    }

    // mass beyond mu + 10 sigma: map [hi, inf) onto [0,1) via v = hi + s u/(1-u)
    auto tail = [&](double u) {
        const double om = 1.0 - u;
        const double v = hi + d.sigma * u / om;
        return g(v) * d.sigma / (om * om);
    };
    total += gl15(tail, 0.0, 1.0 - 1e-7);

    if (failed) throw NumericalError("integrate_v: tolerance not reached", worst);
    return total;
}

}  // namespace twocabin
