#pragma once
#include <functional>
#include <vector>

#include "twocabin/distributions.hpp"

namespace twocabin {

/// Adaptive Gauss-Legendre integral of f on [a, b] (plain Lebesgue measure).
/// abs_tol is an absolute error target; throws NumericalError if the
/// refinement limit is hit first.
double integrate_interval(const std::function<double(double)>& f, double a, double b,
                          double abs_tol);

/// Integral of f against the truncated-normal law d over [0, inf).
/// The domain is split at each breakpoint (price-induced kinks), integrated
/// adaptively up to mu + 10 sigma, and tail-mapped beyond.  tol is relative.
double integrate_v(const std::function<double(double)>& f, const TruncNormal& d,
                   const std::vector<double>& breakpoints = {}, double tol = 1e-8);

}  // namespace twocabin
