#pragma once

#include <cmath>

#include "core.hpp"

namespace hlmvi {

inline double lgamma_fn(double x) {
    if (!(x > 0.0)) throw domain_error("lgamma: argument must be positive");
    return std::lgamma(x);
}

/// Digamma psi(x) for x > 0: upward recurrence to x >= 10, then the
/// asymptotic Stirling series. Relative error below 1e-12 on [1e-3, 1e6].
inline double digamma(double x) {
    if (!(x > 0.0)) throw domain_error("digamma: argument must be positive");
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli-number coefficients of the asymptotic expansion.
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 -
                                        inv2 * (1.0 / 132.0 -
                                                inv2 * (691.0 / 32760.0 -
                                                        inv2 * (1.0 / 12.0)))))));
    return result + std::log(x) - 0.5 * inv - series;
}

/// Multivariate log-gamma log Gamma_d(a).
inline double lgamma_multivariate(int d, double a) {
    if (d < 1) throw domain_error("lgamma_multivariate: dimension must be >= 1");
    if (!(a > 0.5 * (d - 1)))
        throw domain_error("lgamma_multivariate: argument out of domain");
    double s = 0.25 * d * (d - 1) * std::log(M_PI);
    for (int j = 1; j <= d; ++j) s += lgamma_fn(a - 0.5 * (j - 1));
    return s;
}

/// log(sum_i exp(x_i)) without overflow.
inline double log_sum_exp(const Vector& x) {
    const double m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((x.array() - m).exp().sum());
}

}  // namespace hlmvi
