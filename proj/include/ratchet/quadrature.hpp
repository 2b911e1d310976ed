// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace ratchet {

/// Adaptive Gauss–Kronrod on [a, b]; b may be +infinity.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12, double* err = nullptr) {
    if (a == b) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, rel_tol, err);
}

/// Γ(s) = ∫₀^H (4απr)^{−½}e^{−μ̃²r/(4α)}dr + H∫_H^∞ (4απr³)^{−½}e^{−μ̃²r/(4α)}dr with H = T − s,
/// evaluated after r = q² to remove the endpoint singularities.
inline double gamma_weight(double alpha, double mu_tilde, double remaining) {
    if (remaining <= 0.0) return 0.0;
    const double c = mu_tilde * mu_tilde / (4.0 * alpha);
    const double k = 2.0 / std::sqrt(4.0 * alpha * std::numbers::pi);
    const double root = std::sqrt(remaining);
    const double near = integrate([&](double q) { return k * std::exp(-c * q * q); }, 0.0, root);
    const double far = integrate(
        [&](double q) { return q > 0.0 ? k * std::exp(-c * q * q) / (q * q) : 0.0; }, root,
        std::numeric_limits<double>::infinity());
    return near + remaining * far;
}

}  // namespace ratchet
