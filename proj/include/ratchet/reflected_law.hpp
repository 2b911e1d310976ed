// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <numbers>

#include "ratchet/error.hpp"
#include "ratchet/normal.hpp"

namespace ratchet {

/// Law of R = u + √(2α)B + (α−ρ)τ + L reflected at zero.
class ReflectedBmLaw {
public:
    ReflectedBmLaw(double alpha, double rho) : alpha_(alpha), rho_(rho) {
        require(alpha >= 0.0 && std::isfinite(alpha), "reflected law: alpha must be >= 0");
        require(rho >= 0.0 && std::isfinite(rho), "reflected law: rho must be >= 0");
    }

    double alpha() const { return alpha_; }
    double drift() const { return alpha_ - rho_; }

    /// P(R_τ ≤ m | R_0 = u).
    double cdf(double u, double tau, double m) const {
        require(u >= 0.0 && tau >= 0.0, "reflected law: need u >= 0, tau >= 0");
        if (m < 0.0) return 0.0;
        if (tau == 0.0 || alpha_ == 0.0) {
            const double level = std::max(u + drift() * tau, 0.0);
            return m >= level ? 1.0 : 0.0;
        }
        const double sd = std::sqrt(2.0 * alpha_ * tau);
        const double mt = drift() * tau;
        const double c = drift() / alpha_;
        const double x2 = (-u - m - mt) / sd;
        const double p = norm_cdf((-u + m - mt) / sd) - std::exp(c * m + log_norm_cdf(x2));
        return std::clamp(p, 0.0, 1.0);
    }

    /// Density ψ(m, u, τ). Negative round-off below 1e-12 is clamped to zero and counted.
    double density(double m, double u, double tau, std::size_t* clamped = nullptr) const {
        require(alpha_ > 0.0, "reflected law: density undefined for alpha = 0 (point mass)");
        require(tau > 0.0, "reflected law: density undefined for tau = 0 (point mass)");
        require(u >= 0.0, "reflected law: need u >= 0");
        if (m < 0.0) return 0.0;
        const double sd = std::sqrt(2.0 * alpha_ * tau);
        const double mt = drift() * tau;
        const double c = drift() / alpha_;
        const double x1 = (-u + m - mt) / sd;
        const double x2 = (-u - m - mt) / sd;
        double v = norm_pdf(x1) / sd + std::exp(c * m - 0.5 * x2 * x2) / (sd * std::sqrt(2.0 * std::numbers::pi));
        if (c != 0.0) v -= c * std::exp(c * m + log_norm_cdf(x2));
        if (v < 0.0) {
            if (v < -1e-12) throw NumericalError("reflected law: negative density beyond round-off");
            if (clamped) ++*clamped;
            v = 0.0;
        }
        return v;
    }

private:
    double alpha_;
    double rho_;
};

}  // namespace ratchet
