// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ratchet/error.hpp"

namespace ratchet {

/// Thomas factorisation of a fixed tridiagonal matrix, reused for many right-hand sides.
/// Row k reads lower[k]·x[k−1] + diag[k]·x[k] + upper[k]·x[k+1].
class Tridiagonal {
public:
    Tridiagonal() = default;
    Tridiagonal(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper)
        : lower_(std::move(lower)), inv_(diag.size()), upper_(std::move(upper)) {
        const std::size_t n = diag.size();
        require(lower_.size() == n && upper_.size() == n, "tridiagonal: size mismatch");
        cprime_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double denom = diag[k] - (k > 0 ? lower_[k] * cprime_[k - 1] : 0.0);
            if (!(std::abs(denom) > 1e-300)) throw NumericalError("tridiagonal: zero pivot");
            inv_[k] = 1.0 / denom;
            cprime_[k] = upper_[k] * inv_[k];
        }
    }

    std::size_t size() const { return inv_.size(); }

    /// Solves in place on x[0], x[stride], x[2·stride], ...
    void solve(double* x, std::size_t stride = 1) const {
        const std::size_t n = inv_.size();
        double prev = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double& xk = x[k * stride];
            xk = (xk - (k > 0 ? lower_[k] * prev : 0.0)) * inv_[k];
            prev = xk;
        }
        for (std::size_t k = n - 1; k-- > 0;) x[k * stride] -= cprime_[k] * x[(k + 1) * stride];
    }

private:
    std::vector<double> lower_, inv_, upper_, cprime_;
};

}  // namespace ratchet
