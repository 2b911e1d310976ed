// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "ratchet/dual_pde.hpp"
#include "ratchet/error.hpp"
#include "ratchet/model.hpp"

namespace ratchet {

struct PrimalPoint {
    double v = 0, v_t = 0, v_x = 0, v_xx = 0, v_z = 0, v_zz = 0, v_xz = 0;
    double y = 1.0;
    bool in_region = true;  ///< x < ξ(t,z)
};

struct HjbResidual {
    double residual = 0.0;
    double scale = 1.0;
    double relative() const { return std::abs(residual) / scale; }
};

struct PrimalRow {
    double x, v, v_x;
    Eigen::VectorXd theta;
};

/// Primal value, feedback strategy and HJB diagnostics recovered from a solved dual field.
class PrimalSolution {
public:
    PrimalSolution(const Model& model, const DualField& field) : model_(model), field_(field) {}

    const DualField& field() const { return field_; }
    const Model& model() const { return model_; }

    double xi(double t, double z) const { return std::max(0.0, field_.xi(t, z)); }

    /// y* solving v̂_y(t,z,y) = −x; nullopt when x ≥ ξ(t,z) (limit y* ↓ 0).
    std::optional<double> ystar(double t, double z, double x) const {
        require(x >= 0.0 && std::isfinite(x), "ystar: x must be >= 0");
        if (x == 0.0) return 1.0;
        const double ert = std::exp(field_.rho * t);
        auto q = [&](double u) { return ert * std::exp(u) * field_.eval(t, z, u).h_u; };
        const double umax = field_.u_max;
        if (x >= xi(t, z) || x >= q(umax)) return std::nullopt;
        double lo = 0.0, hi = umax;
        if (q(lo) >= x) return 1.0;
        while (hi - lo > 1e-6) {
            const double mid = 0.5 * (lo + hi);
            (q(mid) < x ? lo : hi) = mid;
        }
        double u = 0.5 * (lo + hi);
        for (int it = 0; it < 8; ++it) {
            const auto p = field_.eval(t, z, u);
            const double eu = ert * std::exp(u);
            const double r = eu * p.h_u - x;
            if (std::abs(r) <= 1e-12 * (1.0 + x)) break;
            const double dq = eu * (p.h_u + p.h_uu);
            double next = dq > 0.0 ? u - r / dq : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            (r < 0.0 ? lo : hi) = u;
            u = next;
        }
        return std::exp(-u);
    }

    PrimalPoint point(double t, double z, double x) const {
        require(x >= 0.0, "primal: x must be >= 0");
        PrimalPoint p;
        if (t >= field_.horizon) {
            p.v_x = 0.0;
            p.y = 0.0;
            p.in_region = false;
            return p;
        }
        const auto y = ystar(t, z, x);
        if (!y) {
            p.in_region = false;
            p.y = 0.0;
            return p;
        }
        const auto d = field_.vhat(t, z, *y);
        p.y = *y;
        p.v = d.v + x * *y;
        p.v_x = *y;
        if (!(d.v_yy > 0.0)) throw NumericalError("primal: non-positive dual curvature, v_xx >= 0");
        p.v_xx = -1.0 / d.v_yy;
        p.v_xz = -d.v_yz / d.v_yy;
        p.v_z = d.v_z;
        p.v_t = d.v_t;
        p.v_zz = d.v_zz + p.v_xz * p.v_xz / p.v_xx;
        return p;
    }

    double value(double t, double z, double x) const { return point(t, z, x).v; }

    /// θ* = (σσ⊤)⁻¹μ·y v̂_yy − (σσ⊤)⁻¹σγ·σ_Z(z)·v̂_yz at y = y*; outside O_T the y ↓ 0 limits are read at the grid floor.
    Eigen::VectorXd optimal_theta(double t, double z, double x) const {
        require(x >= 0.0, "optimal theta: x must be >= 0");
        const auto y = ystar(t, z, x);
        const double yy = y ? *y : field_.y_floor();
        const auto d = field_.vhat(t, z, yy);
        return theta_from_dual(z, yy * d.v_yy, d.v_yz);
    }

    Eigen::VectorXd theta_from_dual(double z, double y_vyy, double v_yz) const {
        return model_.derived.merton * y_vyy - model_.derived.hedge * (model_.factor.vol(z) * v_yz);
    }

    /// Primal HJB residual v_t − ρv − αv_x²/v_xx + ½σ_Z²(v_zz − v_xz²/v_xx) − φv_xv_xz/v_xx + μ_Zv_z − f v_x.
    HjbResidual hjb_residual(double t, double z, double x) const {
        const auto p = point(t, z, x);
        if (!p.in_region) throw DomainError("hjb residual: point outside the region x < xi(t,z)");
        const double a = model_.alpha();
        const double s = model_.factor.vol(z);
        const double f = model_.f(t, z);
        const double phi = model_.phi(z);
        HjbResidual r;
        const double terms[] = {p.v_t,
                                -model_.rho() * p.v,
                                -a * p.v_x * p.v_x / p.v_xx,
                                0.5 * s * s * (p.v_zz - p.v_xz * p.v_xz / p.v_xx),
                                -phi * p.v_x * p.v_xz / p.v_xx,
                                model_.factor.drift(z) * p.v_z,
                                -f * p.v_x};
        double mag = 0.0;
        for (double v : terms) {
            r.residual += v;
            mag = std::max(mag, std::abs(v));
        }
        r.scale = std::max(mag, 1e-300);
        return r;
    }

    /// Value w(0,z,·) of the original problem at initial capital v0 and benchmark level a.
    double original_value(double a, double v0, double z) const {
        if (v0 >= a) return -value(0.0, z, v0 - a);
        return (a - v0) - value(0.0, z, 0.0);
    }

    std::vector<PrimalRow> tabulate(double t, double z, const std::vector<double>& xs) const {
        std::vector<PrimalRow> rows;
        rows.reserve(xs.size());
        for (double x : xs) {
            const auto p = point(t, z, x);
            rows.push_back({x, p.v, p.v_x, optimal_theta(t, z, x)});
        }
        return rows;
    }

private:
    const Model& model_;
    const DualField& field_;
};

/// Precomputed θ*(t,z,x) on the dual grid for path simulation: x_j = −v̂_y(t,z,e^{−u_j}) is increasing in j,
/// so lookups need no root finding.
class FeedbackTable {
public:
    FeedbackTable(const Model& model, const DualField& field) : dim_(model.market.dim()), field_(&field) {
        const PrimalSolution sol(model, field);
        const int L = field.n_levels(), M = field.n_z(), N = field.n_u;
        x_.resize(std::size_t(L) * M * N);
        theta_.resize(std::size_t(L) * M * N * dim_);
        outside_.resize(std::size_t(L) * M * dim_);
        for (int l = 0; l < L; ++l) {
            const double t = field.t_levels[l];
            for (int i = 0; i < M; ++i) {
                const double z = field.z_nodes[i];
                double prev = 0.0;
                for (int j = 0; j < N; ++j) {
                    const double u = j * field.du();
                    const auto d = field.vhat(t, z, std::exp(-u));
                    const std::size_t k = (std::size_t(l) * M + i) * N + j;
                    x_[k] = std::max(prev, -d.v_y);
                    prev = x_[k];
                    const auto th = sol.theta_from_dual(z, std::exp(-u) * d.v_yy, d.v_yz);
                    for (int c = 0; c < dim_; ++c) theta_[k * dim_ + c] = th(c);
                }
                const auto d = field.vhat(t, z, field.y_floor());
                const auto th = sol.theta_from_dual(z, field.y_floor() * d.v_yy, d.v_yz);
                for (int c = 0; c < dim_; ++c) outside_[(std::size_t(l) * M + i) * dim_ + c] = th(c);
            }
        }
    }

    int dim() const { return dim_; }

    /// Writes θ*(t,z,x) into out (length d); linear in t, z and x between table nodes.
    void theta(double t, double z, double x, double* out) const {
        const auto& F = *field_;
        const int L = F.n_levels(), M = F.n_z();
        t = std::clamp(t, 0.0, F.horizon);
        int l = static_cast<int>(std::upper_bound(F.t_levels.begin(), F.t_levels.end(), t) - F.t_levels.begin()) - 1;
        l = std::clamp(l, 0, L - 2);
        const double wt = (t - F.t_levels[l]) / (F.t_levels[l + 1] - F.t_levels[l]);
        int i = 0;
        double wz = 0.0;
        if (M > 1) {
            const double zc = std::clamp(z, F.z_lo(), F.z_hi());
            const double dz = F.z_nodes[1] - F.z_nodes[0];
            i = std::clamp(static_cast<int>((zc - F.z_lo()) / dz), 0, M - 2);
            wz = (zc - F.z_nodes[i]) / dz;
        }
        for (int c = 0; c < dim_; ++c) out[c] = 0.0;
        for (int a = 0; a < 2; ++a) {
            const double ta = a == 0 ? 1.0 - wt : wt;
            for (int b = 0; b < (M > 1 ? 2 : 1); ++b) {
                const double zb = M > 1 ? (b == 0 ? 1.0 - wz : wz) : 1.0;
                accumulate(l + a, i + b, x, ta * zb, out);
            }
        }
    }

private:
    void accumulate(int l, int i, double x, double w, double* out) const {
        if (w == 0.0) return;
        const auto& F = *field_;
        const int N = F.n_u;
        const std::size_t base = (std::size_t(l) * F.n_z() + i) * N;
        const double* xs = x_.data() + base;
        if (x >= xs[N - 1]) {
            const double* th = outside_.data() + (std::size_t(l) * F.n_z() + i) * dim_;
            for (int c = 0; c < dim_; ++c) out[c] += w * th[c];
            return;
        }
        const int j = std::max(0, static_cast<int>(std::upper_bound(xs, xs + N, x) - xs) - 1);
        const double span = xs[j + 1] - xs[j];
        const double s = span > 0.0 ? std::clamp((x - xs[j]) / span, 0.0, 1.0) : 0.0;
        const double* t0 = theta_.data() + (base + j) * dim_;
        const double* t1 = t0 + dim_;
        for (int c = 0; c < dim_; ++c) out[c] += w * ((1.0 - s) * t0[c] + s * t1[c]);
    }

    int dim_;
    const DualField* field_;
    std::vector<double> x_, theta_, outside_;
};

}  // namespace ratchet
