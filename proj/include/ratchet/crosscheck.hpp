// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ratchet/dual_mc.hpp"
#include "ratchet/dual_pde.hpp"
#include "ratchet/primal.hpp"
#include "ratchet/rng.hpp"

namespace ratchet {

/// One line of a pass/fail matrix: |value − reference| ≤ tolerance, or a bound when reference is NaN.
struct CheckRow {
    std::string check;
    std::string point;
    double value = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct CheckMatrix {
    std::vector<CheckRow> rows;
    bool ok() const {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.passed; });
    }
    std::size_t failures() const {
        return std::count_if(rows.begin(), rows.end(), [](const CheckRow& r) { return !r.passed; });
    }
    void append(const CheckMatrix& o) { rows.insert(rows.end(), o.rows.begin(), o.rows.end()); }
};

namespace detail {
inline std::string at_point(std::initializer_list<std::pair<const char*, double>> kv) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [k, v] : kv) {
        os << (first ? "" : " ") << k << '=' << v;
        first = false;
    }
    return os.str();
}
}  // namespace detail

struct TzPoint {
    double t, z;
};

/// PDE against MC: |h_pde − h_mc| ≤ max(3·SE, 0.02|h| + |h_fine − h_coarse|).
inline CheckMatrix dual_equivalence(const Model& model, const DualField& fine, const DualField& coarse,
                                    const std::vector<TzPoint>& points, const std::vector<double>& us,
                                    const McConfig& mc) {
    CheckMatrix m;
    for (const auto& p : points) {
        const auto est = dual_mc(model, p.t, p.z, us, mc);
        for (std::size_t j = 0; j < us.size(); ++j) {
            const double hf = fine.eval(p.t, p.z, us[j]).h;
            const double hc = coarse.eval(p.t, p.z, us[j]).h;
            const auto& e = est[j].h;
            const double tol = std::max(3.0 * e.std_error, 0.02 * std::abs(hf) + std::abs(hf - hc));
            m.rows.push_back({"h pde vs mc", detail::at_point({{"t", p.t}, {"z", p.z}, {"u", us[j]}}), hf, e.value,
                              tol, std::abs(hf - e.value) <= tol});
        }
    }
    return m;
}

/// MC h_u at u = 0 vanishes identically; v_x(t,z,0) from a one-sided difference of the recovered value.
inline CheckMatrix neumann_checks(const Model& model, const PrimalSolution& sol, const std::vector<TzPoint>& points,
                                  const McConfig& mc) {
    CheckMatrix m;
    for (const auto& p : points) {
        const auto e = dual_mc(model, p.t, p.z, 0.0, mc);
        m.rows.push_back({"mc h_u(t,z,0) == 0", detail::at_point({{"t", p.t}, {"z", p.z}}), e.h_u.value, 0.0, 0.0,
                          e.h_u.value == 0.0});
        const double xi = sol.xi(p.t, p.z);
        const double eps = 1e-4 * std::max(xi, 1e-8);
        const double vx = (sol.value(p.t, p.z, eps) - sol.value(p.t, p.z, 0.0)) / eps;
        m.rows.push_back({"v_x(t,z,0) in [0.99,1.01]", detail::at_point({{"t", p.t}, {"z", p.z}}), vx, 1.0, 0.01,
                          std::abs(vx - 1.0) <= 0.01});
    }
    return m;
}

/// Second differences of v̂ in y, 0 ≤ v_x ≤ 1 and the 1-Lipschitz bound on random pairs.
inline CheckMatrix shape_checks(const PrimalSolution& sol, const std::vector<TzPoint>& points, int n_pairs,
                                std::uint64_t seed) {
    CheckMatrix m;
    const auto& F = sol.field();
    for (const auto& p : points) {
        const int n = 200;
        const double ylo = std::max(F.y_floor(), 1e-4);
        std::vector<double> ys(n), vh(n);
        for (int k = 0; k < n; ++k) {
            ys[k] = ylo + (1.0 - ylo) * k / (n - 1);
            vh[k] = F.vhat(p.t, p.z, ys[k]).v;
        }
        double worst = 0.0;
        for (int k = 1; k + 1 < n; ++k) worst = std::min(worst, vh[k + 1] - 2.0 * vh[k] + vh[k - 1]);
        m.rows.push_back({"vhat second difference in y >= -1e-8", detail::at_point({{"t", p.t}, {"z", p.z}}), worst,
                          std::nan(""), 1e-8, worst >= -1e-8});
    }
    PathRng rng(seed, 0);
    double worst_lip = 0.0, vx_lo = 1.0, vx_hi = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        const auto& p = points[i % points.size()];
        const double span = 1.2 * std::max(sol.xi(p.t, p.z), 1e-6);
        const double x1 = span * rng.uniform(), x2 = span * rng.uniform();
        const double v1 = sol.value(p.t, p.z, x1), v2 = sol.value(p.t, p.z, x2);
        worst_lip = std::max(worst_lip, std::abs(v1 - v2) - std::abs(x1 - x2));
        const double vx = sol.point(p.t, p.z, x1).v_x;
        vx_lo = std::min(vx_lo, vx);
        vx_hi = std::max(vx_hi, vx);
    }
    m.rows.push_back({"|v(x1)-v(x2)| <= |x1-x2|", "random pairs", worst_lip, std::nan(""), 1e-9, worst_lip <= 1e-9});
    m.rows.push_back({"min v_x >= 0", "random x", vx_lo, std::nan(""), 0.0, vx_lo >= 0.0});
    m.rows.push_back({"max v_x <= 1", "random x", vx_hi, std::nan(""), 0.0, vx_hi <= 1.0});
    return m;
}

/// Relative primal HJB residual at random interior points of the region x < ξ.
inline CheckMatrix hjb_checks(const PrimalSolution& sol, int n_points, double z_lo, double z_hi, std::uint64_t seed,
                              double tol = 5e-2) {
    CheckMatrix m;
    const auto& F = sol.field();
    PathRng rng(seed, 1);
    for (int i = 0; i < n_points; ++i) {
        const double t = 0.9 * F.horizon * rng.uniform();
        const double z = z_lo + (z_hi - z_lo) * rng.uniform();
        const double x = (0.05 + 0.85 * rng.uniform()) * sol.xi(t, z);
        const auto r = sol.hjb_residual(t, z, x);
        m.rows.push_back({"relative hjb residual", detail::at_point({{"t", t}, {"z", z}, {"x", x}}), r.relative(),
                          std::nan(""), tol, r.relative() <= tol});
    }
    return m;
}

/// Central part of the factor range, away from the artificial z boundaries.
inline std::pair<double, double> interior_z(const DualField& F, double frac = 0.5) {
    if (F.n_z() == 1) return {F.z_nodes[0], F.z_nodes[0]};
    const double c = 0.5 * (F.z_lo() + F.z_hi()), w = 0.5 * frac * (F.z_hi() - F.z_lo());
    return {c - w, c + w};
}

}  // namespace ratchet
