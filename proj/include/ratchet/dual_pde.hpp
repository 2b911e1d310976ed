// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/tridiag.hpp"

namespace ratchet {

struct PdeConfig {
    std::optional<int> n_u;       ///< default 400 nodes per 12 units of u
    int n_z = 200;
    std::optional<double> u_max;  ///< default from the reach of the dual path, at least 12
    std::optional<double> dt;  ///< default min(1e-3, du²/(4α+1))
    std::optional<double> z_min, z_max;
    int n_levels = 101;  ///< stored time levels including t = 0 and t = T
};

/// h and its partials at one point.
struct DualPoint {
    double h = 0, h_t = 0, h_u = 0, h_uu = 0, h_z = 0, h_zz = 0, h_uz = 0;
};

/// v̂(t,z,y) = e^{ρt} h(t,z,−ln y) and its partials.
struct VhatPoint {
    double v = 0, v_t = 0, v_y = 0, v_yy = 0, v_z = 0, v_zz = 0, v_yz = 0;
};

namespace detail {

struct Lagrange {
    int first = 0;
    std::array<double, 4> w{}, d1{}, d2{};
    int count = 0;
};

/// Lagrange weights (value, first and second derivative) on `count` nodes starting at x[first].
inline Lagrange lagrange_weights(const std::vector<double>& x, double at, int count) {
    Lagrange L;
    const int n = static_cast<int>(x.size());
    count = std::min(count, n);
    L.count = count;
    auto it = std::upper_bound(x.begin(), x.end(), at);
    int hi = static_cast<int>(it - x.begin());
    int first = hi - count / 2;
    first = std::clamp(first, 0, n - count);
    L.first = first;
    for (int a = 0; a < count; ++a) {
        const double xa = x[first + a];
        double w = 1.0, d1 = 0.0, d2 = 0.0;
        double denom = 1.0;
        std::array<double, 4> r{};
        int nr = 0;
        for (int b = 0; b < count; ++b)
            if (b != a) {
                denom *= xa - x[first + b];
                r[nr++] = at - x[first + b];
            }
        w = 1.0;
        for (int i = 0; i < nr; ++i) w *= r[i];
        for (int i = 0; i < nr; ++i) {
            double p = 1.0;
            for (int j = 0; j < nr; ++j)
                if (j != i) p *= r[j];
            d1 += p;
        }
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nr; ++j) {
                if (j == i) continue;
                double p = 1.0;
                for (int k = 0; k < nr; ++k)
                    if (k != i && k != j) p *= r[k];
                d2 += p;
            }
        L.w[a] = w / denom;
        L.d1[a] = d1 / denom;
        L.d2[a] = d2 / denom;
    }
    return L;
}

/// Convection–diffusion stencil for a·∂² + b·∂ on a uniform grid, central unless the cell Péclet number exceeds 1.
inline void stencil(double a, double b, double dx, double& lo, double& mid, double& up) {
    const double diff = a / (dx * dx);
    lo = diff;
    up = diff;
    mid = -2.0 * diff;
    if (std::abs(b) * dx <= 2.0 * a) {
        lo -= b / (2.0 * dx);
        up += b / (2.0 * dx);
    } else if (b > 0.0) {
        mid -= b / dx;
        up += b / dx;
    } else {
        mid += b / dx;
        lo -= b / dx;
    }
}

}  // namespace detail

class DualField {
public:
    double horizon = 1.0;
    double rho = 0.0;
    double alpha = 0.0;
    double u_max = 12.0;
    int n_u = 0;
    double dt = 0.0;
    double cfl = 0.0;
    std::string scheme = "douglas-adi(theta=1), implicit u/z sweeps, explicit mixed term";
    std::vector<double> t_levels;  ///< ascending
    std::vector<double> z_nodes;
    std::vector<double> values;  ///< [level][iz][iu]
    std::vector<double> xi_values;  ///< [level][iz], far-field superhedge threshold

    double du() const { return u_max / (n_u - 1); }
    int n_z() const { return static_cast<int>(z_nodes.size()); }
    int n_levels() const { return static_cast<int>(t_levels.size()); }
    double z_lo() const { return z_nodes.front(); }
    double z_hi() const { return z_nodes.back(); }
    double y_floor() const { return std::exp(-u_max); }

    double at(int level, int iz, int iu) const {
        return values[(std::size_t(level) * n_z() + iz) * n_u + iu];
    }

    bool contains(double t, double z) const {
        const double tol = 1e-12 * (1.0 + std::abs(z));
        return t >= -1e-12 && t <= horizon + 1e-12 &&
               (n_z() == 1 || (z >= z_lo() - tol && z <= z_hi() + tol));
    }

    DualPoint eval(double t, double z, double u) const {
        check_domain(t, z);
        if (!(u >= 0.0 && u <= u_max * (1.0 + 1e-12)))
            throw DomainError("dual field: u outside [0, u_max]");
        u = std::min(u, u_max);
        const auto lt = detail::lagrange_weights(t_levels, t, 3);
        const auto lz = zweights(z);
        const double h = du();
        const int j = std::min(static_cast<int>(u / h), n_u - 2);
        const double B = (u - j * h) / h;
        const double A = 1.0 - B;
        const double ca = (A * A * A - A) * h * h / 6.0, cb = (B * B * B - B) * h * h / 6.0;
        const double da = -(3.0 * A * A - 1.0) * h / 6.0, db = (3.0 * B * B - 1.0) * h / 6.0;
        // the spline carries g = e^{u}h, which tends to the constant −e^{−ρt}ξ in the far field
        double g = 0, g_t = 0, g_u = 0, g_uu = 0, g_z = 0, g_zz = 0, g_uz = 0;
        for (int a = 0; a < lt.count; ++a) {
            const int lev = lt.first + a;
            for (int b = 0; b < lz.count; ++b) {
                const int iz = lz.first + b;
                const std::size_t k = (std::size_t(lev) * n_z() + iz) * n_u + j;
                const double f0 = scaled_[k], f1 = scaled_[k + 1];
                const double m0 = curvature_[k], m1 = curvature_[k + 1];
                const double val = A * f0 + B * f1 + ca * m0 + cb * m1;
                const double vu = (f1 - f0) / h + da * m0 + db * m1;
                const double vuu = A * m0 + B * m1;
                const double wt = lt.w[a] * lz.w[b];
                g += wt * val;
                g_u += wt * vu;
                g_uu += wt * vuu;
                g_t += lt.d1[a] * lz.w[b] * val;
                g_z += lt.w[a] * lz.d1[b] * val;
                g_zz += lt.w[a] * lz.d2[b] * val;
                g_uz += lt.w[a] * lz.d1[b] * vu;
            }
        }
        const double e = std::exp(-u);
        DualPoint p;
        p.h = e * g;
        p.h_u = e * (g_u - g);
        p.h_uu = e * (g_uu - 2.0 * g_u + g);
        p.h_t = e * g_t;
        p.h_z = e * g_z;
        p.h_zz = e * g_zz;
        p.h_uz = e * (g_uz - g_z);
        return p;
    }

    /// Superhedge threshold ξ(t,z) carried by the far-field boundary data.
    double xi(double t, double z) const { return xi_eval(t, z, false); }
    double xi_z(double t, double z) const { return xi_eval(t, z, true); }

    VhatPoint vhat(double t, double z, double y) const {
        if (!(y > 0.0 && y <= 1.0)) throw DomainError("vhat: y must lie in (0, 1]");
        const double u = -std::log(y);
        if (u > u_max * (1.0 + 1e-12)) throw DomainError("vhat: y below the grid floor e^{-u_max}");
        const auto p = eval(t, z, u);
        const double ert = std::exp(rho * t);
        const double eu = std::exp(u);
        VhatPoint v;
        v.v = ert * p.h;
        v.v_t = ert * (rho * p.h + p.h_t);
        v.v_y = -ert * eu * p.h_u;
        v.v_yy = ert * eu * eu * (p.h_u + p.h_uu);
        v.v_z = ert * p.h_z;
        v.v_zz = ert * p.h_zz;
        v.v_yz = -ert * eu * p.h_uz;
        return v;
    }

    void save(const std::string& path) const;
    static DualField load(const std::string& path);

private:
    void check_domain(double t, double z) const {
        if (!contains(t, z)) {
            std::ostringstream os;
            os << "dual field: (t, z) = (" << t << ", " << z << ") outside the solved grid";
            throw DomainError(os.str());
        }
    }

    detail::Lagrange zweights(double z) const {
        if (n_z() == 1) {
            detail::Lagrange l;
            l.count = 1;
            l.w[0] = 1.0;
            return l;
        }
        return detail::lagrange_weights(z_nodes, std::clamp(z, z_lo(), z_hi()), 4);
    }

public:
    /// Cubic spline in u of g = e^{u}h per (level, z) line. The end conditions are g_u = g at u = 0,
    /// which is h_u = 0, and g_uu = 0 at u_max, where h follows the far-field law h ∝ e^{−u}.
    void build_curvature() {
        const int N = n_u;
        const double step = du();
        const double h2 = step * step;
        std::vector<double> lo(N, 1.0), di(N, 4.0), up(N, 1.0);
        lo[0] = 0.0;
        di[0] = 2.0;
        lo[N - 1] = 0.0;
        di[N - 1] = 1.0;
        up[N - 1] = 0.0;
        const Tridiagonal spline(std::move(lo), std::move(di), std::move(up));
        std::vector<double> eu(N);
        for (int j = 0; j < N; ++j) eu[j] = std::exp(j * step);
        scaled_.resize(values.size());
        curvature_.assign(values.size(), 0.0);
        const std::size_t lines = values.size() / N;
        for (std::size_t l = 0; l < lines; ++l) {
            double* y = scaled_.data() + l * N;
            for (int j = 0; j < N; ++j) y[j] = eu[j] * values[l * N + j];
            double* m = curvature_.data() + l * N;
            m[0] = 6.0 * ((y[1] - y[0]) / step - y[0]) / step;
            for (int j = 1; j < N - 1; ++j) m[j] = 6.0 * (y[j + 1] - 2.0 * y[j] + y[j - 1]) / h2;
            m[N - 1] = 0.0;
            spline.solve(m);
        }
    }

private:
    std::vector<double> scaled_, curvature_;

    double xi_eval(double t, double z, bool dz) const {
        check_domain(t, z);
        const auto lt = detail::lagrange_weights(t_levels, t, 3);
        const auto lz = zweights(z);
        double out = 0.0;
        for (int a = 0; a < lt.count; ++a)
            for (int b = 0; b < lz.count; ++b)
                out += lt.w[a] * (dz ? lz.d1[b] : lz.w[b]) *
                       xi_values[std::size_t(lt.first + a) * n_z() + lz.first + b];
        return out;
    }
};

inline std::pair<double, double> pde_z_range(const Model& model, const PdeConfig& cfg) {
    auto [lo, hi] = factor_range(model.factor, model.horizon);
    if (cfg.z_min) lo = *cfg.z_min;
    if (cfg.z_max) hi = *cfg.z_max;
    require(hi > lo, "pde: z_max must exceed z_min");
    return {lo, hi};
}

/// Default u extent: the dual path max reaches about (ρ−α)⁺T + 5√(2αT) before the far-field law takes over.
inline std::pair<int, double> pde_u_grid(const Model& model, const PdeConfig& cfg) {
    const double T = model.horizon, a = model.alpha();
    const double reach = std::max(0.0, model.rho() - a) * T + 5.0 * std::sqrt(2.0 * a * T) + 6.0;
    const double u_max = cfg.u_max ? *cfg.u_max : std::max(12.0, std::ceil(reach));
    const int n_u = cfg.n_u ? *cfg.n_u : std::max(400, static_cast<int>(std::ceil(400.0 * u_max / 12.0)));
    return {n_u, u_max};
}

/// Backward solve of h_t + αh_uu + (α−ρ)h_u + φh_uz + μ_Z h_z + ½σ_Z²h_zz = f e^{−u−ρt},
/// h(T) = 0, h_u(t,z,0) = 0, far-field h = −e^{−u−ρt}ξ(t,z) at u_max.
inline DualField solve_dual(const Model& model, const PdeConfig& cfg = {}) {
    const auto [n_u, u_max] = pde_u_grid(model, cfg);
    require(n_u >= 4, "pde: need at least 4 u-nodes");
    require(u_max > 0.0, "pde: u_max must be > 0");
    require(cfg.n_levels >= 3, "pde: need at least 3 stored time levels");
    const double alpha = model.alpha();
    const double rho = model.rho();
    const double T = model.horizon;

    DualField F;
    F.horizon = T;
    F.rho = rho;
    F.alpha = alpha;
    F.u_max = u_max;
    F.n_u = n_u;
    const int N = n_u;
    const double du = F.du();

    const bool zfree = model.z_independent();
    const int M = zfree ? 1 : cfg.n_z;
    require(M == 1 || M >= 4, "pde: need at least 4 z-nodes");
    F.z_nodes.resize(M);
    if (M == 1) {
        F.z_nodes[0] = model.factor.z0;
    } else {
        const auto [lo, hi] = pde_z_range(model, cfg);
        for (int i = 0; i < M; ++i) F.z_nodes[i] = lo + (hi - lo) * i / (M - 1);
    }
    const double dz = M > 1 ? F.z_nodes[1] - F.z_nodes[0] : 1.0;

    std::vector<double> mu_z(M), sig2(M), phi(M), fz(M);
    double phi_max = 0.0;
    for (int i = 0; i < M; ++i) {
        const double z = F.z_nodes[i];
        mu_z[i] = model.factor.drift(z);
        const double s = model.factor.vol(z);
        sig2[i] = 0.5 * s * s;
        phi[i] = model.phi(z);
        fz[i] = model.f(0.0, z);
        phi_max = std::max(phi_max, std::abs(phi[i]));
    }

    // time step
    const bool user_dt = cfg.dt.has_value();
    double dt = user_dt ? *cfg.dt : std::min(1e-3, du * du / (4.0 * alpha + 1.0));
    require(dt > 0.0, "pde: dt must be > 0");
    auto cfl_of = [&](double step) { return M > 1 ? step * phi_max / (du * dz) : 0.0; };
    if (cfl_of(dt) > 1.0) {
        if (user_dt) {
            std::ostringstream os;
            os << "pde: dt = " << dt << " violates the mixed-term CFL bound (dt |phi| / (du dz) = " << cfl_of(dt)
               << " > 1)";
            throw NumericalError(os.str());
        }
        while (cfl_of(dt) > 1.0) dt *= 0.5;
    }
    const int per_level = std::max(1, static_cast<int>(std::ceil(T / dt / (cfg.n_levels - 1) - 1e-9)));
    const int n_steps = per_level * (cfg.n_levels - 1);
    dt = T / n_steps;
    F.dt = dt;
    F.cfl = cfl_of(dt);

    // u operator: α∂² + (α−ρ)∂ with ghost-node Neumann at u = 0
    std::vector<double> ulo(N), umid(N), uup(N);
    for (int j = 1; j < N - 1; ++j) detail::stencil(alpha, alpha - rho, du, ulo[j], umid[j], uup[j]);
    ulo[0] = 0.0;
    umid[0] = -2.0 * alpha / (du * du);
    uup[0] = 2.0 * alpha / (du * du);
    {
        std::vector<double> a(N), b(N), c(N);
        for (int j = 0; j < N - 1; ++j) {
            a[j] = -dt * ulo[j];
            b[j] = 1.0 - dt * umid[j];
            c[j] = -dt * uup[j];
        }
        a[N - 1] = 0.0;
        b[N - 1] = 1.0;
        c[N - 1] = 0.0;
        const Tridiagonal usys(a, b, c);
        // z operators
        std::vector<double> zlo(M, 0.0), zmid(M, 0.0), zup(M, 0.0);
        std::vector<double> qlo(M, 0.0), qmid(M, 0.0), qup(M, 0.0);
        auto build_z = [&](const std::vector<double>& drift, std::vector<double>& lo, std::vector<double>& mid,
                           std::vector<double>& up) {
            if (M == 1) return;
            for (int i = 1; i < M - 1; ++i) detail::stencil(sig2[i], drift[i], dz, lo[i], mid[i], up[i]);
            mid[0] = -drift[0] / dz;
            up[0] = drift[0] / dz;
            lo[M - 1] = -drift[M - 1] / dz;
            mid[M - 1] = drift[M - 1] / dz;
        };
        build_z(mu_z, zlo, zmid, zup);
        std::vector<double> qdrift(M);
        for (int i = 0; i < M; ++i) qdrift[i] = mu_z[i] - phi[i];
        build_z(qdrift, qlo, qmid, qup);
        auto system = [&](const std::vector<double>& lo, const std::vector<double>& mid,
                          const std::vector<double>& up) {
            std::vector<double> a2(M), b2(M), c2(M);
            for (int i = 0; i < M; ++i) {
                a2[i] = -dt * lo[i];
                b2[i] = 1.0 - dt * mid[i];
                c2[i] = -dt * up[i];
            }
            return Tridiagonal(a2, b2, c2);
        };
        const Tridiagonal zsys = system(zlo, zmid, zup);
        const Tridiagonal qsys = system(qlo, qmid, qup);

        std::vector<double> eu(N);
        for (int j = 0; j < N; ++j) eu[j] = std::exp(-du * j);

        const std::size_t plane = std::size_t(M) * N;
        std::vector<double> h(plane, 0.0), lz(plane, 0.0), y1(plane, 0.0), xi(M, 0.0);
        std::vector<std::vector<double>> levels{h};
        std::vector<std::vector<double>> xi_levels{xi};

        double fmax = 0.0;
        for (double v : fz) fmax = std::max(fmax, std::abs(v));
        const double bound = 1e6 * (1.0 + fmax * T);

        for (int n = 0; n < n_steps; ++n) {
            const double t_new = T - (n + 1) * dt;
            const double disc = std::exp(-rho * t_new);
            // far-field threshold
            for (int i = 0; i < M; ++i) xi[i] += dt * fz[i];
            if (M > 1) qsys.solve(xi.data());
            // explicit parts: L_z h and L_x h
            for (int i = 0; i < M; ++i) {
                for (int j = 0; j < N - 1; ++j) {
                    const std::size_t k = std::size_t(i) * N + j;
                    double lzv = 0.0, lxv = 0.0;
                    if (M > 1) {
                        if (i > 0) lzv += zlo[i] * h[k - N];
                        lzv += zmid[i] * h[k];
                        if (i < M - 1) lzv += zup[i] * h[k + N];
                        if (j > 0) {
                            auto dudiff = [&](int ii) {
                                const std::size_t kk = std::size_t(ii) * N + j;
                                return (h[kk + 1] - h[kk - 1]) / (2.0 * du);
                            };
                            double duz;
                            if (i == 0)
                                duz = (dudiff(1) - dudiff(0)) / dz;
                            else if (i == M - 1)
                                duz = (dudiff(M - 1) - dudiff(M - 2)) / dz;
                            else
                                duz = (dudiff(i + 1) - dudiff(i - 1)) / (2.0 * dz);
                            lxv = phi[i] * duz;
                        }
                    }
                    lz[k] = lzv;
                    y1[k] = h[k] + dt * (lzv + lxv - fz[i] * eu[j] * disc);
                }
                const std::size_t kb = std::size_t(i) * N + N - 1;
                y1[kb] = -eu[N - 1] * disc * xi[i];
                usys.solve(y1.data() + std::size_t(i) * N);
            }
            if (M > 1) {
                for (int j = 0; j < N - 1; ++j) {
                    for (int i = 0; i < M; ++i) {
                        const std::size_t k = std::size_t(i) * N + j;
                        y1[k] -= dt * lz[k];
                    }
                    zsys.solve(y1.data() + j, N);
                }
            }
            h.swap(y1);
            for (int i = 0; i < M; ++i) {
                for (int j = 0; j < N; ++j) {
                    const double v = h[std::size_t(i) * N + j];
                    if (!std::isfinite(v) || std::abs(v) > bound) {
                        std::ostringstream os;
                        os << "pde: instability detected at t = " << t_new << " with dt = " << dt
                           << "; reduce dt or refine the grid";
                        throw NumericalError(os.str());
                    }
                }
            }
            if ((n + 1) % per_level == 0) {
                levels.push_back(h);
                xi_levels.push_back(xi);
            }
        }
        const int L = static_cast<int>(levels.size());
        F.t_levels.resize(L);
        F.values.resize(std::size_t(L) * plane);
        F.xi_values.resize(std::size_t(L) * M);
        for (int l = 0; l < L; ++l) {
            const int src = L - 1 - l;  // ascending in t
            F.t_levels[l] = T - src * per_level * dt;
            std::copy(levels[src].begin(), levels[src].end(), F.values.begin() + std::size_t(l) * plane);
            std::copy(xi_levels[src].begin(), xi_levels[src].end(), F.xi_values.begin() + std::size_t(l) * M);
        }
        F.t_levels.front() = 0.0;
        F.t_levels.back() = T;
    }
    F.build_curvature();
    return F;
}

// ---------------------------------------------------------------------------
// Persistence: "RATCHETF" magic, u64 header length, JSON header, raw little-endian doubles.

inline void DualField::save(const std::string& path) const {
    nlohmann::json meta = {{"format", "ratchet-dual-field"},
                           {"version", 1},
                           {"horizon", horizon},
                           {"rho", rho},
                           {"alpha", alpha},
                           {"u_max", u_max},
                           {"n_u", n_u},
                           {"dt", dt},
                           {"cfl", cfl},
                           {"scheme", scheme},
                           {"t_levels", t_levels},
                           {"z_nodes", z_nodes},
                           {"layout", "values[level][z][u] then xi[level][z]"}};
    const std::string hdr = meta.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path);
    os.write("RATCHETF", 8);
    const std::uint64_t len = hdr.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    os.write(reinterpret_cast<const char*>(xi_values.data()), static_cast<std::streamsize>(xi_values.size() * 8));
}

inline DualField DualField::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "RATCHETF") throw ValidationError(path + ": not a dual field file");
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string hdr(len, '\0');
    is.read(hdr.data(), static_cast<std::streamsize>(len));
    const auto meta = nlohmann::json::parse(hdr);
    DualField F;
    F.horizon = meta.at("horizon");
    F.rho = meta.at("rho");
    F.alpha = meta.at("alpha");
    F.u_max = meta.at("u_max");
    F.n_u = meta.at("n_u");
    F.dt = meta.at("dt");
    F.cfl = meta.at("cfl");
    F.scheme = meta.at("scheme");
    F.t_levels = meta.at("t_levels").get<std::vector<double>>();
    F.z_nodes = meta.at("z_nodes").get<std::vector<double>>();
    F.values.resize(F.t_levels.size() * F.z_nodes.size() * F.n_u);
    F.xi_values.resize(F.t_levels.size() * F.z_nodes.size());
    is.read(reinterpret_cast<char*>(F.values.data()), static_cast<std::streamsize>(F.values.size() * 8));
    is.read(reinterpret_cast<char*>(F.xi_values.data()), static_cast<std::streamsize>(F.xi_values.size() * 8));
    if (!is) throw ValidationError(path + ": truncated dual field file");
    F.build_curvature();
    return F;
}

inline DualPoint field_eval(const DualField& F, double t, double z, double u) { return F.eval(t, z, u); }
inline VhatPoint vhat_eval(const DualField& F, double t, double z, double y) { return F.vhat(t, z, y); }

}  // namespace ratchet
