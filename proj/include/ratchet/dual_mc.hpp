// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/parallel.hpp"
#include "ratchet/paths.hpp"
#include "ratchet/quadrature.hpp"
#include "ratchet/rng.hpp"
#include "ratchet/stats.hpp"

namespace ratchet {

struct McConfig {
    std::size_t n_paths = 100000;
    std::optional<double> dt;  ///< default min(1e-3 (T−t), 1e-3)
    bool antithetic = true;
    std::uint64_t seed = 20240601;
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    bool antithetic = false;
};

/// All dual functionals at one (t, z, u) from a single set of paths.
struct DualEstimates {
    double t = 0.0, z = 0.0, u = 0.0;
    Estimate h, h_u, h_z, h_zu, h_t, xi;
    std::optional<Estimate> h_uu;  ///< absent when α = 0
};

inline double default_mc_dt(double remaining) { return std::min(1e-3 * remaining, 1e-3); }

namespace detail {

enum Slot : int { kH, kHu, kHuu, kHz, kHzu, kHt, kSlots };

struct DualWalk {
    double t = 0.0, z = 0.0;
    TimeGrid grid;
    double alpha = 0.0, rho = 0.0, varrho = 0.0;
    std::vector<double> us;
    std::vector<double> wdisc;  // trapezoid weight · e^{−ρs}
    std::vector<double> wxi;    // trapezoid weight · e^{−ρ(s−t)}
    std::vector<double> disc;   // e^{−ρs}
    std::vector<double> gamma;  // Γ(s_k)
    int stride() const { return kSlots * static_cast<int>(us.size()) + 1; }
};

inline DualWalk make_walk(const Model& model, double t, double z, std::span<const double> us, double dt) {
    DualWalk w;
    w.t = t;
    w.z = z;
    w.grid = TimeGrid::with_max_step(t, model.horizon, dt);
    w.alpha = model.alpha();
    w.rho = model.rho();
    w.varrho = model.derived.varrho;
    w.us.assign(us.begin(), us.end());
    const int n = w.grid.n_steps;
    const double h = w.grid.dt();
    w.wdisc.resize(n + 1);
    w.wxi.resize(n + 1);
    w.disc.resize(n + 1);
    w.gamma.assign(n + 1, 0.0);
    for (int k = 0; k <= n; ++k) {
        const double s = w.grid.time(k);
        const double wt = (k == 0 || k == n) ? 0.5 * h : h;
        w.disc[k] = std::exp(-w.rho * s);
        w.wdisc[k] = wt * w.disc[k];
        w.wxi[k] = wt * std::exp(-w.rho * (s - t));
        if (w.alpha > 0.0) w.gamma[k] = gamma_weight(w.alpha, model.derived.mu_tilde, model.horizon - s);
    }
    return w;
}

/// One path (or an antithetic pair when lanes = 2); writes raw per-lane functionals into out.
template <FactorDynamics F, GrowthRate G>
void dual_walk(const DualWalk& w, const F& fac, const G& gr, PathRng& rng, int lanes, double* out) {
    const int nu = static_cast<int>(w.us.size());
    const int stride = w.stride();
    const int n = w.grid.n_steps;
    const double dt = w.grid.dt();
    const double sq = std::sqrt(dt);
    const double a2 = std::sqrt(2.0 * w.alpha);
    const double ydrift = (w.alpha - w.rho) * dt;
    const double shift = 0.5826 * a2 * sq;
    const double perp = std::sqrt(std::max(0.0, 1.0 - w.varrho * w.varrho));
    double y[2] = {0.0, 0.0}, ymax[2] = {0.0, 0.0}, m[2] = {w.z, w.z}, dm[2] = {1.0, 1.0};
    bool hit[2][16] = {};
    std::fill(out, out + lanes * stride, 0.0);
    for (int k = 0; k <= n; ++k) {
        const double s = w.grid.time(k);
        for (int l = 0; l < lanes; ++l) {
            double* o = out + l * stride;
            ymax[l] = std::max(ymax[l], y[l]);
            const double yc = k > 0 ? ymax[l] + shift : 0.0;
            const double fv = gr.value(s, m[l]);
            const double fz = gr.dz(s, m[l]) * dm[l];
            const double ey = std::exp(y[l]);
            o[kSlots * nu] += w.wxi[k] * fv * ey;
            const double e_above = std::exp(y[l] - yc);
            for (int j = 0; j < nu; ++j) {
                const double u = w.us[j];
                double* q = o + kSlots * j;
                if (!hit[l][j] && yc >= u) {
                    hit[l][j] = true;
                    q[kHuu] = w.disc[k] * fv * w.gamma[k];
                }
                const double er = yc > u ? e_above : std::exp(-u) * ey;
                const double e = w.wdisc[k] * er;
                q[kH] += e * fv;
                q[kHz] += e * fz;
                if (!hit[l][j]) {
                    q[kHu] += e * fv;
                    q[kHzu] += e * fz;
                }
                if (k == n) q[kHt] = w.disc[k] * fv * er;
            }
        }
        if (k == n) break;
        const double za = rng.normal();
        const double zb = rng.normal();
        for (int l = 0; l < lanes; ++l) {
            const double sg = l == 0 ? 1.0 : -1.0;
            const double db1 = sg * sq * za;
            const double dwg = sg * sq * (w.varrho * za + perp * zb);
            y[l] -= a2 * db1 + ydrift;
            const double mk = m[l];
            m[l] = mk + fac.drift(mk) * dt + fac.vol(mk) * dwg;
            dm[l] *= 1.0 + fac.drift_z(mk) * dt + fac.vol_z(mk) * dwg;
        }
    }
    // raw integrals to estimator values
    for (int l = 0; l < lanes; ++l) {
        double* o = out + l * stride;
        for (int j = 0; j < nu; ++j) {
            double* q = o + kSlots * j;
            const double hint = q[kH];
            q[kH] = -hint;
            q[kHuu] = q[kHuu] - q[kHu];
            q[kHz] = -q[kHz];
            q[kHt] = q[kHt] + w.rho * hint;
        }
    }
}

}  // namespace detail

/// Monte Carlo estimates of h and its partials at (t, z) for each u in us, common random numbers across us.
inline std::vector<DualEstimates> dual_mc(const Model& model, double t, double z, std::span<const double> us,
                                          const McConfig& cfg) {
    require(!us.empty() && us.size() <= 16, "dual mc: between 1 and 16 u values per call");
    for (double u : us) require(u >= 0.0 && std::isfinite(u), "dual mc: u must be >= 0");
    require(t >= 0.0 && t <= model.horizon, "dual mc: t outside [0, T]");
    require(std::isfinite(z), "dual mc: z must be finite");
    require(cfg.n_paths >= 2, "dual mc: need at least 2 paths");
    const double remaining = model.horizon - t;
    const double dt = cfg.dt ? *cfg.dt : default_mc_dt(remaining);
    require(dt > 0.0, "dual mc: dt must be > 0");
    const int nu = static_cast<int>(us.size());

    std::vector<DualEstimates> res(nu);
    for (int j = 0; j < nu; ++j) {
        res[j].t = t;
        res[j].z = z;
        res[j].u = us[j];
    }
    if (remaining <= 0.0) {
        // degenerate paths M_T = z, R_T = u: only h_t = e^{−ρT} f(T,z) e^{−u} survives
        const double ft = std::exp(-model.rho() * t) * model.f(t, z);
        for (auto& r : res) {
            r.h_t.value = ft * std::exp(-r.u);
            if (model.alpha() > 0.0) r.h_uu = Estimate{};
        }
        return res;
    }

    const auto walk = detail::make_walk(model, t, z, us, dt);
    const int stride = walk.stride();
    const int lanes = cfg.antithetic ? 2 : 1;
    const std::size_t units = cfg.n_paths / lanes;
    constexpr std::size_t kBlock = 256;
    const std::size_t n_blocks = (units + kBlock - 1) / kBlock;
    std::vector<std::vector<detail::Welford>> blocks(n_blocks, std::vector<detail::Welford>(stride));

    std::visit(
        [&](const auto& fac, const auto& gr) {
            for_each_block(n_blocks, [&](std::size_t b) {
                std::vector<double> buf(lanes * stride);
                auto& acc = blocks[b];
                const std::size_t end = std::min(units, (b + 1) * kBlock);
                for (std::size_t p = b * kBlock; p < end; ++p) {
                    PathRng rng(cfg.seed, p);
                    detail::dual_walk(walk, fac, gr, rng, lanes, buf.data());
                    for (int i = 0; i < stride; ++i)
                        acc[i].add(lanes == 2 ? 0.5 * (buf[i] + buf[stride + i]) : buf[i]);
                }
            });
        },
        model.factor.dynamics, model.benchmark.growth);

    std::vector<detail::Welford> tot(stride);
    for (const auto& blk : blocks)
        for (int i = 0; i < stride; ++i) tot[i].merge(blk[i]);

    auto make = [&](int i) {
        return Estimate{tot[i].mean, tot[i].std_error(), units * lanes, walk.grid.dt(), cfg.seed, cfg.antithetic};
    };
    for (int j = 0; j < nu; ++j) {
        const int o = detail::kSlots * j;
        res[j].h = make(o + detail::kH);
        res[j].h_u = make(o + detail::kHu);
        res[j].h_z = make(o + detail::kHz);
        res[j].h_zu = make(o + detail::kHzu);
        res[j].h_t = make(o + detail::kHt);
        res[j].xi = make(detail::kSlots * nu);
        if (model.alpha() > 0.0) res[j].h_uu = make(o + detail::kHuu);
    }
    return res;
}

inline DualEstimates dual_mc(const Model& model, double t, double z, double u, const McConfig& cfg) {
    const double us[1] = {u};
    return dual_mc(model, t, z, us, cfg).front();
}

inline Estimate h_mc(const Model& m, double t, double z, double u, const McConfig& c) { return dual_mc(m, t, z, u, c).h; }
inline Estimate h_u_mc(const Model& m, double t, double z, double u, const McConfig& c) {
    return dual_mc(m, t, z, u, c).h_u;
}
inline Estimate h_uu_mc(const Model& m, double t, double z, double u, const McConfig& c) {
    require(m.alpha() > 0.0, "h_uu estimator: undefined for alpha = 0 (degenerate reflected law)");
    return *dual_mc(m, t, z, u, c).h_uu;
}
inline Estimate h_z_mc(const Model& m, double t, double z, double u, const McConfig& c) {
    return dual_mc(m, t, z, u, c).h_z;
}
inline Estimate h_zu_mc(const Model& m, double t, double z, double u, const McConfig& c) {
    return dual_mc(m, t, z, u, c).h_zu;
}
inline Estimate h_t_mc(const Model& m, double t, double z, double u, const McConfig& c) {
    return dual_mc(m, t, z, u, c).h_t;
}
/// Superhedge threshold ξ(t,z) = E∫_t^T e^{−ρ(s−t)} f(s,M_s) e^{Y_s} ds.
inline Estimate xi_mc(const Model& m, double t, double z, const McConfig& c) { return dual_mc(m, t, z, 0.0, c).xi; }

}  // namespace ratchet
