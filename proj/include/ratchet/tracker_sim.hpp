// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ratchet/closed_form_gbm.hpp"
#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/parallel.hpp"
#include "ratchet/paths.hpp"
#include "ratchet/primal.hpp"
#include "ratchet/rng.hpp"
#include "ratchet/stats.hpp"

namespace ratchet {

// ---------------------------------------------------------------------------
// Injection envelope and its discounted cost

/// C*_k = max(0, max_{j≤k}(A_j − V_j)).
inline std::vector<double> minimal_injection(std::span<const double> a, std::span<const double> v) {
    require(a.size() == v.size(), "minimal injection: benchmark and wealth paths must be aligned");
    std::vector<double> c(a.size());
    double run = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        run = std::max(run, a[k] - v[k]);
        c[k] = run;
    }
    return c;
}

struct InjectionCost {
    double stieltjes = 0.0;  ///< C_0 + Σ e^{−ρt_k}(C_k − C_{k−1})
    double by_parts = 0.0;   ///< e^{−ρT}C_T + ρ∫e^{−ρt}C_t dt for the piecewise-constant C
    double value() const { return stieltjes; }
};

inline InjectionCost injection_cost(std::span<const double> c, std::span<const double> times, double rho) {
    require(c.size() == times.size() && !c.empty(), "injection cost: C and times must be aligned and non-empty");
    require(rho >= 0.0, "injection cost: rho must be >= 0");
    for (std::size_t k = 1; k < c.size(); ++k) {
        require(times[k] > times[k - 1], "injection cost: times must increase");
        if (c[k] < c[k - 1]) throw ValidationError("injection cost: C must be non-decreasing");
    }
    require(c[0] >= 0.0, "injection cost: C must be >= 0");
    const double t0 = times[0];
    InjectionCost r;
    r.stieltjes = c[0];
    for (std::size_t k = 1; k < c.size(); ++k) r.stieltjes += std::exp(-rho * (times[k] - t0)) * (c[k] - c[k - 1]);
    const std::size_t n = c.size() - 1;
    r.by_parts = std::exp(-rho * (times[n] - t0)) * c[n];
    for (std::size_t k = 0; k < n; ++k)
        r.by_parts += c[k] * (std::exp(-rho * (times[k] - t0)) - std::exp(-rho * (times[k + 1] - t0)));
    return r;
}

// ---------------------------------------------------------------------------
// Exhaustive minimality check

struct MinimalityReport {
    int cases = 0;
    int passed = 0;
    std::vector<std::string> failures;
    bool ok() const { return cases > 0 && passed == cases; }
};

/// Random gaps G = A − V on a value grid; every non-decreasing, non-negative dominating sequence on the grid
/// is enumerated and C* must be both pointwise smallest and cheapest.
inline MinimalityReport minimality_oracle(int n_cases, int max_len, double step, std::uint64_t seed = 7) {
    require(n_cases >= 1 && max_len >= 1 && max_len <= 8 && step > 0.0, "minimality oracle: bad arguments");
    constexpr int kLevels = 5;  // C values {0, step, ..., 4·step}
    MinimalityReport rep;
    PathRng rng(seed, 0);
    for (int c = 0; c < n_cases; ++c) {
        const int len = max_len;
        std::vector<double> g(len), times(len);
        for (int k = 0; k < len; ++k) {
            g[k] = step * (static_cast<int>(rng.uniform() * (2 * kLevels - 1)) - (kLevels - 1));
            times[k] = k == 0 ? 0.0 : times[k - 1] + 0.1 + rng.uniform();
        }
        const double rho = rng.uniform();
        std::vector<double> zero(len, 0.0);
        const auto cstar = minimal_injection(g, zero);
        const double best = injection_cost(cstar, times, rho).value();
        bool ok = true;
        std::vector<int> idx(len, 0);
        while (true) {
            std::vector<double> cand(len);
            bool feasible = true;
            for (int k = 0; k < len; ++k) {
                cand[k] = step * idx[k];
                if (cand[k] < g[k]) feasible = false;
            }
            if (feasible) {
                for (int k = 0; k < len; ++k)
                    if (cstar[k] > cand[k] + 1e-12) ok = false;
                if (injection_cost(cand, times, rho).value() < best - 1e-12) ok = false;
            }
            // next non-decreasing index sequence
            int k = len - 1;
            while (k >= 0 && idx[k] == kLevels - 1) --k;
            if (k < 0) break;
            ++idx[k];
            for (int j = k + 1; j < len; ++j) idx[j] = idx[k];
        }
        if (ok) {
            ++rep.passed;
        } else {
            std::ostringstream os;
            os << "case " << c << ": C* is not minimal";
            rep.failures.push_back(os.str());
        }
        ++rep.cases;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Strategies

enum class StrategyKind { FeedbackPrimal, ClosedFormGbm, ConstantTheta, ZeroTheta };

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::FeedbackPrimal: return "feedback-primal";
        case StrategyKind::ClosedFormGbm: return "closed-form-gbm";
        case StrategyKind::ConstantTheta: return "constant-theta";
        case StrategyKind::ZeroTheta: return "zero-theta";
    }
    return "unknown";
}

/// Amount held in each risky asset as a function of (t, factor, buffer x, index level).
struct Strategy {
    StrategyKind kind = StrategyKind::ZeroTheta;
    const FeedbackTable* table = nullptr;
    const GbmClosedForm* gbm = nullptr;
    bool gbm_printed = false;  ///< use the printed θ̄* (singular at x = 0, clamped)
    Eigen::VectorXd constant;

    static Strategy zero() { return {}; }
    static Strategy constant_theta(Eigen::VectorXd th) {
        Strategy s;
        s.kind = StrategyKind::ConstantTheta;
        s.constant = std::move(th);
        return s;
    }
    static Strategy feedback(const FeedbackTable& t) {
        Strategy s;
        s.kind = StrategyKind::FeedbackPrimal;
        s.table = &t;
        return s;
    }
    static Strategy closed_form(const GbmClosedForm& g, bool printed = false) {
        Strategy s;
        s.kind = StrategyKind::ClosedFormGbm;
        s.gbm = &g;
        s.gbm_printed = printed;
        return s;
    }

    void validate(int dim) const {
        switch (kind) {
            case StrategyKind::FeedbackPrimal:
                require(table != nullptr, "strategy: feedback-primal needs a solved feedback table");
                require(table->dim() == dim, "strategy: feedback table dimension mismatch");
                break;
            case StrategyKind::ClosedFormGbm: require(gbm != nullptr, "strategy: closed-form-gbm needs a solution"); break;
            case StrategyKind::ConstantTheta:
                require(constant.size() == dim, "strategy: constant theta must have length d");
                break;
            case StrategyKind::ZeroTheta: break;
        }
    }

    /// Writes θ into out; returns true when the evaluation was clamped near x = 0.
    bool eval(double t, double z, double x, double* out, int dim) const {
        switch (kind) {
            case StrategyKind::ZeroTheta:
                std::fill(out, out + dim, 0.0);
                return false;
            case StrategyKind::ConstantTheta:
                for (int c = 0; c < dim; ++c) out[c] = constant(c);
                return false;
            case StrategyKind::FeedbackPrimal: {
                const bool clamp = x < 1e-6;
                table->theta(t, z, clamp ? 0.0 : x, out);
                return false;
            }
            case StrategyKind::ClosedFormGbm: {
                bool clamped = false;
                if (gbm_printed) {
                    const double xe = 1e-4 * z;
                    clamped = x < xe;
                    x = std::max(x, xe);
                }
                gbm->tradable_into(z, std::max(x, 0.0), gbm_printed, out);
                return clamped;
            }
        }
        return false;
    }
};

// ---------------------------------------------------------------------------
// Path simulation of the tracking problem

struct SimConfig {
    std::size_t n_paths = 10000;
    double dt = 1e-3;
    bool antithetic = true;
    std::uint64_t seed = 20240601;
};

struct CostReport {
    std::string strategy;
    double mean = 0.0;       ///< mean discounted injection C_0 + ∫e^{−ρs}dC_s
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    double injection_probability = 0.0;  ///< fraction of paths with any injection after time 0
    double mean_injection_steps = 0.0;   ///< mean number of grid steps with a positive increment
    double initial_injection = 0.0;
    std::size_t clamp_count = 0;         ///< strategy evaluations clamped near x = 0
    std::size_t floor_violations = 0;    ///< nodes with A > V + C* beyond round-off
    double max_route_gap = 0.0;          ///< largest |running-max cost − local-time cost| over paths
};

struct TrackingPath {
    std::vector<double> z, a, v, x, l, c;
};

namespace detail {

inline std::vector<double> discount_factors(const TimeGrid& grid, double rho) {
    std::vector<double> d(grid.nodes());
    for (int k = 0; k < grid.nodes(); ++k) d[k] = std::exp(-rho * grid.time(k));
    return d;
}

struct PathOutcome {
    double cost = 0.0, cost_local_time = 0.0;
    int injection_steps = 0;
    std::size_t clamps = 0, violations = 0;
};

/// One path of (Z, A, V) with the reflected buffer X and its local time L; sign flips the noise.
template <FactorDynamics F, GrowthRate G>
PathOutcome track_path(const Model& model, const F& fac, const G& gr, const Strategy& st, const TimeGrid& grid,
                       const std::vector<double>& discount, double x0, PathRng& rng, double sign, TrackingPath* rec) {
    const int d = model.market.dim();
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const double sq = std::sqrt(dt);
    const bool index = model.index.has_value();
    const bool geometric = std::is_same_v<F, GeometricFactor>;
    const auto& mu = model.market.mu;
    const auto& sig = model.market.sigma;
    const auto& gam = model.factor.gamma;
    double th[16], dw[16];
    PathOutcome o;
    double z = model.factor.z0;
    double a = model.benchmark.a;
    double v = a + x0;
    double x = x0, l = 0.0, cmax = 0.0;
    const double c0 = 0.0;  // v0 = a + x0 with x0 ≥ 0
    auto record = [&]() {
        if (!rec) return;
        rec->z.push_back(z);
        rec->a.push_back(a);
        rec->v.push_back(v);
        rec->x.push_back(x);
        rec->l.push_back(l);
        rec->c.push_back(cmax);
    };
    record();
    o.cost = c0;
    o.cost_local_time = c0;
    for (int k = 0; k < n; ++k) {
        const double t = grid.time(k);
        if (st.eval(t, z, x, th, d)) ++o.clamps;
        double wg = 0.0;
        for (int i = 0; i < d; ++i) {
            dw[i] = sign * sq * rng.normal();
            wg += gam(i) * dw[i];
        }
        double dv = 0.0;
        for (int i = 0; i < d; ++i) {
            double sdw = 0.0;
            for (int j = 0; j < d; ++j) sdw += sig(i, j) * dw[j];
            dv += th[i] * (mu(i) * dt + sdw);
        }
        const double fz = gr.value(t, z);
        double zn;
        if constexpr (geometric)
            zn = z * std::exp((fac.m - 0.5 * fac.s * fac.s) * dt + fac.s * wg);
        else
            zn = z + fac.drift(z) * dt + fac.vol(z) * wg;
        const double an = index ? a + (zn - z) : a + fz * dt;
        const double vn = v + dv;
        // running-max route
        const double cn = std::max(cmax, an - vn);
        const double disc = discount[k + 1];
        if (cn > cmax) {
            o.cost += disc * (cn - cmax);
            ++o.injection_steps;
        }
        // local-time route on the buffer X = V − A + C
        const double pre = x + (vn - v) - (an - a);
        const double dl = std::max(0.0, -pre);
        o.cost_local_time += disc * dl;
        x = pre + dl;
        l += dl;
        z = zn;
        a = an;
        v = vn;
        cmax = cn;
        if (a > v + cmax + 1e-9 * (1.0 + std::abs(a))) ++o.violations;
        record();
    }
    return o;
}

template <class Fn>
void with_model_types(const Model& model, Fn&& fn) {
    std::visit([&](const auto& fac, const auto& gr) { fn(fac, gr); }, model.factor.dynamics, model.benchmark.growth);
}

}  // namespace detail

/// Monte Carlo cost of a strategy started at buffer x0 = V_0 − A_0 ≥ 0 over [0, model.horizon].
inline CostReport evaluate_strategy(const Model& model, const Strategy& st, double x0, const SimConfig& cfg) {
    require(x0 >= 0.0 && std::isfinite(x0), "simulate: x0 must be >= 0");
    require(cfg.n_paths >= 2 && cfg.dt > 0.0, "simulate: need n_paths >= 2 and dt > 0");
    require(model.market.dim() <= 16, "simulate: at most 16 assets");
    st.validate(model.market.dim());
    const TimeGrid grid = TimeGrid::with_max_step(0.0, model.horizon, cfg.dt);
    const auto disc = detail::discount_factors(grid, model.rho());
    const int lanes = cfg.antithetic ? 2 : 1;
    const std::size_t units = cfg.n_paths / lanes;
    constexpr std::size_t kBlock = 128;
    const std::size_t n_blocks = (units + kBlock - 1) / kBlock;
    struct Acc {
        detail::Welford cost;
        double injected = 0.0, steps = 0.0, gap = 0.0;
        std::size_t clamps = 0, violations = 0;
    };
    std::vector<Acc> blocks(n_blocks);
    detail::with_model_types(model, [&](const auto& fac, const auto& gr) {
        for_each_block(n_blocks, [&](std::size_t b) {
            auto& acc = blocks[b];
            const std::size_t end = std::min(units, (b + 1) * kBlock);
            for (std::size_t p = b * kBlock; p < end; ++p) {
                double sum = 0.0;
                for (int l = 0; l < lanes; ++l) {
                    PathRng rng(cfg.seed, p);
                    const auto o = detail::track_path(model, fac, gr, st, grid, disc, x0, rng, l == 0 ? 1.0 : -1.0, nullptr);
                    const double gap = std::abs(o.cost - o.cost_local_time);
                    if (!(gap <= 1e-10 * (1.0 + std::abs(o.cost))))
                        throw NumericalError("simulate: running-max and local-time costs disagree on a path");
                    acc.gap = std::max(acc.gap, gap);
                    sum += o.cost;
                    acc.injected += o.injection_steps > 0 ? 1.0 : 0.0;
                    acc.steps += o.injection_steps;
                    acc.clamps += o.clamps;
                    acc.violations += o.violations;
                }
                acc.cost.add(sum / lanes);
            }
        });
    });
    CostReport r;
    r.strategy = strategy_name(st.kind);
    detail::Welford tot;
    for (const auto& b : blocks) {
        tot.merge(b.cost);
        r.injection_probability += b.injected;
        r.mean_injection_steps += b.steps;
        r.clamp_count += b.clamps;
        r.floor_violations += b.violations;
        r.max_route_gap = std::max(r.max_route_gap, b.gap);
    }
    const double n = static_cast<double>(units * lanes);
    r.mean = tot.mean;
    r.std_error = tot.std_error();
    r.n_paths = units * lanes;
    r.dt = grid.dt();
    r.horizon = model.horizon;
    r.seed = cfg.seed;
    r.injection_probability /= n;
    r.mean_injection_steps /= n;
    return r;
}

/// A few full paths for inspection or CSV output.
inline PathBundle simulate_tracking_paths(const Model& model, const Strategy& st, double x0, const SimConfig& cfg,
                                          int n_paths) {
    require(n_paths >= 1, "simulate: n_paths must be >= 1");
    st.validate(model.market.dim());
    const TimeGrid grid = TimeGrid::with_max_step(0.0, model.horizon, cfg.dt);
    const auto disc = detail::discount_factors(grid, model.rho());
    PathBundle b;
    b.grid = grid;
    b.n_paths = n_paths;
    const char* names[] = {"Z", "A", "V", "X", "L", "C"};
    for (const char* nm : names) b.add(nm);
    detail::with_model_types(model, [&](const auto& fac, const auto& gr) {
        for (int p = 0; p < n_paths; ++p) {
            TrackingPath rec;
            PathRng rng(cfg.seed, static_cast<std::uint64_t>(p));
            detail::track_path(model, fac, gr, st, grid, disc, x0, rng, 1.0, &rec);
            const std::vector<double>* cols[] = {&rec.z, &rec.a, &rec.v, &rec.x, &rec.l, &rec.c};
            for (int c = 0; c < 6; ++c) b.columns[c].second.set_row(p, *cols[c]);
        }
    });
    return b;
}

struct SuperhedgeReport {
    double xi = 0.0;
    double x0 = 0.0;
    CostReport cost;
    double ratio() const { return xi > 0.0 ? cost.mean / xi : 0.0; }
    bool passed(double tol = 0.01) const { return cost.mean <= tol * xi; }
};

/// Cost of the feedback strategy started above the superhedge threshold ξ(0, z0).
inline SuperhedgeReport superhedge_check(const Model& model, const PrimalSolution& sol, const FeedbackTable& table,
                                         double x0, const SimConfig& cfg) {
    SuperhedgeReport r;
    r.xi = sol.xi(0.0, model.factor.z0);
    require(x0 >= 1.05 * r.xi, "superhedge check: x0 must be at least 1.05 xi(0, z)");
    r.x0 = x0;
    r.cost = evaluate_strategy(model, Strategy::feedback(table), x0, cfg);
    return r;
}

}  // namespace ratchet
