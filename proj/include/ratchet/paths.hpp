// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/rng.hpp"

namespace ratchet {

struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double a, double b, int n) : t0(a), t1(b), n_steps(n) {
        require(std::isfinite(a) && std::isfinite(b) && b > a, "time grid: need t1 > t0");
        require(n >= 1, "time grid: need at least one step");
    }

    /// Uniform grid on [a, b] whose step does not exceed max_dt.
    static TimeGrid with_max_step(double a, double b, double max_dt) {
        require(max_dt > 0.0, "time grid: step must be > 0");
        const double n = std::ceil((b - a) / max_dt - 1e-9);
        return TimeGrid(a, b, std::max(1, static_cast<int>(n)));
    }

    double dt() const { return (t1 - t0) / n_steps; }
    int nodes() const { return n_steps + 1; }
    double time(int k) const { return k == n_steps ? t1 : t0 + k * dt(); }
};

/// Per-path increments of B¹ and W^γ with W^γ = ϱB¹ + √(1−ϱ²)B².
struct DualIncrements {
    std::vector<double> db1;
    std::vector<double> db2;
    std::vector<double> dwg;
};

inline DualIncrements draw_dual_increments(const TimeGrid& grid, double varrho, PathRng& rng,
                                           double sign = 1.0) {
    const double sq = std::sqrt(grid.dt());
    const double perp = std::sqrt(std::max(0.0, 1.0 - varrho * varrho));
    DualIncrements inc;
    inc.db1.resize(grid.n_steps);
    inc.db2.resize(grid.n_steps);
    inc.dwg.resize(grid.n_steps);
    for (int k = 0; k < grid.n_steps; ++k) {
        const double a = sign * rng.normal();
        const double b = sign * rng.normal();
        inc.db1[k] = sq * a;
        inc.db2[k] = sq * b;
        inc.dwg[k] = sq * (varrho * a + perp * b);
    }
    return inc;
}

struct SkorokhodPath {
    std::vector<double> reflected;
    std::vector<double> local_time;
};

/// reflected[k] = x0 + free[k] + L[k], L[k] = max(0, max_{j≤k}(−x0 − free[j])).
inline SkorokhodPath skorokhod_map(std::span<const double> free_path, double x0) {
    require(x0 >= 0.0, "skorokhod map: x0 must be >= 0");
    SkorokhodPath out;
    out.reflected.resize(free_path.size());
    out.local_time.resize(free_path.size());
    double push = 0.0;
    for (std::size_t k = 0; k < free_path.size(); ++k) {
        push = std::max(push, -x0 - free_path[k]);
        out.local_time[k] = push;
        out.reflected[k] = std::max(0.0, x0 + free_path[k] + push);
    }
    return out;
}

template <FactorDynamics F>
std::vector<double> factor_path(const F& f, double z, const TimeGrid& grid, std::span<const double> dwg) {
    std::vector<double> m(grid.nodes());
    const double dt = grid.dt();
    m[0] = z;
    for (int k = 0; k < grid.n_steps; ++k) m[k + 1] = m[k] + f.drift(m[k]) * dt + f.vol(m[k]) * dwg[k];
    return m;
}

inline std::vector<double> factor_path(const FactorSpec& spec, double z, const TimeGrid& grid,
                                       std::span<const double> dwg) {
    return std::visit([&](const auto& f) { return factor_path(f, z, grid, dwg); }, spec.dynamics);
}

/// Euler scheme for d∂M = ∂M(μ'_Z(M)dt + σ'_Z(M)dW^γ), ∂M(t) = 1.
template <FactorDynamics F>
std::vector<double> tangent_path(const F& f, std::span<const double> m, const TimeGrid& grid,
                                 std::span<const double> dwg) {
    std::vector<double> d(grid.nodes());
    const double dt = grid.dt();
    d[0] = 1.0;
    for (int k = 0; k < grid.n_steps; ++k)
        d[k + 1] = d[k] * (1.0 + f.drift_z(m[k]) * dt + f.vol_z(m[k]) * dwg[k]);
    return d;
}

inline std::vector<double> tangent_path(const FactorSpec& spec, std::span<const double> m, const TimeGrid& grid,
                                        std::span<const double> dwg) {
    return std::visit([&](const auto& f) { return tangent_path(f, m, grid, dwg); }, spec.dynamics);
}

/// Free dual path Y_s = −√(2α)B¹_s − (α−ρ)(s−t), Y_t = 0.
inline std::vector<double> free_dual_path(double alpha, double rho, const TimeGrid& grid,
                                          std::span<const double> db1) {
    std::vector<double> y(grid.nodes());
    const double a = std::sqrt(2.0 * alpha);
    const double drift = (alpha - rho) * grid.dt();
    y[0] = 0.0;
    for (int k = 0; k < grid.n_steps; ++k) y[k + 1] = y[k] - a * db1[k] - drift;
    return y;
}

/// R = u − Y + L, the reflected drifted Brownian motion.
inline SkorokhodPath reflected_from_free(std::span<const double> y, double u) {
    std::vector<double> neg(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) neg[k] = -y[k];
    return skorokhod_map(neg, u);
}

/// First node index with Y ≥ u; n_steps + 1 when the level is never reached.
inline int hitting_index(std::span<const double> y, double u) {
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k] >= u) return static_cast<int>(k);
    return static_cast<int>(y.size());
}

inline std::vector<double> simulate_factor(const FactorSpec& factor, double varrho, double z, const TimeGrid& grid,
                                           PathRng& rng) {
    const auto inc = draw_dual_increments(grid, varrho, rng);
    return factor_path(factor, z, grid, inc.dwg);
}

inline SkorokhodPath simulate_reflected_bm(double alpha, double rho, double u, const TimeGrid& grid, PathRng& rng) {
    require(alpha >= 0.0, "reflected bm: alpha must be >= 0");
    require(u >= 0.0, "reflected bm: u must be >= 0");
    const auto inc = draw_dual_increments(grid, 0.0, rng);
    return reflected_from_free(free_dual_path(alpha, rho, grid, inc.db1), u);
}

struct TangentPath {
    std::vector<double> m;
    std::vector<double> dm;
};

inline TangentPath simulate_tangent(const FactorSpec& factor, double varrho, double z, const TimeGrid& grid,
                                    PathRng& rng) {
    const auto inc = draw_dual_increments(grid, varrho, rng);
    TangentPath p;
    p.m = factor_path(factor, z, grid, inc.dwg);
    p.dm = tangent_path(factor, p.m, grid, inc.dwg);
    return p;
}

/// First grid time at which Y reaches u; grid.t1 when it does not.
inline double sample_hitting_time(double alpha, double rho, double u, const TimeGrid& grid, PathRng& rng) {
    require(u >= 0.0, "hitting time: u must be >= 0");
    const auto inc = draw_dual_increments(grid, 0.0, rng);
    const auto y = free_dual_path(alpha, rho, grid, inc.db1);
    const int k = hitting_index(y, u);
    return k > grid.n_steps ? grid.t1 : grid.time(k);
}

// ---------------------------------------------------------------------------
// Path bundles

class PathArray {
public:
    PathArray() = default;
    PathArray(int n_paths, int n_nodes) : paths_(n_paths), nodes_(n_nodes), data_(std::size_t(n_paths) * n_nodes) {}

    int paths() const { return paths_; }
    int nodes() const { return nodes_; }
    double& operator()(int p, int k) { return data_[std::size_t(p) * nodes_ + k]; }
    double operator()(int p, int k) const { return data_[std::size_t(p) * nodes_ + k]; }
    std::span<double> row(int p) { return {data_.data() + std::size_t(p) * nodes_, std::size_t(nodes_)}; }
    std::span<const double> row(int p) const {
        return {data_.data() + std::size_t(p) * nodes_, std::size_t(nodes_)};
    }
    void set_row(int p, std::span<const double> v) { std::copy(v.begin(), v.end(), row(p).begin()); }

private:
    int paths_ = 0;
    int nodes_ = 0;
    std::vector<double> data_;
};

struct PathBundle {
    TimeGrid grid;
    int n_paths = 0;
    std::vector<std::pair<std::string, PathArray>> columns;

    PathArray& add(const std::string& name) {
        columns.emplace_back(name, PathArray(n_paths, grid.nodes()));
        return columns.back().second;
    }
    const PathArray& get(const std::string& name) const {
        for (const auto& [n, a] : columns)
            if (n == name) return a;
        throw ValidationError("path bundle: no column " + name);
    }
    bool has(const std::string& name) const {
        for (const auto& c : columns)
            if (c.first == name) return true;
        return false;
    }
};

/// Brownian paths B¹, B², factor M, tangent ∂M, free Y, reflected R and local time L.
inline PathBundle simulate_dual_bundle(const Model& model, double t, double z, double u, const TimeGrid& grid,
                                       RngSpec spec, int n_paths) {
    require(n_paths >= 1, "path bundle: n_paths must be >= 1");
    require(std::abs(grid.t0 - t) < 1e-14, "path bundle: grid must start at t");
    PathBundle b;
    b.grid = grid;
    b.n_paths = n_paths;
    auto& b1 = b.add("B1");
    auto& b2 = b.add("B2");
    auto& m = b.add("M");
    auto& dm = b.add("dM");
    auto& y = b.add("Y");
    auto& r = b.add("R");
    auto& l = b.add("L");
    for (int p = 0; p < n_paths; ++p) {
        PathRng rng(spec.seed, static_cast<std::uint64_t>(p));
        const auto inc = draw_dual_increments(grid, model.derived.varrho, rng);
        b1(p, 0) = 0.0;
        b2(p, 0) = 0.0;
        for (int k = 0; k < grid.n_steps; ++k) {
            b1(p, k + 1) = b1(p, k) + inc.db1[k];
            b2(p, k + 1) = b2(p, k) + inc.db2[k];
        }
        const auto mp = factor_path(model.factor, z, grid, inc.dwg);
        m.set_row(p, mp);
        dm.set_row(p, tangent_path(model.factor, mp, grid, inc.dwg));
        const auto yp = free_dual_path(model.alpha(), model.rho(), grid, inc.db1);
        y.set_row(p, yp);
        const auto sk = reflected_from_free(yp, u);
        r.set_row(p, sk.reflected);
        l.set_row(p, sk.local_time);
    }
    return b;
}

/// Long-format CSV: path, step, t, one column per array.
inline void write_paths_csv(const PathBundle& b, std::ostream& os) {
    os << "path,step,t";
    for (const auto& c : b.columns) os << ',' << c.first;
    os << '\n' << std::setprecision(12);
    for (int p = 0; p < b.n_paths; ++p)
        for (int k = 0; k < b.grid.nodes(); ++k) {
            os << p << ',' << k << ',' << b.grid.time(k);
            for (const auto& c : b.columns) os << ',' << c.second(p, k);
            os << '\n';
        }
}

}  // namespace ratchet
