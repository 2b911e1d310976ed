// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "ratchet/error.hpp"

namespace ratchet {

// ---------------------------------------------------------------------------
// Factor coefficient families

template <class F>
concept FactorDynamics = requires(const F& f, double z) {
    { f.drift(z) } -> std::convertible_to<double>;
    { f.vol(z) } -> std::convertible_to<double>;
    { f.drift_z(z) } -> std::convertible_to<double>;
    { f.vol_z(z) } -> std::convertible_to<double>;
    { F::name } -> std::convertible_to<const char*>;
};

/// Arithmetic Brownian motion dZ = m dt + s dW (m = s = 0 freezes Z).
struct ConstantFactor {
    static constexpr const char* name = "constant";
    double m = 0.0;
    double s = 0.0;
    double drift(double) const { return m; }
    double vol(double) const { return s; }
    double drift_z(double) const { return 0.0; }
    double vol_z(double) const { return 0.0; }
};

/// dZ = κ(θ − Z) dt + η dW.
struct OuFactor {
    static constexpr const char* name = "ou";
    double kappa = 1.0;
    double mean = 0.0;
    double eta = 0.0;
    double drift(double z) const { return kappa * (mean - z); }
    double vol(double) const { return eta; }
    double drift_z(double) const { return -kappa; }
    double vol_z(double) const { return 0.0; }
};

/// dZ = m Z dt + s Z dW.
struct GeometricFactor {
    static constexpr const char* name = "geometric";
    double m = 0.0;
    double s = 0.0;
    double drift(double z) const { return m * z; }
    double vol(double z) const { return s * z; }
    double drift_z(double) const { return m; }
    double vol_z(double) const { return s; }
};

static_assert(FactorDynamics<ConstantFactor>);
static_assert(FactorDynamics<OuFactor>);
static_assert(FactorDynamics<GeometricFactor>);

using FactorModel = std::variant<ConstantFactor, OuFactor, GeometricFactor>;

// ---------------------------------------------------------------------------
// Benchmark growth-rate families (time-homogeneous)

template <class G>
concept GrowthRate = requires(const G& g, double t, double z) {
    { g.value(t, z) } -> std::convertible_to<double>;
    { g.dz(t, z) } -> std::convertible_to<double>;
    { g.dzz(t, z) } -> std::convertible_to<double>;
    { G::name } -> std::convertible_to<const char*>;
};

struct ConstantGrowth {
    static constexpr const char* name = "constant";
    double c = 1.0;
    double value(double, double) const { return c; }
    double dz(double, double) const { return 0.0; }
    double dzz(double, double) const { return 0.0; }
};

/// f(t,z) = λz.
struct LinearGrowth {
    static constexpr const char* name = "linear";
    double slope = 1.0;
    double value(double, double z) const { return slope * z; }
    double dz(double, double) const { return slope; }
    double dzz(double, double) const { return 0.0; }
};

/// f(t,z) = c₁ + c₂ / (1 + e^{−βz}).
struct LogisticGrowth {
    static constexpr const char* name = "logistic";
    double base = 1.0;
    double amplitude = 0.0;
    double steepness = 1.0;
    double sig(double z) const { return 1.0 / (1.0 + std::exp(-steepness * z)); }
    double value(double, double z) const { return base + amplitude * sig(z); }
    double dz(double, double z) const {
        const double s = sig(z);
        return amplitude * steepness * s * (1.0 - s);
    }
    double dzz(double, double z) const {
        const double s = sig(z);
        return amplitude * steepness * steepness * s * (1.0 - s) * (1.0 - 2.0 * s);
    }
};

static_assert(GrowthRate<ConstantGrowth>);
static_assert(GrowthRate<LinearGrowth>);
static_assert(GrowthRate<LogisticGrowth>);

using GrowthModel = std::variant<ConstantGrowth, LinearGrowth, LogisticGrowth>;

inline bool z_independent(const GrowthModel& g) {
    return std::holds_alternative<ConstantGrowth>(g);
}

inline const char* family_name(const FactorModel& f) {
    return std::visit([](const auto& x) { return std::decay_t<decltype(x)>::name; }, f);
}
inline const char* family_name(const GrowthModel& g) {
    return std::visit([](const auto& x) { return std::decay_t<decltype(x)>::name; }, g);
}

// ---------------------------------------------------------------------------
// Specs

struct MarketParams {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    double rho = 0.0;
    std::optional<double> horizon;

    int dim() const { return static_cast<int>(mu.size()); }
};

struct FactorSpec {
    FactorModel dynamics = ConstantFactor{};
    Eigen::VectorXd gamma;
    double z0 = 0.0;

    double drift(double z) const {
        return std::visit([z](const auto& f) { return f.drift(z); }, dynamics);
    }
    double vol(double z) const {
        return std::visit([z](const auto& f) { return f.vol(z); }, dynamics);
    }
    double drift_z(double z) const {
        return std::visit([z](const auto& f) { return f.drift_z(z); }, dynamics);
    }
    double vol_z(double z) const {
        return std::visit([z](const auto& f) { return f.vol_z(z); }, dynamics);
    }
};

struct BenchmarkSpec {
    GrowthModel growth = ConstantGrowth{};
    double a = 0.0;

    double f(double t, double z) const {
        return std::visit([&](const auto& g) { return g.value(t, z); }, growth);
    }
    double f_z(double t, double z) const {
        return std::visit([&](const auto& g) { return g.dz(t, z); }, growth);
    }
};

struct GbmIndexSpec {
    double mu_I = 0.0;
    double sigma_I = 0.0;
    double z0 = 1.0;
};

struct DerivedMarket {
    double alpha = 0.0;
    double varrho = 0.0;
    double mu_tilde = 0.0;
    /// φ(z) = phi_coefficient · σ_Z(z), phi_coefficient = (σ⁻¹μ)⊤γ.
    double phi_coefficient = 0.0;
    Eigen::VectorXd market_price;  ///< σ⁻¹μ
    Eigen::VectorXd merton;        ///< (σσ⊤)⁻¹μ
    Eigen::VectorXd hedge;         ///< (σσ⊤)⁻¹σγ = σ⁻⊤γ
    Eigen::VectorXd b1_direction;  ///< σ⁻¹μ / |σ⁻¹μ|
    bool degenerate_b1 = false;    ///< μ = 0: B¹ independent of W^γ
    double condition = 1.0;

    double phi(const FactorSpec& factor, double z) const { return phi_coefficient * factor.vol(z); }
};

inline constexpr double kSingularThreshold = 1e12;

inline void validate_market(const MarketParams& m) {
    require(m.dim() >= 1, "market: mu must be non-empty");
    require(m.sigma.rows() == m.dim() && m.sigma.cols() == m.dim(),
            "market: sigma must be d x d with d = len(mu)");
    require(m.mu.allFinite() && m.sigma.allFinite(), "market: non-finite entries");
    require(std::isfinite(m.rho) && m.rho >= 0.0, "market: rho must be >= 0");
    if (m.horizon) require(std::isfinite(*m.horizon) && *m.horizon > 0.0, "market: horizon must be > 0");
}

/// ½ μ⊤(σσ⊤)⁻¹μ through the quadratic form (second route, used as a check).
inline double alpha_quadratic_form(const MarketParams& m) {
    const Eigen::MatrixXd cov = m.sigma * m.sigma.transpose();
    return 0.5 * m.mu.dot(cov.ldlt().solve(m.mu));
}

inline DerivedMarket derive_market(const MarketParams& m, const FactorSpec& factor) {
    validate_market(m);
    require(factor.gamma.size() == m.mu.size(), "factor: gamma must have length d");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.sigma);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    const double cond = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    if (!(cond <= kSingularThreshold)) {
        std::ostringstream os;
        os << "singular volatility matrix (condition number " << cond << ")";
        throw ValidationError(os.str());
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(m.sigma);
    DerivedMarket d;
    d.condition = cond;
    d.market_price = lu.solve(m.mu);
    d.alpha = 0.5 * d.market_price.squaredNorm();
    d.mu_tilde = d.alpha - m.rho;
    d.hedge = lu.transpose().solve(factor.gamma);
    d.merton = lu.transpose().solve(d.market_price);
    d.phi_coefficient = d.market_price.dot(factor.gamma);
    const double norm = d.market_price.norm();
    if (norm > 0.0) {
        d.b1_direction = d.market_price / norm;
        d.varrho = std::clamp(d.phi_coefficient / norm, -1.0, 1.0);
    } else {
        d.b1_direction = Eigen::VectorXd::Zero(m.dim());
        d.varrho = 0.0;
        d.degenerate_b1 = true;
    }
    return d;
}

inline double index_lambda(const MarketParams& m, const Eigen::VectorXd& gamma, const GbmIndexSpec& idx) {
    const Eigen::VectorXd lam = m.sigma.fullPivLu().solve(m.mu);
    return idx.mu_I - idx.sigma_I * gamma.dot(lam);
}

/// Smallest whole horizon with e^{−ρT} < 1e-8.
inline double effective_horizon(double rho) {
    require(rho > 0.0, "infinite-horizon mode requires rho > 0");
    const double T = std::ceil(std::log(1e8) / rho);
    return std::exp(-rho * T) < 1e-8 ? T : T + 1.0;
}

// ---------------------------------------------------------------------------
// Assumption checks

struct SampleDomain {
    double t0 = 0.0, t1 = 1.0;
    double z_lo = 0.0, z_hi = 0.0;
    int nt = 11, nz = 41;
};

struct AssumptionCheck {
    std::string name;
    bool passed = true;
    std::string detail;
    std::optional<std::pair<double, double>> witness;  ///< (t, z)
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    bool ok() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    const AssumptionCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

/// Range of z worth resolving over [0, horizon] started from z0.
inline std::pair<double, double> factor_range(const FactorSpec& factor, double horizon) {
    const double z0 = factor.z0;
    return std::visit(
        [&](const auto& f) -> std::pair<double, double> {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, OuFactor>) {
                const double sd = f.kappa > 0.0 ? std::abs(f.eta) / std::sqrt(2.0 * f.kappa)
                                                : std::abs(f.eta) * std::sqrt(horizon);
                const double lo = std::min(z0, f.mean) - 6.0 * sd;
                const double hi = std::max(z0, f.mean) + 6.0 * sd;
                return hi > lo ? std::pair{lo, hi} : std::pair{lo - 1.0, hi + 1.0};
            } else if constexpr (std::is_same_v<F, GeometricFactor>) {
                return {z0 / 8.0, 8.0 * z0};
            } else {
                const double w = 6.0 * std::abs(f.s) * std::sqrt(horizon) + std::abs(f.m) * horizon;
                return w > 0.0 ? std::pair{z0 - w, z0 + w} : std::pair{z0 - 1.0, z0 + 1.0};
            }
        },
        factor.dynamics);
}

inline SampleDomain default_sample_domain(const FactorSpec& factor, double horizon) {
    SampleDomain s;
    s.t1 = horizon;
    std::tie(s.z_lo, s.z_hi) = factor_range(factor, horizon);
    return s;
}

inline AssumptionReport validate_assumptions(const FactorSpec& factor, const BenchmarkSpec& bench,
                                             const SampleDomain& dom) {
    AssumptionReport rep;
    {
        AssumptionCheck c{"gamma_range", true, "", {}};
        for (Eigen::Index i = 0; i < factor.gamma.size(); ++i)
            if (!(std::abs(factor.gamma(i)) <= 1.0)) {
                c.passed = false;
                c.detail = "gamma component " + std::to_string(i) + " outside [-1,1]";
            }
        rep.checks.push_back(c);
    }
    {
        AssumptionCheck c{"gamma_unit_norm", true, "", {}};
        const double n = factor.gamma.norm();
        if (std::abs(n - 1.0) > 1e-10) {
            c.passed = false;
            c.detail = "|gamma| = " + std::to_string(n) + ", W^gamma is not a standard Brownian motion";
        }
        rep.checks.push_back(c);
    }
    {
        AssumptionCheck c{"factor_regularity", true, "", {}};
        std::visit(
            [&](const auto& f) {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, OuFactor>) {
                    if (!std::isfinite(f.kappa) || !std::isfinite(f.mean) || !std::isfinite(f.eta)) {
                        c.passed = false;
                        c.detail = "non-finite OU parameters";
                    }
                } else if constexpr (std::is_same_v<F, GeometricFactor>) {
                    if (!(factor.z0 > 0.0)) {
                        c.passed = false;
                        c.detail = "geometric factor needs z0 > 0";
                        c.witness = std::pair{dom.t0, factor.z0};
                    }
                } else {
                    if (!std::isfinite(f.m) || !std::isfinite(f.s)) {
                        c.passed = false;
                        c.detail = "non-finite coefficients";
                    }
                }
            },
            factor.dynamics);
        rep.checks.push_back(c);
    }
    {
        AssumptionCheck c{"growth_positive", true, "", {}};
        for (int i = 0; i < dom.nt && c.passed; ++i) {
            const double t = dom.nt > 1 ? dom.t0 + (dom.t1 - dom.t0) * i / (dom.nt - 1) : dom.t0;
            for (int j = 0; j < dom.nz; ++j) {
                const double z = dom.nz > 1 ? dom.z_lo + (dom.z_hi - dom.z_lo) * j / (dom.nz - 1) : dom.z_lo;
                const double v = bench.f(t, z);
                if (!(v > 0.0)) {
                    c.passed = false;
                    std::ostringstream os;
                    os << "f(" << t << ", " << z << ") = " << v << " <= 0";
                    c.detail = os.str();
                    c.witness = std::pair{t, z};
                    break;
                }
            }
        }
        rep.checks.push_back(c);
    }
    {
        AssumptionCheck c{"benchmark_start", bench.a >= 0.0, bench.a >= 0.0 ? "" : "a must be >= 0", {}};
        rep.checks.push_back(c);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Assembled problem

struct Model {
    MarketParams market;
    FactorSpec factor;
    BenchmarkSpec benchmark;
    std::optional<GbmIndexSpec> index;  ///< set when the tracked target is the index itself
    DerivedMarket derived;
    double horizon = 1.0;

    double alpha() const { return derived.alpha; }
    double rho() const { return market.rho; }
    double phi(double z) const { return derived.phi(factor, z); }
    double f(double t, double z) const { return benchmark.f(t, z); }
    bool z_independent() const {
        return ratchet::z_independent(benchmark.growth);
    }
};

inline Model make_model(const MarketParams& market, const FactorSpec& factor, const BenchmarkSpec& bench) {
    Model m;
    m.market = market;
    m.factor = factor;
    m.benchmark = bench;
    m.derived = derive_market(market, factor);
    m.horizon = market.horizon ? *market.horizon : effective_horizon(market.rho);
    require(bench.a >= 0.0, "benchmark: a must be >= 0");
    if (const auto* g = std::get_if<GeometricFactor>(&factor.dynamics)) {
        (void)g;
        require(factor.z0 > 0.0, "geometric factor needs z0 > 0");
    }
    if (const auto* l = std::get_if<LogisticGrowth>(&bench.growth))
        require(l->base > 0.0 && l->base + std::min(0.0, l->amplitude) > 0.0,
                "logistic growth must stay positive (c1 > 0, c1 + c2 > 0)");
    if (const auto* c = std::get_if<ConstantGrowth>(&bench.growth))
        require(c->c > 0.0, "constant growth must be > 0");
    return m;
}

/// Index-tracking problem: Z = I is geometric, f = λz, A = I.
inline Model make_index_model(const MarketParams& market, const Eigen::VectorXd& gamma, const GbmIndexSpec& idx) {
    require(idx.z0 > 0.0, "index: z0 must be > 0");
    require(idx.sigma_I >= 0.0, "index: sigma_I must be >= 0");
    FactorSpec factor{GeometricFactor{idx.mu_I, idx.sigma_I}, gamma, idx.z0};
    validate_market(market);
    require(gamma.size() == market.mu.size(), "factor: gamma must have length d");
    const double lam = index_lambda(market, gamma, idx);
    require(lam != 0.0, "index: lambda = mu_I - sigma_I gamma' sigma^{-1} mu must be non-zero");
    Model m;
    m.market = market;
    m.factor = factor;
    m.benchmark = BenchmarkSpec{LinearGrowth{lam}, idx.z0};
    m.index = idx;
    m.derived = derive_market(market, factor);
    m.horizon = market.horizon ? *market.horizon : effective_horizon(market.rho);
    return m;
}

}  // namespace ratchet
