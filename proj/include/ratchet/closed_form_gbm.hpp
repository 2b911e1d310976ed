// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/quadrature.hpp"
#include "ratchet/reflected_law.hpp"

namespace ratchet {

struct GammaRoots {
    double gamma1 = 0.0;  ///< negative companion root
    double gamma2 = 0.0;  ///< root in (0, 1)
};

/// Roots of αγ² + (ρ − κ − α)γ + (μ_I − ρ) = 0 with κ = σ_Iγ⊤σ⁻¹μ, computed without cancellation.
inline GammaRoots solve_gamma_roots(double alpha, double rho, double kappa, double mu_I) {
    require(alpha >= 0.0, "gamma roots: alpha must be >= 0");
    if (!(rho > mu_I)) throw DomainError("unsupported regime: rho must exceed mu_I");
    const double a = alpha, b = rho - kappa - alpha, c = mu_I - rho;
    if (a == 0.0) {
        // zero risk premium: the quadratic degenerates to (ρ − κ)γ + (μ_I − ρ) = 0
        require(b > 0.0, "gamma roots: need rho > kappa when alpha = 0");
        return {-std::numeric_limits<double>::infinity(), -c / b};
    }
    const double disc = b * b - 4.0 * a * c;  // > b² since ac < 0
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    const double r1 = q / a, r2 = c / q;
    return {std::min(r1, r2), std::max(r1, r2)};
}

inline double gamma_quadratic(double alpha, double rho, double kappa, double mu_I, double g) {
    return (mu_I - rho) + (rho - kappa) * g + alpha * g * (g - 1.0);
}

/// Positive root for the deterministic benchmark (σ_I = 0), in the textbook form.
inline double gamma0(double alpha, double rho, double mu_I) {
    require(alpha >= 0.0, "gamma0: alpha must be >= 0");
    if (!(rho > mu_I)) throw DomainError("unsupported regime: rho must exceed mu_I");
    if (alpha == 0.0) return (rho - mu_I) / rho;
    const double b = rho - alpha, root = std::sqrt(b * b + 4.0 * alpha * (rho - mu_I));
    // rationalised form when b > 0 avoids cancellation for small α
    return b > 0.0 ? 2.0 * (rho - mu_I) / (b + root) : (root - b) / (2.0 * alpha);
}

struct GbmValue {
    double v = 0, v_x = 0, v_xx = 0, v_z = 0, v_zz = 0, v_xz = 0;
};

/// Infinite-horizon index tracking with a geometric index I (drift μ_I, volatility σ_I, loading γ).
class GbmClosedForm {
public:
    GbmClosedForm(const MarketParams& market, const Eigen::VectorXd& gamma, const GbmIndexSpec& idx)
        : market_(market), gamma_(gamma), idx_(idx) {
        validate_market(market);
        require(gamma.size() == market.mu.size(), "closed form: gamma must have length d");
        require(idx.sigma_I >= 0.0, "closed form: sigma_I must be >= 0");
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(market.sigma);
        require(lu.isInvertible(), "closed form: sigma must be invertible");
        market_price_ = lu.solve(market.mu);
        alpha_ = 0.5 * market_price_.squaredNorm();
        kappa_ = idx.sigma_I * gamma.dot(market_price_);
        lambda_ = idx.mu_I - kappa_;
        merton_ = lu.transpose().solve(market_price_);
        hedge_ = lu.transpose().solve(gamma);
        sigma_gamma_ = market.sigma * gamma;
        trivial_ = lambda_ < 0.0;
        if (!trivial_) {
            require(lambda_ != 0.0, "closed form: lambda must be non-zero");
            roots_ = solve_gamma_roots(alpha_, market.rho, kappa_, idx.mu_I);
        }
    }

    double alpha() const { return alpha_; }
    double lambda() const { return lambda_; }
    double kappa() const { return kappa_; }
    double rho() const { return market_.rho; }
    const GbmIndexSpec& index() const { return idx_; }
    /// λ < 0: the index is dominated without trading; v ≡ 0 and θ̄* ≡ 0.
    bool trivial() const { return trivial_; }
    double gamma1() const { return roots_.gamma1; }
    double gamma2() const { return roots_.gamma2; }
    double quadratic_residual(double g) const { return gamma_quadratic(alpha_, market_.rho, kappa_, idx_.mu_I, g); }

    /// y*(z,x) = (1 + x/z)^{1/(γ₂−1)}.
    double ystar(double z, double x) const {
        check_zx(z, x);
        if (trivial_) return 0.0;
        return std::pow(1.0 + x / z, 1.0 / (gamma2() - 1.0));
    }

    /// v̂(z,y) = yz − y^{γ₂}z/γ₂.
    double dual_value(double z, double y) const {
        require(z > 0.0 && y > 0.0 && y <= 1.0, "dual value: need z > 0 and y in (0, 1]");
        if (trivial_) return 0.0;
        return y * z - std::pow(y, gamma2()) * z / gamma2();
    }

    /// v(z,x) = z(γ₂−1)/γ₂·(1 + x/z)^{γ₂/(γ₂−1)} and its partial derivatives.
    GbmValue value(double z, double x) const {
        check_zx(z, x);
        GbmValue r;
        if (trivial_) return r;
        const double g = gamma2();
        const double p = 1.0 / (g - 1.0);
        const double w = 1.0 + x / z;
        const double wp = std::pow(w, p);
        r.v = z * (g - 1.0) / g * wp * w;
        r.v_x = wp;
        r.v_xx = p * wp / (w * z);
        r.v_xz = -r.v_xx * x / z;
        r.v_z = r.v / z - r.v_x * x / z;
        r.v_zz = r.v_xx * x * x / (z * z);
        return r;
    }

    /// θ̄* from the feedback formula −(σσ⊤)⁻¹(v_xμ + z v_xz σ_Iσγ)/v_xx
    /// = −(γ₂−1)(x+z)(σσ⊤)⁻¹μ + xσ_I(σσ⊤)⁻¹σγ.
    Eigen::VectorXd theta_bar(double z, double x) const {
        check_zx(z, x);
        if (trivial_) return Eigen::VectorXd::Zero(market_.dim());
        return -(gamma2() - 1.0) * (x + z) * merton_ + x * idx_.sigma_I * hedge_;
    }

    /// θ̄* exactly as printed in closed form: −(γ₂−1)(x+z)(σσ⊤)⁻¹μ + (γ₂−1)σ_I(z³/x + z²)σγ.
    Eigen::VectorXd theta_bar_printed(double z, double x) const {
        require(z > 0.0 && x >= 0.0, "theta: need z > 0 and x >= 0");
        if (trivial_) return Eigen::VectorXd::Zero(market_.dim());
        if (idx_.sigma_I > 0.0 && x == 0.0)
            throw DomainError("theta: printed closed form is singular at x = 0 when sigma_I > 0");
        Eigen::VectorXd th = -(gamma2() - 1.0) * (x + z) * merton_;
        if (idx_.sigma_I > 0.0)
            th += (gamma2() - 1.0) * idx_.sigma_I * (z * z * z / x + z * z) * (market_.sigma * gamma_);
        return th;
    }

    /// Tradable θ = θ̄* + σ_I·z·σ⁻⊤γ written into out without allocating; printed selects the printed θ̄*.
    void tradable_into(double z, double x, bool printed, double* out) const {
        const int d = market_.dim();
        if (trivial_) {
            for (int c = 0; c < d; ++c) out[c] = idx_.sigma_I * z * hedge_(c);
            return;
        }
        const double g1 = gamma2() - 1.0;
        const double sI = idx_.sigma_I;
        for (int c = 0; c < d; ++c) {
            double th = -g1 * (x + z) * merton_(c);
            th += printed ? g1 * sI * (z * z * z / x + z * z) * sigma_gamma_(c) : x * sI * hedge_(c);
            out[c] = th + sI * z * hedge_(c);
        }
    }

    /// Amount in the tradable assets: θ = θ̄ + σ_I·I·σ⁻⊤γ.
    Eigen::VectorXd to_tradable(const Eigen::VectorXd& theta_bar, double index_level) const {
        return theta_bar + idx_.sigma_I * index_level * hedge_;
    }
    Eigen::VectorXd theta(double z, double x) const { return to_tradable(theta_bar(z, x), z); }

    /// Left side of the stationary primal HJB with the optimised Hamiltonian.
    double stationary_residual(double z, double x, double* scale = nullptr) const {
        const auto p = value(z, x);
        const double sI = idx_.sigma_I;
        const double phi = sI * gamma_.dot(market_price_);
        const double terms[] = {-market_.rho * p.v,
                                -alpha_ * p.v_x * p.v_x / p.v_xx,
                                0.5 * sI * sI * z * z * (p.v_zz - p.v_xz * p.v_xz / p.v_xx),
                                -phi * z * p.v_x * p.v_xz / p.v_xx,
                                idx_.mu_I * z * p.v_z,
                                -lambda_ * z * p.v_x};
        return sum_terms(terms, scale);
    }

    /// Same equation with a given θ̄ plugged into the un-optimised generator; zero only for the maximiser.
    double hamiltonian_residual(double z, double x, const Eigen::VectorXd& theta_bar, double* scale = nullptr) const {
        const auto p = value(z, x);
        const double sI = idx_.sigma_I;
        const Eigen::VectorXd vol = market_.sigma.transpose() * theta_bar;
        const double terms[] = {-market_.rho * p.v,
                                p.v_x * theta_bar.dot(market_.mu),
                                0.5 * p.v_xx * vol.squaredNorm(),
                                p.v_xz * sI * z * vol.dot(gamma_),
                                0.5 * sI * sI * z * z * p.v_zz,
                                idx_.mu_I * z * p.v_z,
                                -lambda_ * z * p.v_x};
        return sum_terms(terms, scale);
    }

    /// ξ(t,z) = E∫_t^T e^{−ρ(s−t)}λM_s e^{Y_s}ds = z(e^{λ(T−t)} − 1).
    double xi(double remaining, double z) const { return z * std::expm1(lambda_ * remaining); }

    /// The printed piecewise expression λz[e^{k(T−t)} − 1]/k, k = 2α + μ_I − 2ρ (λz(T−t) when k = 0).
    double xi_printed(double remaining, double z) const {
        const double k = xi_printed_rate();
        if (std::abs(k) * remaining < 1e-14) return lambda_ * z * remaining;
        return lambda_ * z * std::expm1(k * remaining) / k;
    }
    double xi_printed_rate() const { return 2.0 * alpha_ + idx_.mu_I - 2.0 * market_.rho; }

private:
    static void check_zx(double z, double x) {
        require(z > 0.0 && std::isfinite(z), "closed form: z must be > 0");
        require(x >= 0.0 && std::isfinite(x), "closed form: x must be >= 0");
    }
    template <std::size_t N>
    static double sum_terms(const double (&terms)[N], double* scale) {
        double s = 0.0, mag = 0.0;
        for (double t : terms) {
            s += t;
            mag = std::max(mag, std::abs(t));
        }
        if (scale) *scale = mag;
        return s;
    }

    MarketParams market_;
    Eigen::VectorXd gamma_;
    GbmIndexSpec idx_;
    Eigen::VectorXd market_price_, merton_, hedge_, sigma_gamma_;
    double alpha_ = 0.0, kappa_ = 0.0, lambda_ = 0.0;
    bool trivial_ = false;
    GammaRoots roots_;
};

/// E[e^{−R_τ}] for the reflected drifted Brownian motion started at u, by quadrature of its density.
inline double reflected_exp_moment(const ReflectedBmLaw& law, double u, double tau) {
    if (tau <= 0.0) return std::exp(-u);
    const double sd = std::sqrt(2.0 * law.alpha() * tau);
    const double hi = std::max(u, 0.0) + std::abs(law.drift()) * tau + 14.0 * sd + 40.0;
    auto g = [&](double m) { return std::exp(-m) * law.density(m, u, tau); };
    double total = 0.0;
    const double cut1 = std::max(0.0, u - 8.0 * sd), cut2 = std::min(hi, u + 8.0 * sd);
    if (cut1 > 0.0) total += integrate(g, 0.0, cut1, 1e-11);
    total += integrate(g, cut1, cut2, 1e-11);
    if (cut2 < hi) total += integrate(g, cut2, hi, 1e-11);
    return total;
}

/// Finite-horizon dual value for σ_I = 0:
/// v̂(t,z,y) = −λz e^{(ρ−μ_I)t} ∫_t^T e^{(μ_I−ρ)s} E[e^{−R_s^{t,−ln y}}] ds.
inline std::vector<double> finite_horizon_sigma0(const MarketParams& market, const Eigen::VectorXd& gamma,
                                                 const GbmIndexSpec& idx, double horizon, double t, double z,
                                                 const std::vector<double>& ys) {
    require(idx.sigma_I == 0.0, "finite horizon closed form: sigma_I must be 0");
    require(z > 0.0, "finite horizon closed form: z must be > 0");
    require(t >= 0.0 && t <= horizon, "finite horizon closed form: t outside [0, T]");
    const double lam = index_lambda(market, gamma, idx);
    require(lam > 0.0, "finite horizon closed form: lambda must be > 0");
    const Eigen::VectorXd lp = market.sigma.fullPivLu().solve(market.mu);
    const double alpha = 0.5 * lp.squaredNorm();
    require(alpha > 0.0, "finite horizon closed form: alpha must be > 0");
    const ReflectedBmLaw law(alpha, market.rho);
    const double c = idx.mu_I - market.rho;
    std::vector<double> out;
    out.reserve(ys.size());
    for (double y : ys) {
        require(y > 0.0 && y <= 1.0, "finite horizon closed form: y must be in (0, 1]");
        const double u = -std::log(y);
        auto inner = [&](double tau) { return std::exp(c * tau) * reflected_exp_moment(law, u, tau); };
        // s = t + τ; e^{(ρ−μ_I)t}e^{(μ_I−ρ)s} = e^{cτ}; small τ refined separately
        const double rem = horizon - t;
        double s = 0.0;
        if (rem > 0.0) {
            const double knee = std::min(rem, 0.05);
            s = integrate(inner, 0.0, knee, 1e-9) + integrate(inner, knee, rem, 1e-9);
        }
        out.push_back(-lam * z * s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sensitivity tables

struct FigureSetup {
    double mu = 0.3, sigma = 1.0, mu_I = 1.0, sigma_I = 0.25, rho = 2.0, gamma = 1.0, z = 1.0;
};

struct FigureRow {
    double param = 0.0, x = 0.0, v = 0.0;
    double theta_star = 0.0;      ///< printed θ̄*, the plotted quantity
    double theta_feedback = 0.0;  ///< θ̄* from the feedback formula
    bool regime_ok = true;
};

struct FigureSweep {
    int id = 0;
    std::string parameter;
    std::vector<double> values;
    std::vector<double> xs;
    std::vector<FigureRow> rows;  ///< value-major: rows[i·|xs| + j]
    const FigureRow& at(std::size_t i, std::size_t j) const { return rows[i * xs.size() + j]; }
};

struct TrendCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::vector<double> figure_values(int id) {
    switch (id) {
        case 1: return {0.8, 1.0, 1.2};
        case 2: return {0.1, 0.25, 0.4};
        case 3: return {0.2, 0.3, 0.4};
        case 4: return {0.8, 1.0, 1.2};
        default: throw ValidationError("figure id must be 1, 2, 3 or 4");
    }
}

inline const char* figure_parameter(int id) {
    static const char* names[] = {"mu_I", "sigma_I", "mu", "sigma"};
    require(id >= 1 && id <= 4, "figure id must be 1, 2, 3 or 4");
    return names[id - 1];
}

inline std::vector<double> default_figure_grid(int n = 100, double lo = 0.05, double hi = 5.0) {
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * i / (n - 1);
    return xs;
}

/// v(z,x) and θ̄*(z,x) for d = 1 while one parameter of the base setup is swept.
inline FigureSweep figure_sweep(int id, const std::vector<double>& xs, const FigureSetup& base = {},
                                std::vector<double> values = {}) {
    require(!xs.empty(), "figure sweep: empty x grid");
    for (double x : xs) require(x > 0.0, "figure sweep: x must be > 0");
    FigureSweep sw;
    sw.id = id;
    sw.parameter = figure_parameter(id);
    sw.values = values.empty() ? figure_values(id) : std::move(values);
    sw.xs = xs;
    for (double pv : sw.values) {
        FigureSetup s = base;
        (id == 1 ? s.mu_I : id == 2 ? s.sigma_I : id == 3 ? s.mu : s.sigma) = pv;
        MarketParams m{Eigen::VectorXd::Constant(1, s.mu), Eigen::MatrixXd::Constant(1, 1, s.sigma), s.rho, {}};
        const Eigen::VectorXd g = Eigen::VectorXd::Constant(1, s.gamma);
        const GbmIndexSpec idx{s.mu_I, s.sigma_I, s.z};
        const double lam = index_lambda(m, g, idx);
        const bool ok = s.rho > s.mu_I && lam > 0.0;
        std::optional<GbmClosedForm> cf;
        if (ok) cf.emplace(m, g, idx);
        for (double x : xs) {
            FigureRow r;
            r.param = pv;
            r.x = x;
            r.regime_ok = ok;
            if (ok) {
                r.v = cf->value(s.z, x).v;
                r.theta_star = cf->theta_bar_printed(s.z, x)(0);
                r.theta_feedback = cf->theta_bar(s.z, x)(0);
            } else {
                r.v = r.theta_star = r.theta_feedback = std::numeric_limits<double>::quiet_NaN();
            }
            sw.rows.push_back(r);
        }
    }
    return sw;
}

namespace detail {

/// Sign of the change between consecutive sweep values at every x: +1 all increasing, −1 all decreasing, 0 mixed.
inline int ordering(const FigureSweep& sw, bool theta, std::size_t j) {
    int sign = 0;
    for (std::size_t i = 0; i + 1 < sw.values.size(); ++i) {
        const double a = theta ? sw.at(i, j).theta_star : sw.at(i, j).v;
        const double b = theta ? sw.at(i + 1, j).theta_star : sw.at(i + 1, j).v;
        const int s = b > a ? 1 : b < a ? -1 : 0;
        if (s == 0 || (sign != 0 && s != sign)) return 0;
        sign = s;
    }
    return sign;
}

inline TrendCheck uniform_trend(const FigureSweep& sw, bool theta, int want) {
    TrendCheck c;
    c.name = std::string(theta ? "theta_star " : "v ") + (want > 0 ? "increasing in " : "decreasing in ") + sw.parameter;
    std::size_t bad = 0;
    for (std::size_t j = 0; j < sw.xs.size(); ++j)
        if (ordering(sw, theta, j) != want) ++bad;
    c.passed = bad == 0;
    std::ostringstream os;
    os << bad << " of " << sw.xs.size() << " x values violate the ordering";
    c.detail = os.str();
    return c;
}

}  // namespace detail

/// Monotonicity and crossing assertions drawn from the sensitivity discussion.
inline std::vector<TrendCheck> figure_trends(const FigureSweep& sw) {
    std::vector<TrendCheck> out;
    for (const auto& r : sw.rows)
        if (!r.regime_ok) {
            out.push_back({"regime", false, "a sweep value violates rho > mu_I or lambda > 0"});
            return out;
        }
    switch (sw.id) {
        case 1: {
            out.push_back(detail::uniform_trend(sw, false, -1));
            TrendCheck c{"theta_star decreasing in mu_I at small x and increasing at large x", false, ""};
            const std::size_t n = sw.xs.size();
            const int lo = detail::ordering(sw, true, 0), hi = detail::ordering(sw, true, n - 1);
            std::size_t flips = 0;
            double cross = 0.0;
            for (std::size_t j = 0; j + 1 < n; ++j)
                if (detail::ordering(sw, true, j) != detail::ordering(sw, true, j + 1)) {
                    ++flips;
                    cross = sw.xs[j + 1];
                }
            c.passed = lo == -1 && hi == 1;
            std::ostringstream os;
            os << "ordering at x=" << sw.xs.front() << ": " << lo << ", at x=" << sw.xs.back() << ": " << hi
               << ", changes near x=" << cross << " (" << flips << " transitions)";
            c.detail = os.str();
            out.push_back(c);
            break;
        }
        case 2:
            out.push_back(detail::uniform_trend(sw, false, 1));
            out.push_back(detail::uniform_trend(sw, true, -1));
            break;
        case 3:
            out.push_back(detail::uniform_trend(sw, false, 1));
            out.push_back(detail::uniform_trend(sw, true, 1));
            break;
        case 4:
            out.push_back(detail::uniform_trend(sw, false, -1));
            out.push_back(detail::uniform_trend(sw, true, -1));
            break;
        default: break;
    }
    return out;
}

}  // namespace ratchet
