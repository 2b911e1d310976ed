// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ratchet/closed_form_gbm.hpp"
#include "ratchet/dual_mc.hpp"
#include "ratchet/dual_pde.hpp"
#include "test_support.hpp"

using namespace ratchet;

namespace {

GbmClosedForm make_cf(double sigma_I, double mu = 0.3, double mu_I = 1.0, double rho = 2.0) {
    const auto m = fixtures::market_1d(mu, 1.0, rho, std::nullopt);
    return GbmClosedForm(m, fixtures::vec({1.0}), GbmIndexSpec{mu_I, sigma_I, 1.0});
}

}  // namespace

TEST(GammaRoots, FigureParametersByQuadraticFormula) {
    const auto cf = make_cf(0.25);
    EXPECT_NEAR(cf.alpha(), 0.045, 1e-15);
    EXPECT_NEAR(cf.kappa(), 0.075, 1e-15);
    const double a = 0.045, b = 2.0 - 0.075 - 0.045, c = -1.0;
    const double want = (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
    EXPECT_NEAR(cf.gamma2(), want, 1e-12);
    EXPECT_GT(cf.gamma2(), 0.0);
    EXPECT_LT(cf.gamma2(), 1.0);
    EXPECT_LT(cf.gamma1(), 0.0);
    EXPECT_LE(std::abs(cf.quadratic_residual(cf.gamma2())), 1e-12);
    EXPECT_LE(std::abs(cf.quadratic_residual(cf.gamma1())), 1e-12 * std::abs(cf.gamma1()) * 100.0);
}

TEST(GammaRoots, DeterministicIndexReducesToGammaZero) {
    const auto cf = make_cf(0.0);
    const double g0 = (0.045 - 2.0 + std::sqrt(1.955 * 1.955 + 0.18)) / 0.09;
    EXPECT_NEAR(gamma0(0.045, 2.0, 1.0), g0, 1e-12);
    EXPECT_NEAR(cf.gamma2(), g0, 1e-12);
    EXPECT_NEAR(cf.gamma2(), 0.5056243, 1e-7);
    EXPECT_LE(std::abs(gamma_quadratic(0.045, 2.0, 0.0, 1.0, g0)), 1e-12);
}

TEST(GammaRoots, VanishAsIndexDriftApproachesDiscount) {
    double prev = 1.0;
    for (double gap : {1e-1, 1e-3, 1e-6}) {
        const double g = solve_gamma_roots(0.045, 2.0, 0.0, 2.0 - gap).gamma2;
        EXPECT_GT(g, 0.0);
        EXPECT_LT(g, prev);
        prev = g;
    }
    EXPECT_LT(prev, 1e-5);
    EXPECT_THROW(solve_gamma_roots(0.045, 2.0, 0.0, 2.0), DomainError);
    EXPECT_THROW(make_cf(0.0, 0.3, 2.5), DomainError);
}

TEST(GammaRoots, ZeroRiskPremiumLimit) {
    const auto r = solve_gamma_roots(0.0, 2.0, 0.0, 1.0);
    EXPECT_NEAR(r.gamma2, 0.5, 1e-15);
    EXPECT_NEAR(gamma0(1e-9, 2.0, 1.0), gamma0(0.0, 2.0, 1.0), 1e-9);
    EXPECT_NEAR(gamma0(3.0, 2.0, 1.0), (1.0 + std::sqrt(13.0)) / 6.0, 1e-14);
}

TEST(GbmValue, NegativeWithUnitMarginalAtZero) {
    for (double sI : {0.0, 0.25}) {
        const auto cf = make_cf(sI);
        for (double z : {0.5, 1.0, 3.0}) {
            EXPECT_DOUBLE_EQ(cf.value(z, 0.0).v_x, 1.0);
            for (double x : {0.0, 0.1, 1.0, 10.0}) EXPECT_LT(cf.value(z, x).v, 0.0);
        }
        double prev = cf.value(1.0, 1.0).v;
        for (double x : {10.0, 100.0, 1e4}) {
            const double v = cf.value(1.0, x).v;
            EXPECT_GT(v, prev);
            EXPECT_LT(v, 0.0);
            prev = v;
        }
        EXPECT_GT(prev, -1e-2);
    }
}

TEST(GbmValue, CriterionSevenReferenceValues) {
    const auto cf = make_cf(0.0);
    EXPECT_NEAR(-cf.value(1.0, 0.5).v, 0.645849, 1e-6);
    EXPECT_NEAR(-cf.value(1.0, 1.0).v, 0.481227, 1e-6);
    EXPECT_NEAR(make_cf(0.25).lambda(), 0.925, 1e-15);
    EXPECT_NEAR(-make_cf(0.25).value(1.0, 0.5).v, 0.576934, 1e-6);
}

TEST(GbmValue, DerivativesMatchFiniteDifferences) {
    const auto cf = make_cf(0.25);
    const double e = 1e-4;
    for (double z : {0.7, 1.5})
        for (double x : {0.2, 1.0, 3.0}) {
            const auto p = cf.value(z, x);
            auto v = [&](double zz, double xx) { return cf.value(zz, xx).v; };
            EXPECT_NEAR(p.v_x, (v(z, x + e) - v(z, x - e)) / (2 * e), 1e-7);
            EXPECT_NEAR(p.v_z, (v(z + e, x) - v(z - e, x)) / (2 * e), 1e-7);
            EXPECT_NEAR(p.v_xx, (v(z, x + e) - 2 * p.v + v(z, x - e)) / (e * e), 1e-5);
            EXPECT_NEAR(p.v_zz, (v(z + e, x) - 2 * p.v + v(z - e, x)) / (e * e), 1e-5);
            EXPECT_NEAR(p.v_xz, (v(z + e, x + e) - v(z + e, x - e) - v(z - e, x + e) + v(z - e, x - e)) / (4 * e * e),
                        1e-5);
        }
}

TEST(GbmValue, YstarIdentity) {
    const auto cf = make_cf(0.25);
    for (double z : {0.5, 2.0})
        for (double x : {0.0, 0.3, 4.0}) {
            const double y = cf.ystar(z, x);
            EXPECT_LE(y, 1.0);
            EXPECT_NEAR(std::pow(y, cf.gamma2() - 1.0), 1.0 + x / z, 1e-12 * (1.0 + x / z));
            EXPECT_NEAR(cf.value(z, x).v, cf.dual_value(z, y) + x * y, 1e-12);
        }
}

TEST(GbmValue, StationaryEquationHoldsExactly) {
    for (double sI : {0.0, 0.1, 0.25, 0.4}) {
        const auto cf = make_cf(sI);
        for (double z : {0.25, 1.0, 4.0})
            for (double x : {0.0, 0.01, 0.5, 2.0, 20.0}) {
                double scale = 1.0;
                const double r = cf.stationary_residual(z, x, &scale);
                EXPECT_LE(std::abs(r), 1e-12 * scale) << "sI=" << sI << " z=" << z << " x=" << x;
                const double h = cf.hamiltonian_residual(z, x, cf.theta_bar(z, x), &scale);
                EXPECT_LE(std::abs(h), 1e-12 * scale);
            }
    }
}

TEST(GbmValue, FeedbackThetaMaximisesHamiltonian) {
    const auto cf = make_cf(0.25);
    for (double x : {0.3, 1.0}) {
        const auto th = cf.theta_bar(1.0, x);
        for (double bump : {-0.05, 0.05}) {
            Eigen::VectorXd other = th;
            other(0) += bump;
            EXPECT_LT(cf.hamiltonian_residual(1.0, x, other), cf.hamiltonian_residual(1.0, x, th));
        }
    }
}

TEST(GbmTheta, DeterministicIndexAtZeroWealth) {
    const auto cf = make_cf(0.0);
    const double g0 = cf.gamma2();
    for (double z : {0.5, 1.0, 2.0}) {
        const double th = cf.theta_bar(z, 0.0)(0);
        EXPECT_NEAR(th, -(g0 - 1.0) * z * 0.3, 1e-14);
        EXPECT_GT(th, 0.0);
        EXPECT_NEAR(cf.theta_bar_printed(z, 0.0)(0), th, 1e-14);
        EXPECT_NEAR(cf.theta(z, 0.0)(0), th, 1e-14);
    }
}

TEST(GbmTheta, ZeroPremiumAndDeterministicIndexGiveZero) {
    const auto cf = make_cf(0.0, 0.0);
    for (double x : {0.0, 0.5, 3.0}) {
        EXPECT_EQ(cf.theta_bar(1.0, x)(0), 0.0);
        EXPECT_EQ(cf.theta(1.0, x)(0), 0.0);
    }
}

TEST(GbmTheta, FeedbackIsDegreeOneHomogeneous) {
    const auto cf = make_cf(0.25);
    for (double c : {0.5, 3.0})
        for (double x : {0.0, 0.4, 2.0}) {
            EXPECT_NEAR(cf.theta_bar(c * 1.3, c * x)(0), c * cf.theta_bar(1.3, x)(0), 1e-12);
            EXPECT_NEAR(cf.theta(c * 1.3, c * x)(0), c * cf.theta(1.3, x)(0), 1e-12);
        }
}

TEST(GbmTheta, PrintedFormIsSingularAtZeroWealth) {
    const auto cf = make_cf(0.25);
    EXPECT_THROW(cf.theta_bar_printed(1.0, 0.0), DomainError);
    EXPECT_GT(std::abs(cf.theta_bar_printed(1.0, 1e-3)(0)), 50.0 * std::abs(cf.theta_bar_printed(1.0, 1e-1)(0)));
    Eigen::VectorXd out(1);
    cf.tradable_into(1.0, 0.7, false, out.data());
    EXPECT_NEAR(out(0), cf.theta(1.0, 0.7)(0), 1e-14);
    cf.tradable_into(1.0, 0.7, true, out.data());
    EXPECT_NEAR(out(0), cf.to_tradable(cf.theta_bar_printed(1.0, 0.7), 1.0)(0), 1e-14);
}

TEST(GbmTheta, DominatedIndexIsTrivial) {
    // λ = μ_I − σ_Iγσ⁻¹μ < 0 when the index volatility loading is large
    const auto cf = make_cf(4.0, 0.3, 1.0);
    EXPECT_LT(cf.lambda(), 0.0);
    EXPECT_TRUE(cf.trivial());
    for (double x : {0.0, 1.0}) {
        EXPECT_EQ(cf.value(1.0, x).v, 0.0);
        EXPECT_EQ(cf.theta_bar(1.0, x)(0), 0.0);
    }
}

TEST(GbmThreshold, CorrectedAndPrintedForms) {
    const auto cf = make_cf(0.0);
    EXPECT_NEAR(cf.xi(1.0, 2.0), 2.0 * std::expm1(1.0), 1e-12);
    EXPECT_EQ(cf.xi(0.0, 1.0), 0.0);
    EXPECT_NEAR(cf.xi_printed_rate(), 0.09 + 1.0 - 4.0, 1e-15);
    EXPECT_NEAR(cf.xi_printed(1.0, 1.0), std::expm1(-2.91) / -2.91, 1e-12);
}

TEST(FiniteHorizon, TerminalTimeIsZero) {
    const auto m = fixtures::gbm_model(0.0, 1.0);
    const auto v = finite_horizon_sigma0(m.market, m.factor.gamma, *m.index, 1.0, 1.0, 1.0, {0.2, 1.0});
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 0.0);
}

TEST(FiniteHorizon, AgreesWithPdeAndMonteCarlo) {
    const auto m = fixtures::gbm_model(0.0, 1.0);
    PdeConfig c;
    c.n_u = 800;
    c.n_z = 11;
    c.z_min = 0.5;
    c.z_max = 2.0;
    const auto F = solve_dual(m, c);
    const std::vector<double> ys{1.0, 0.6, 0.3, 0.1};
    for (double t : {0.0, 0.5}) {
        const auto exact = finite_horizon_sigma0(m.market, m.factor.gamma, *m.index, 1.0, t, 1.0, ys);
        for (std::size_t i = 0; i < ys.size(); ++i)
            EXPECT_NEAR(F.vhat(t, 1.0, ys[i]).v, exact[i], 1.5e-3 * std::abs(exact[i])) << "t=" << t << " y=" << ys[i];
    }
    McConfig mc;
    mc.n_paths = 20000;
    mc.dt = 1e-3;
    std::vector<double> us;
    for (double y : ys) us.push_back(-std::log(y));
    const auto est = dual_mc(m, 0.0, 1.0, us, mc);
    const auto exact = finite_horizon_sigma0(m.market, m.factor.gamma, *m.index, 1.0, 0.0, 1.0, ys);
    for (std::size_t i = 0; i < ys.size(); ++i)
        EXPECT_NEAR(est[i].h.value, exact[i], 3.0 * est[i].h.std_error + 2e-3 * std::abs(exact[i]));
}

TEST(Figures, TrendsMatchSensitivityDiscussion) {
    const auto xs = default_figure_grid(40);
    for (int id = 1; id <= 4; ++id) {
        const auto sw = figure_sweep(id, xs);
        ASSERT_EQ(sw.rows.size(), sw.values.size() * xs.size());
        for (const auto& c : figure_trends(sw)) EXPECT_TRUE(c.passed) << "figure " << id << ": " << c.name << " " << c.detail;
    }
}

TEST(Figures, RegimeViolationIsFlagged) {
    const auto sw = figure_sweep(1, {0.5, 1.0}, FigureSetup{}, {1.0, 2.5});
    EXPECT_TRUE(sw.at(0, 0).regime_ok);
    EXPECT_FALSE(sw.at(1, 0).regime_ok);
    EXPECT_TRUE(std::isnan(sw.at(1, 1).v));
    const auto trends = figure_trends(sw);
    ASSERT_EQ(trends.size(), 1u);
    EXPECT_FALSE(trends[0].passed);
    EXPECT_THROW(figure_sweep(5, {0.5}), ValidationError);
}
