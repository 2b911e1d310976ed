// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "ratchet/closed_form_gbm.hpp"
#include "ratchet/dual_mc.hpp"
#include "ratchet/quadrature.hpp"
#include "ratchet/reflected_law.hpp"
#include "test_support.hpp"

using namespace ratchet;
using ratchet::fixtures::constant_model;
using ratchet::fixtures::ou_logistic_model;

namespace {

// constant f = 1, α = 0.5, ρ = 0, T = 1: values from quadrature of the reflected density
constexpr double kH0 = -0.5798960;
constexpr double kHHalf = -0.4871491;
constexpr double kHuHalf = 0.28920;
constexpr double kHuuHalf = 0.16665;
constexpr double kHTwo = -0.134266;

McConfig config(std::size_t paths = 20000, double dt = 1e-3, std::uint64_t seed = 11) {
    McConfig c;
    c.n_paths = paths;
    c.dt = dt;
    c.seed = seed;
    return c;
}

/// h(0,·,u) for constant f and ρ = 0 by quadrature in time of E[e^{−R}].
double h_by_quadrature(double u) {
    const ReflectedBmLaw law(0.5, 0.0);
    return -integrate([&](double s) { return reflected_exp_moment(law, u, s); }, 0.0, 1.0, 1e-9);
}

// statistical error plus a small allowance for the discrete time step
double tol(const Estimate& e, double bias = 2e-3) { return 3.0 * e.std_error + bias; }

}  // namespace

TEST(DualMc, QuadratureOracleMatchesFrozenValues) {
    EXPECT_NEAR(h_by_quadrature(0.0), kH0, 2e-6);
    EXPECT_NEAR(h_by_quadrature(0.5), kHHalf, 2e-6);
    EXPECT_NEAR(h_by_quadrature(2.0), kHTwo, 2e-6);
}

TEST(DualMc, ConstantGrowthMatchesOracle) {
    const auto m = constant_model();
    const std::vector<double> us{0.0, 0.5, 2.0};
    const auto r = dual_mc(m, 0.0, 0.0, us, config());
    EXPECT_NEAR(r[0].h.value, kH0, tol(r[0].h));
    EXPECT_NEAR(r[1].h.value, kHHalf, tol(r[1].h));
    EXPECT_NEAR(r[2].h.value, kHTwo, tol(r[2].h));
    EXPECT_NEAR(r[1].h_u.value, kHuHalf, tol(r[1].h_u));
    ASSERT_TRUE(r[1].h_uu.has_value());
    EXPECT_NEAR(r[1].h_uu->value, kHuuHalf, tol(*r[1].h_uu, 5e-3));
    // frozen factor and constant f: no z-dependence
    for (const auto& e : r) {
        EXPECT_EQ(e.h_z.value, 0.0);
        EXPECT_EQ(e.h_zu.value, 0.0);
        EXPECT_LE(e.h.value, 0.0);
        EXPECT_GE(e.h_u.value, 0.0);
    }
}

TEST(DualMc, NeumannAtZeroIsExact) {
    for (const Model& m : {constant_model(), ou_logistic_model()}) {
        const auto r = dual_mc(m, 0.2, 0.1, 0.0, config(2000));
        EXPECT_EQ(r.h_u.value, 0.0);
        EXPECT_EQ(r.h_u.std_error, 0.0);
        EXPECT_EQ(r.h_zu.value, 0.0);
    }
}

TEST(DualMc, GammaWeightAtZeroMatches) {
    const auto m = constant_model();
    const auto r = dual_mc(m, 0.0, 0.0, 0.0, config(200));
    // at u = 0 the curvature estimator reduces to f Γ(t)
    EXPECT_NEAR(r.h_uu->value, gamma_weight(0.5, 0.5, 1.0), 1e-12);
    EXPECT_NEAR(r.h_uu->value, 1.1617, 1e-3);
    EXPECT_EQ(gamma_weight(0.5, 0.5, 0.0), 0.0);
}

TEST(DualMc, TerminalTime) {
    const auto m = ou_logistic_model();
    const auto r = dual_mc(m, 1.0, 0.4, 0.7, config(100));
    EXPECT_EQ(r.h.value, 0.0);
    EXPECT_EQ(r.h_u.value, 0.0);
    EXPECT_EQ(r.xi.value, 0.0);
    EXPECT_EQ(r.h_uu->value, 0.0);
    EXPECT_NEAR(r.h_t.value, std::exp(-0.05) * m.f(1.0, 0.4) * std::exp(-0.7), 1e-15);
}

TEST(DualMc, LargeBufferIsUnreflected) {
    // reflection never binds: h = −e^{−u−ρt} ξ with ξ = c(T − t)
    const auto m = constant_model(1.0, 0.3, 1.0, 2.0);
    const auto r = dual_mc(m, 0.25, 0.0, 20.0, config(4000));
    const double exact = -std::exp(-20.0 - 0.3 * 0.25) * 2.0 * 0.75;
    EXPECT_NEAR(r.h.value, exact, 3.0 * r.h.std_error + 1e-3 * std::abs(exact));
}

TEST(DualMc, SuperhedgeThresholdConstantGrowth) {
    const auto m = constant_model(1.0, 0.4, 1.0, 1.5);
    for (double t : {0.0, 0.6}) {
        const auto xi = xi_mc(m, t, 0.0, config());
        EXPECT_NEAR(xi.value, 1.5 * (1.0 - t), 3.0 * xi.std_error);
    }
}

TEST(DualMc, SuperhedgeThresholdIndex) {
    const auto m = ratchet::fixtures::gbm_model(0.25, 1.0);
    const auto xi = xi_mc(m, 0.0, 1.3, config());
    EXPECT_NEAR(xi.value, 1.3 * std::expm1(0.925), 3.0 * xi.std_error + 2e-3);
}

TEST(DualMc, ScaledDerivativeTendsToThreshold) {
    const auto m = ou_logistic_model();
    const std::vector<double> us{8.0, 12.0};
    const auto r = dual_mc(m, 0.0, 0.2, us, config(4000));
    for (const auto& e : r)
        EXPECT_NEAR(std::exp(e.u) * e.h_u.value, e.xi.value, 3.0 * std::exp(e.u) * e.h_u.std_error + 1e-3);
}

TEST(DualMc, MonotoneAndConvexInBuffer) {
    const auto m = ou_logistic_model();
    const std::vector<double> us{0.0, 0.2, 0.5, 1.0, 2.0, 4.0};
    const auto r = dual_mc(m, 0.1, -0.3, us, config(4000));
    for (std::size_t j = 1; j < us.size(); ++j) EXPECT_GE(r[j].h.value, r[j - 1].h.value);
    for (const auto& e : r) {
        const double s = e.h_u.value + e.h_uu->value;
        EXPECT_GT(s + 3.0 * (e.h_u.std_error + e.h_uu->std_error), 0.0) << "u=" << e.u;
    }
}

TEST(DualMc, BufferDerivativeMatchesCommonNoiseDifference) {
    const auto m = ou_logistic_model();
    const double eps = 0.01;
    for (double u : {0.3, 1.0}) {
        const std::vector<double> us{u - eps, u, u + eps};
        const auto r = dual_mc(m, 0.0, 0.2, us, config(8000));
        const double fd = (r[2].h.value - r[0].h.value) / (2 * eps);
        EXPECT_NEAR(fd, r[1].h_u.value, std::max(3.0 * r[1].h_u.std_error, 5 * eps * eps)) << "u=" << u;
        const double fd2 = (r[2].h_u.value - r[0].h_u.value) / (2 * eps);
        EXPECT_NEAR(fd2, r[1].h_uu->value, 3.0 * r[1].h_uu->std_error + 0.03) << "u=" << u;
    }
}

TEST(DualMc, FactorDerivativeMatchesCommonNoiseDifference) {
    const auto m = ou_logistic_model();
    const double eps = 1e-3, z = 0.3, u = 0.5;
    const auto c = config(4000);
    const auto up = dual_mc(m, 0.0, z + eps, u, c), dn = dual_mc(m, 0.0, z - eps, u, c), mid = dual_mc(m, 0.0, z, u, c);
    EXPECT_NEAR((up.h.value - dn.h.value) / (2 * eps), mid.h_z.value, 1e-4);
    EXPECT_NEAR((up.h_u.value - dn.h_u.value) / (2 * eps), mid.h_zu.value, 3.0 * mid.h_zu.std_error + 1e-3);
    EXPECT_LT(mid.h_z.value, 0.0);  // f increasing in z
}

TEST(DualMc, TimeDerivativeMatchesDifference) {
    const auto m = ou_logistic_model();
    const double eps = 0.05, t = 0.4, u = 0.5;
    const auto c = config(20000);
    const auto a = dual_mc(m, t - eps, 0.1, u, c), b = dual_mc(m, t + eps, 0.1, u, c), mid = dual_mc(m, t, 0.1, u, c);
    const double fd = (b.h.value - a.h.value) / (2 * eps);
    EXPECT_NEAR(fd, mid.h_t.value, 3.0 * (mid.h_t.std_error + (a.h.std_error + b.h.std_error) / (2 * eps)) + 0.01);
}

TEST(DualMc, TimeDerivativeWithoutDiscount) {
    const auto m = constant_model();
    const auto r = dual_mc(m, 0.0, 0.0, 0.5, config(4000));
    EXPECT_GT(r.h_t.value, 0.0);
}

TEST(DualMc, ZeroDriftHasNoCurvatureEstimator) {
    const auto m = constant_model(0.0, 0.5, 1.0, 1.0);
    const auto r = dual_mc(m, 0.0, 0.0, 0.3, config(100));
    EXPECT_FALSE(r.h_uu.has_value());
    EXPECT_THROW(h_uu_mc(m, 0.0, 0.0, 0.3, config(100)), ValidationError);
    // no noise: R = (u − ρs)⁺, which reaches 0 at s = 0.6
    const double exact = -(0.6 * std::exp(-0.3) + 2.0 * (std::exp(-0.3) - std::exp(-0.5)));
    EXPECT_NEAR(r.h.value, exact, 1e-6);
}

TEST(DualMc, ReproducibleAcrossThreadCounts) {
    const auto m = ou_logistic_model();
    const std::vector<double> us{0.0, 0.7};
    ::setenv("RATCHET_THREADS", "1", 1);
    const auto a = dual_mc(m, 0.0, 0.1, us, config(3000));
    ::setenv("RATCHET_THREADS", "3", 1);
    const auto b = dual_mc(m, 0.0, 0.1, us, config(3000));
    ::unsetenv("RATCHET_THREADS");
    for (std::size_t j = 0; j < us.size(); ++j) {
        EXPECT_EQ(a[j].h.value, b[j].h.value);
        EXPECT_EQ(a[j].h_u.std_error, b[j].h_u.std_error);
        EXPECT_EQ(a[j].h_z.value, b[j].h_z.value);
    }
}

TEST(DualMc, Preconditions) {
    const auto m = constant_model();
    EXPECT_THROW(dual_mc(m, 0.0, 0.0, -0.1, config(10)), ValidationError);
    EXPECT_THROW(dual_mc(m, 1.5, 0.0, 0.1, config(10)), ValidationError);
    EXPECT_THROW(dual_mc(m, 0.0, 0.0, 0.1, config(1)), ValidationError);
}
