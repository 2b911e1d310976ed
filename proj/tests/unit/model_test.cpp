// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "ratchet/model.hpp"
#include "test_support.hpp"

using namespace ratchet;
using ratchet::fixtures::market_1d;
using ratchet::fixtures::vec;

namespace {

FactorSpec unit_factor(int d = 1) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    g(0) = 1.0;
    return {ConstantFactor{}, g, 0.0};
}

}  // namespace

TEST(DeriveMarket, ZeroDriftHasZeroAlpha) {
    const auto d = derive_market(market_1d(0.0, 1.0, 0.1, 1.0), unit_factor());
    EXPECT_EQ(d.alpha, 0.0);
    EXPECT_TRUE(d.degenerate_b1);
    EXPECT_DOUBLE_EQ(d.mu_tilde, -0.1);
}

TEST(DeriveMarket, HandAlpha) {
    const auto d = derive_market(market_1d(0.3, 1.0, 2.0, std::nullopt), unit_factor());
    EXPECT_NEAR(d.alpha, 0.045, 1e-15);
    EXPECT_NEAR(d.mu_tilde, 0.045 - 2.0, 1e-15);
}

TEST(DeriveMarket, OneDimensionalCorrelationIsSign) {
    EXPECT_DOUBLE_EQ(derive_market(market_1d(0.7, 2.0, 0.0, 1.0), unit_factor()).varrho, 1.0);
    EXPECT_DOUBLE_EQ(derive_market(market_1d(-0.7, 2.0, 0.0, 1.0), unit_factor()).varrho, -1.0);
}

TEST(DeriveMarket, AlphaTwoRoutesAgree) {
    MarketParams m;
    m.mu = vec({0.6, -0.2, 0.4});
    m.sigma.resize(3, 3);
    m.sigma << 1.0, 0.0, 0.0, 0.3, 0.9, 0.0, -0.2, 0.1, 0.7;
    const auto d = derive_market(m, unit_factor(3));
    EXPECT_NEAR(d.alpha, alpha_quadratic_form(m), 1e-10 * d.alpha);
    EXPECT_LE(std::abs(d.varrho), 1.0 + 1e-12);
}

TEST(DeriveMarket, CorrelationInvariantUnderDriftScaling) {
    MarketParams m;
    m.mu = vec({0.6, 0.4});
    m.sigma.resize(2, 2);
    m.sigma << 1.0, 0.0, 0.3, 0.9;
    FactorSpec f{ConstantFactor{}, vec({0.6, 0.8}), 0.0};
    const double r0 = derive_market(m, f).varrho;
    for (double c : {1e-3, 0.5, 3.0, 1e4}) {
        MarketParams s = m;
        s.mu *= c;
        EXPECT_NEAR(derive_market(s, f).varrho, r0, 1e-12) << "c=" << c;
    }
}

TEST(DeriveMarket, PhiCoefficientMatchesDefinition) {
    MarketParams m;
    m.mu = vec({0.6, 0.4});
    m.sigma.resize(2, 2);
    m.sigma << 1.0, 0.0, 0.3, 0.9;
    FactorSpec f{OuFactor{1.0, 0.0, 0.5}, vec({0.6, 0.8}), 0.0};
    const auto d = derive_market(m, f);
    const Eigen::MatrixXd cov = m.sigma * m.sigma.transpose();
    const double sigma_z = 0.5;
    EXPECT_NEAR(d.phi(f, 0.3), sigma_z * m.mu.dot(cov.inverse() * m.sigma * f.gamma), 1e-12);
}

TEST(DeriveMarket, SingularVolatilityRejected) {
    MarketParams m;
    m.mu = vec({0.1, 0.2});
    m.sigma.resize(2, 2);
    m.sigma << 1.0, 2.0, 2.0, 4.0;
    EXPECT_THROW(derive_market(m, unit_factor(2)), ValidationError);
    m.sigma << 1.0, 0.0, 0.0, 1e-13;
    EXPECT_THROW(derive_market(m, unit_factor(2)), ValidationError);
}

TEST(DeriveMarket, ShapeAndSignErrors) {
    auto m = market_1d(0.1, 1.0, -0.5, 1.0);
    EXPECT_THROW(derive_market(m, unit_factor()), ValidationError);
    m.rho = 0.1;
    m.horizon = 0.0;
    EXPECT_THROW(derive_market(m, unit_factor()), ValidationError);
    m.horizon = 1.0;
    EXPECT_THROW(derive_market(m, unit_factor(2)), ValidationError);
}

TEST(ValidateAssumptions, ConstantGrowthPasses) {
    const FactorSpec f = unit_factor();
    const auto r = validate_assumptions(f, BenchmarkSpec{ConstantGrowth{0.5}, 0.0}, default_sample_domain(f, 1.0));
    EXPECT_TRUE(r.ok());
}

TEST(ValidateAssumptions, NegativeLogisticBaseFailsWithWitness) {
    const FactorSpec f{OuFactor{1.0, 0.0, 0.5}, vec({1.0}), 0.0};
    const auto r =
        validate_assumptions(f, BenchmarkSpec{LogisticGrowth{-1.0, 0.5, 1.0}, 0.0}, default_sample_domain(f, 1.0));
    EXPECT_FALSE(r.ok());
    const auto* c = r.find("growth_positive");
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->passed);
    ASSERT_TRUE(c->witness.has_value());
    const LogisticGrowth g{-1.0, 0.5, 1.0};
    EXPECT_LE(g.value(c->witness->first, c->witness->second), 0.0);
}

TEST(ValidateAssumptions, LinearGrowthOnGeometricFactorPasses) {
    const FactorSpec f{GeometricFactor{0.1, 0.3}, vec({1.0}), 1.0};
    const auto r = validate_assumptions(f, BenchmarkSpec{LinearGrowth{0.8}, 0.0}, default_sample_domain(f, 1.0));
    EXPECT_TRUE(r.ok());
}

TEST(ValidateAssumptions, LinearGrowthOnOuFactorFails) {
    const FactorSpec f{OuFactor{1.0, 0.0, 0.5}, vec({1.0}), 0.0};
    const auto r = validate_assumptions(f, BenchmarkSpec{LinearGrowth{1.0}, 0.0}, default_sample_domain(f, 1.0));
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(r.find("growth_positive")->witness.has_value());
}

TEST(ValidateAssumptions, GammaChecks) {
    const FactorSpec wide{ConstantFactor{}, vec({1.5}), 0.0};
    auto r = validate_assumptions(wide, BenchmarkSpec{}, default_sample_domain(wide, 1.0));
    EXPECT_FALSE(r.find("gamma_range")->passed);
    const FactorSpec short_gamma{ConstantFactor{}, vec({0.6, 0.6}), 0.0};
    r = validate_assumptions(short_gamma, BenchmarkSpec{}, default_sample_domain(short_gamma, 1.0));
    EXPECT_TRUE(r.find("gamma_range")->passed);
    EXPECT_FALSE(r.find("gamma_unit_norm")->passed);
}

TEST(ValidateAssumptions, GeometricNeedsPositiveStart) {
    const FactorSpec f{GeometricFactor{0.1, 0.3}, vec({1.0}), -1.0};
    const auto r = validate_assumptions(f, BenchmarkSpec{ConstantGrowth{1.0}, 0.0}, default_sample_domain(f, 1.0));
    EXPECT_FALSE(r.find("factor_regularity")->passed);
}

TEST(IndexSpec, LambdaLinearInIndexDrift) {
    const auto m = market_1d(0.3, 1.2, 2.0, std::nullopt);
    const auto g = vec({1.0});
    for (double mu_I : {-0.5, 0.3, 1.0, 1.9})
        for (double delta : {1e-3, 0.25, 1.0}) {
            const double a = index_lambda(m, g, {mu_I, 0.25, 1.0});
            const double b = index_lambda(m, g, {mu_I + delta, 0.25, 1.0});
            EXPECT_NEAR(b - a, delta, 1e-12);
        }
}

TEST(IndexSpec, LambdaValue) {
    EXPECT_NEAR(index_lambda(market_1d(0.3, 1.0, 2.0, std::nullopt), vec({1.0}), {1.0, 0.25, 1.0}), 0.925, 1e-15);
    EXPECT_DOUBLE_EQ(index_lambda(market_1d(0.3, 1.0, 2.0, std::nullopt), vec({1.0}), {1.0, 0.0, 1.0}), 1.0);
}

TEST(IndexSpec, ZeroLambdaRejected) {
    EXPECT_THROW(make_index_model(market_1d(0.4, 1.0, 2.0, std::nullopt), vec({1.0}), {0.2, 0.5, 1.0}),
                 ValidationError);
}

TEST(IndexSpec, ModelTracksLinearGrowth) {
    const auto m = ratchet::fixtures::gbm_model(0.25, std::nullopt);
    ASSERT_TRUE(m.index.has_value());
    EXPECT_NEAR(m.f(0.0, 2.0), 2.0 * 0.925, 1e-15);
    EXPECT_DOUBLE_EQ(m.benchmark.a, 1.0);
    EXPECT_DOUBLE_EQ(m.horizon, 10.0);
}

TEST(Horizon, EffectiveTruncation) {
    EXPECT_DOUBLE_EQ(effective_horizon(2.0), 10.0);
    for (double rho : {0.05, 0.3, 1.0, 2.0, 7.0}) {
        const double T = effective_horizon(rho);
        EXPECT_LT(std::exp(-rho * T), 1e-8);
        EXPECT_GE(std::exp(-rho * (T - 1.0)), 1e-8);
    }
    EXPECT_THROW(effective_horizon(0.0), ValidationError);
}

TEST(MakeModel, RejectsNonPositiveGrowth) {
    const FactorSpec f = unit_factor();
    EXPECT_THROW(make_model(market_1d(1.0, 1.0, 0.0, 1.0), f, {ConstantGrowth{0.0}, 0.0}), ValidationError);
    EXPECT_THROW(make_model(market_1d(1.0, 1.0, 0.0, 1.0), f, {ConstantGrowth{1.0}, -1.0}), ValidationError);
    EXPECT_THROW(make_model(market_1d(1.0, 1.0, 0.0, 1.0), f, {LogisticGrowth{0.5, -0.6, 1.0}, 0.0}),
                 ValidationError);
}

TEST(GrowthFamilies, LogisticDerivativesMatchDifferences) {
    const LogisticGrowth g{0.5, 1.0, 1.3};
    for (double z : {-2.0, -0.3, 0.0, 0.8, 2.5}) {
        const double e = 1e-5;
        EXPECT_NEAR(g.dz(0, z), (g.value(0, z + e) - g.value(0, z - e)) / (2 * e), 1e-9);
        EXPECT_NEAR(g.dzz(0, z), (g.dz(0, z + e) - g.dz(0, z - e)) / (2 * e), 1e-9);
    }
}
