// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "ratchet/model.hpp"

namespace ratchet::fixtures {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

inline MarketParams market_1d(double mu, double sigma, double rho, std::optional<double> horizon) {
    MarketParams m;
    m.mu = vec({mu});
    m.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
    m.rho = rho;
    m.horizon = horizon;
    return m;
}

/// Frozen factor, constant growth: α = ½μ², f ≡ c.
inline Model constant_model(double mu = 1.0, double rho = 0.0, double horizon = 1.0, double c = 1.0) {
    FactorSpec f{ConstantFactor{0.0, 0.0}, vec({1.0}), 0.0};
    return make_model(market_1d(mu, 1.0, rho, horizon), f, BenchmarkSpec{ConstantGrowth{c}, 0.0});
}

/// Two assets, OU factor, logistic growth.
inline Model ou_logistic_model(double horizon = 1.0) {
    MarketParams m;
    m.mu = vec({0.6, 0.4});
    m.sigma.resize(2, 2);
    m.sigma << 1.0, 0.0, 0.3, 0.9;
    m.rho = 0.05;
    m.horizon = horizon;
    FactorSpec f{OuFactor{1.0, 0.0, 0.5}, vec({0.6, 0.8}), 0.0};
    return make_model(m, f, BenchmarkSpec{LogisticGrowth{0.5, 1.0, 1.0}, 0.0});
}

inline Model gbm_model(double sigma_I, std::optional<double> horizon, double mu = 0.3, double mu_I = 1.0,
                       double rho = 2.0) {
    return make_index_model(market_1d(mu, 1.0, rho, horizon), vec({1.0}), GbmIndexSpec{mu_I, sigma_I, 1.0});
}

}  // namespace ratchet::fixtures
