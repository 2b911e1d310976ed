// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ratchet/dual_mc.hpp"
#include "ratchet/dual_pde.hpp"
#include "ratchet/error.hpp"
#include "ratchet/model.hpp"
#include "ratchet/tracker_sim.hpp"

namespace ratchet {

using json = nlohmann::json;

struct SimulationSpec {
    StrategyKind strategy = StrategyKind::FeedbackPrimal;
    std::vector<double> theta;  ///< constant-theta amounts
    double x0 = 0.0;
    SimConfig config;
};

struct Probes {
    std::vector<double> t{0.0};
    std::vector<double> z;
    std::vector<double> u{0.0, 0.5, 1.0, 2.0};
    std::vector<double> x{0.0};
};

/// Scenario rejected by the model assumption checks; carries the full report with witnesses.
class AssumptionError : public ValidationError {
public:
    explicit AssumptionError(AssumptionReport r) : ValidationError(first_failure(r)), report(std::move(r)) {}
    AssumptionReport report;

private:
    static std::string first_failure(const AssumptionReport& r) {
        for (const auto& c : r.checks)
            if (!c.passed) return "assumption '" + c.name + "' failed: " + c.detail;
        return "assumption check failed";
    }
};

struct Scenario {
    std::string name;
    Model model;
    McConfig mc;
    PdeConfig pde;
    SimulationSpec simulation;
    Probes probes;
    json source;  ///< the document as loaded, embedded in run reports
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
}

inline double num(const json& j, const std::string& where, const char* key, std::optional<double> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw ValidationError(where + ": missing '" + key + "'");
    }
    if (!j.at(key).is_number()) throw ValidationError(where + "." + key + ": expected a number");
    return j.at(key).get<double>();
}

inline std::vector<double> vec(const json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) {
        if (!e.is_number()) throw ValidationError(where + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline Eigen::VectorXd eigen_vec(const json& j, const std::string& where) {
    const auto v = vec(j, where);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd eigen_mat(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXd m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = vec(j[r], where);
        if (r == 0) m.resize(rows, static_cast<Eigen::Index>(row.size()));
        if (static_cast<Eigen::Index>(row.size()) != m.cols()) throw ValidationError(where + ": ragged matrix");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[c];
    }
    return m;
}

inline StrategyKind parse_strategy(const std::string& s) {
    if (s == "feedback-primal") return StrategyKind::FeedbackPrimal;
    if (s == "closed-form-gbm") return StrategyKind::ClosedFormGbm;
    if (s == "constant-theta") return StrategyKind::ConstantTheta;
    if (s == "zero-theta") return StrategyKind::ZeroTheta;
    throw ValidationError("simulation.strategy: unknown strategy '" + s + "'");
}

}  // namespace detail

/// Builds a scenario from its JSON document; unknown keys are rejected.
inline Scenario parse_scenario(const json& doc) {
    using namespace detail;
    check_keys(doc, "scenario", {"name", "market", "factor", "benchmark", "index", "solver", "simulation", "probes"});
    Scenario sc;
    sc.source = doc;
    sc.name = doc.value("name", std::string("unnamed"));

    const auto& jm = doc.at("market");
    check_keys(jm, "market", {"mu", "sigma", "rho", "horizon"});
    MarketParams market;
    market.mu = eigen_vec(jm.at("mu"), "market.mu");
    market.sigma = eigen_mat(jm.at("sigma"), "market.sigma");
    market.rho = num(jm, "market", "rho");
    if (jm.contains("horizon") && !jm.at("horizon").is_null()) market.horizon = num(jm, "market", "horizon");

    if (doc.contains("index")) {
        if (doc.contains("benchmark") || doc.contains("factor"))
            throw ValidationError("scenario: 'index' replaces 'factor' and 'benchmark'");
        const auto& ji = doc.at("index");
        check_keys(ji, "index", {"mu_I", "sigma_I", "z0", "gamma"});
        GbmIndexSpec idx{num(ji, "index", "mu_I"), num(ji, "index", "sigma_I"), num(ji, "index", "z0", 1.0)};
        const Eigen::VectorXd gamma = eigen_vec(ji.at("gamma"), "index.gamma");
        sc.model = make_index_model(market, gamma, idx);
    } else {
        if (!doc.contains("factor") || !doc.contains("benchmark"))
            throw ValidationError("scenario: need 'factor' and 'benchmark', or 'index'");
        const auto& jf = doc.at("factor");
        check_keys(jf, "factor", {"family", "gamma", "z0", "m", "s", "kappa", "mean", "eta"});
        FactorSpec factor;
        factor.gamma = eigen_vec(jf.at("gamma"), "factor.gamma");
        factor.z0 = num(jf, "factor", "z0", 0.0);
        const std::string fam = jf.value("family", std::string("constant"));
        if (fam == "constant")
            factor.dynamics = ConstantFactor{num(jf, "factor", "m", 0.0), num(jf, "factor", "s", 0.0)};
        else if (fam == "ou")
            factor.dynamics = OuFactor{num(jf, "factor", "kappa"), num(jf, "factor", "mean", 0.0), num(jf, "factor", "eta")};
        else if (fam == "geometric")
            factor.dynamics = GeometricFactor{num(jf, "factor", "m"), num(jf, "factor", "s")};
        else
            throw ValidationError("factor.family: unknown family '" + fam + "'");

        const auto& jb = doc.at("benchmark");
        check_keys(jb, "benchmark", {"family", "a", "c", "slope", "base", "amplitude", "steepness"});
        BenchmarkSpec bench;
        bench.a = num(jb, "benchmark", "a", 0.0);
        const std::string g = jb.value("family", std::string("constant"));
        if (g == "constant")
            bench.growth = ConstantGrowth{num(jb, "benchmark", "c")};
        else if (g == "linear")
            bench.growth = LinearGrowth{num(jb, "benchmark", "slope")};
        else if (g == "logistic")
            bench.growth = LogisticGrowth{num(jb, "benchmark", "base"), num(jb, "benchmark", "amplitude"),
                                          num(jb, "benchmark", "steepness", 1.0)};
        else
            throw ValidationError("benchmark.family: unknown family '" + g + "'");
        const double horizon = market.horizon ? *market.horizon : effective_horizon(market.rho);
        auto report = validate_assumptions(factor, bench, default_sample_domain(factor, horizon));
        if (!report.ok()) throw AssumptionError(std::move(report));
        sc.model = make_model(market, factor, bench);
    }

    if (doc.contains("solver")) {
        const auto& js = doc.at("solver");
        check_keys(js, "solver", {"mc", "pde"});
        if (js.contains("mc")) {
            const auto& j = js.at("mc");
            check_keys(j, "solver.mc", {"paths", "dt", "antithetic", "seed"});
            sc.mc.n_paths = static_cast<std::size_t>(num(j, "solver.mc", "paths", double(sc.mc.n_paths)));
            if (j.contains("dt")) sc.mc.dt = num(j, "solver.mc", "dt");
            sc.mc.antithetic = j.value("antithetic", sc.mc.antithetic);
            sc.mc.seed = j.value("seed", sc.mc.seed);
        }
        if (js.contains("pde")) {
            const auto& j = js.at("pde");
            check_keys(j, "solver.pde", {"n_u", "n_z", "u_max", "dt", "z_min", "z_max", "n_levels"});
            if (j.contains("n_u")) sc.pde.n_u = static_cast<int>(num(j, "solver.pde", "n_u"));
            sc.pde.n_z = static_cast<int>(num(j, "solver.pde", "n_z", sc.pde.n_z));
            if (j.contains("u_max")) sc.pde.u_max = num(j, "solver.pde", "u_max");
            sc.pde.n_levels = static_cast<int>(num(j, "solver.pde", "n_levels", sc.pde.n_levels));
            if (j.contains("dt")) sc.pde.dt = num(j, "solver.pde", "dt");
            if (j.contains("z_min")) sc.pde.z_min = num(j, "solver.pde", "z_min");
            if (j.contains("z_max")) sc.pde.z_max = num(j, "solver.pde", "z_max");
        }
    }

    sc.simulation.config.seed = sc.mc.seed;
    if (doc.contains("simulation")) {
        const auto& j = doc.at("simulation");
        check_keys(j, "simulation", {"strategy", "theta", "x0", "paths", "dt", "antithetic", "seed"});
        sc.simulation.strategy = parse_strategy(j.value("strategy", std::string("feedback-primal")));
        if (j.contains("theta")) sc.simulation.theta = vec(j.at("theta"), "simulation.theta");
        sc.simulation.x0 = num(j, "simulation", "x0", 0.0);
        auto& c = sc.simulation.config;
        c.n_paths = static_cast<std::size_t>(num(j, "simulation", "paths", double(c.n_paths)));
        c.dt = num(j, "simulation", "dt", c.dt);
        c.antithetic = j.value("antithetic", c.antithetic);
        c.seed = j.value("seed", c.seed);
    }
    if (sc.simulation.strategy == StrategyKind::ConstantTheta)
        require(static_cast<int>(sc.simulation.theta.size()) == sc.model.market.dim(),
                "simulation.theta: constant-theta needs d amounts");

    sc.probes.z = {sc.model.factor.z0};
    if (doc.contains("probes")) {
        const auto& j = doc.at("probes");
        check_keys(j, "probes", {"t", "z", "u", "x"});
        if (j.contains("t")) sc.probes.t = vec(j.at("t"), "probes.t");
        if (j.contains("z")) sc.probes.z = vec(j.at("z"), "probes.z");
        if (j.contains("u")) sc.probes.u = vec(j.at("u"), "probes.u");
        if (j.contains("x")) sc.probes.x = vec(j.at("x"), "probes.x");
    }
    for (double t : sc.probes.t) require(t >= 0.0 && t <= sc.model.horizon, "probes.t: outside [0, T]");
    for (double u : sc.probes.u) require(u >= 0.0, "probes.u: must be >= 0");
    for (double x : sc.probes.x) require(x >= 0.0, "probes.x: must be >= 0");
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("scenario " + path + ": " + e.what());
    }
    try {
        return parse_scenario(doc);
    } catch (const json::exception& e) {
        throw ValidationError("scenario " + path + ": " + e.what());
    }
}

}  // namespace ratchet
