// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ratchet/closed_form_gbm.hpp"
#include "ratchet/crosscheck.hpp"
#include "ratchet/dual_mc.hpp"
#include "ratchet/dual_pde.hpp"
#include "ratchet/primal.hpp"
#include "ratchet/scenario.hpp"
#include "ratchet/tracker_sim.hpp"

namespace ratchet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitChecksFailed = 3;

/// Everything that determines a run; echoed verbatim into the run report.
struct RunConfig {
    std::string subcommand;
    std::string scenario;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<int> grid_u, grid_z;
    std::optional<double> dt;
    std::vector<int> figures;
    int dump_paths = 0;

    json to_json() const {
        json j;
        j["subcommand"] = subcommand;
        j["scenario"] = scenario;
        j["out"] = out;
        j["seed"] = seed ? json(*seed) : json(nullptr);
        j["paths"] = paths ? json(*paths) : json(nullptr);
        j["grid_u"] = grid_u ? json(*grid_u) : json(nullptr);
        j["grid_z"] = grid_z ? json(*grid_z) : json(nullptr);
        j["dt"] = dt ? json(*dt) : json(nullptr);
        if (!figures.empty()) j["figures"] = figures;
        if (dump_paths > 0) j["dump_paths"] = dump_paths;
        return j;
    }
};

namespace detail {

class Csv {
public:
    explicit Csv(const std::filesystem::path& p) : os_(p) {
        if (!os_) throw ValidationError("cannot write " + p.string());
        os_ << std::setprecision(12);
    }
    template <class... T>
    void row(const T&... v) {
        bool first = true;
        ((os_ << (first ? "" : ",") << v, first = false), ...);
        os_ << '\n';
    }
    std::ostream& stream() { return os_; }

private:
    std::ofstream os_;
};

inline json estimate_json(const Estimate& e) { return {{"value", e.value}, {"std_error", e.std_error}}; }

inline void apply_overrides(Scenario& sc, const RunConfig& rc) {
    if (rc.seed) {
        sc.mc.seed = *rc.seed;
        sc.simulation.config.seed = *rc.seed;
    }
    if (rc.paths) {
        sc.mc.n_paths = *rc.paths;
        sc.simulation.config.n_paths = *rc.paths;
    }
    if (rc.grid_u) sc.pde.n_u = *rc.grid_u;
    if (rc.grid_z) sc.pde.n_z = *rc.grid_z;
    if (rc.dt) {
        sc.mc.dt = *rc.dt;
        sc.simulation.config.dt = *rc.dt;
    }
}

inline json field_json(const DualField& F) {
    return {{"n_u", F.n_u},     {"n_z", F.n_z()},        {"u_max", F.u_max}, {"dt", F.dt},
            {"cfl", F.cfl},     {"levels", F.n_levels()}, {"scheme", F.scheme},
            {"z_lo", F.z_lo()}, {"z_hi", F.z_hi()}};
}

inline json checks_json(const CheckMatrix& m) {
    json rows = json::array();
    for (const auto& r : m.rows)
        rows.push_back({{"check", r.check},
                        {"point", r.point},
                        {"value", r.value},
                        {"reference", std::isnan(r.reference) ? json(nullptr) : json(r.reference)},
                        {"tolerance", r.tolerance},
                        {"passed", r.passed}});
    return rows;
}

inline void write_checks_csv(const std::filesystem::path& p, const CheckMatrix& m) {
    Csv csv(p);
    csv.row("check", "point", "value", "reference", "tolerance", "passed");
    for (const auto& r : m.rows)
        csv.row('"' + r.check + '"', '"' + r.point + '"', r.value, r.reference, r.tolerance, r.passed ? 1 : 0);
}

inline std::optional<GbmClosedForm> closed_form_of(const Model& m) {
    if (!m.index) return std::nullopt;
    return GbmClosedForm(m.market, m.factor.gamma, *m.index);
}

// ---------------------------------------------------------------------------
// Subcommands; each returns its results block and writes files into out

inline json cmd_validate(const Scenario& sc) {
    const auto& m = sc.model;
    json r;
    const auto dom = default_sample_domain(m.factor, m.horizon);
    const auto rep = validate_assumptions(m.factor, m.benchmark, dom);
    json checks = json::array();
    for (const auto& c : rep.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    r["checks"] = checks;
    r["ok"] = rep.ok();
    r["derived"] = {{"alpha", m.alpha()},
                    {"varrho", m.derived.varrho},
                    {"phi_coefficient", m.derived.phi_coefficient},
                    {"condition", m.derived.condition},
                    {"degenerate_b1", m.derived.degenerate_b1},
                    {"horizon", m.horizon}};
    if (m.index) r["derived"]["lambda"] = index_lambda(m.market, m.factor.gamma, *m.index);
    if (!rep.ok()) throw AssumptionError(rep);
    return r;
}

inline json cmd_dual_mc(const Scenario& sc, const std::filesystem::path& out) {
    Csv csv(out / "dual_mc.csv");
    csv.row("t", "z", "u", "h", "h_se", "h_u", "h_u_se", "h_uu", "h_uu_se", "h_z", "h_z_se", "h_zu", "h_zu_se", "h_t",
            "h_t_se", "xi", "xi_se");
    json pts = json::array();
    for (double t : sc.probes.t) {
        if (t >= sc.model.horizon) continue;
        for (double z : sc.probes.z) {
            for (std::size_t b = 0; b < sc.probes.u.size(); b += 16) {
                const std::vector<double> us(sc.probes.u.begin() + b,
                                             sc.probes.u.begin() + std::min(b + 16, sc.probes.u.size()));
                for (const auto& e : dual_mc(sc.model, t, z, us, sc.mc)) {
                    const Estimate huu = e.h_uu ? *e.h_uu : Estimate{std::nan(""), std::nan("")};
                    csv.row(t, z, e.u, e.h.value, e.h.std_error, e.h_u.value, e.h_u.std_error, huu.value,
                            huu.std_error, e.h_z.value, e.h_z.std_error, e.h_zu.value, e.h_zu.std_error, e.h_t.value,
                            e.h_t.std_error, e.xi.value, e.xi.std_error);
                    pts.push_back({{"t", t}, {"z", z}, {"u", e.u}, {"h", estimate_json(e.h)}, {"xi", estimate_json(e.xi)}});
                }
            }
        }
    }
    const double dt = sc.mc.dt ? *sc.mc.dt : default_mc_dt(sc.model.horizon);
    return {{"points", pts},
            {"mc", {{"paths", sc.mc.n_paths}, {"dt", dt}, {"antithetic", sc.mc.antithetic}, {"seed", sc.mc.seed}}},
            {"files", {"dual_mc.csv"}}};
}

inline json cmd_dual_pde(const Scenario& sc, const std::filesystem::path& out) {
    const auto F = solve_dual(sc.model, sc.pde);
    F.save((out / "field.bin").string());
    Csv csv(out / "dual_pde.csv");
    csv.row("t", "z", "u", "h", "h_t", "h_u", "h_uu", "h_z", "h_zz", "h_uz", "xi");
    for (double t : sc.probes.t)
        for (double z : sc.probes.z)
            for (double u : sc.probes.u) {
                if (u > F.u_max) continue;
                const auto p = F.eval(t, z, u);
                csv.row(t, z, u, p.h, p.h_t, p.h_u, p.h_uu, p.h_z, p.h_zz, p.h_uz, F.xi(t, z));
            }
    return {{"field", field_json(F)}, {"files", {"field.bin", "dual_pde.csv"}}};
}

inline json cmd_primal(const Scenario& sc, const std::filesystem::path& out) {
    const auto F = solve_dual(sc.model, sc.pde);
    const PrimalSolution sol(sc.model, F);
    const int d = sc.model.market.dim();
    Csv csv(out / "primal.csv");
    auto& os = csv.stream();
    os << "t,z,x,xi,in_region,y,v,v_x,v_xx";
    for (int c = 0; c < d; ++c) os << ",theta_" << c + 1;
    os << ",hjb_relative\n";
    for (double t : sc.probes.t) {
        if (t >= sc.model.horizon) continue;
        for (double z : sc.probes.z)
            for (double x : sc.probes.x) {
                const auto p = sol.point(t, z, x);
                const auto th = sol.optimal_theta(t, z, x);
                os << t << ',' << z << ',' << x << ',' << sol.xi(t, z) << ',' << (p.in_region ? 1 : 0) << ',' << p.y
                   << ',' << p.v << ',' << p.v_x << ',' << p.v_xx;
                for (int c = 0; c < d; ++c) os << ',' << th(c);
                const double res = p.in_region && x > 0.0 ? sol.hjb_residual(t, z, x).relative() : std::nan("");
                os << ',' << res << '\n';
            }
    }
    return {{"field", field_json(F)}, {"files", {"primal.csv"}}};
}

inline json cost_json(const CostReport& r) {
    return {{"strategy", r.strategy},
            {"mean_discounted_injection", r.mean},
            {"std_error", r.std_error},
            {"n_paths", r.n_paths},
            {"dt", r.dt},
            {"horizon", r.horizon},
            {"seed", r.seed},
            {"injection_probability", r.injection_probability},
            {"mean_injection_steps", r.mean_injection_steps},
            {"clamp_count", r.clamp_count},
            {"floor_violations", r.floor_violations},
            {"max_route_gap", r.max_route_gap}};
}

inline json cmd_simulate(const Scenario& sc, const std::filesystem::path& out, int dump_paths) {
    const auto& spec = sc.simulation;
    std::optional<DualField> field;
    std::optional<FeedbackTable> table;
    std::optional<GbmClosedForm> cf;
    Strategy st;
    json extra;
    switch (spec.strategy) {
        case StrategyKind::FeedbackPrimal: {
            field = solve_dual(sc.model, sc.pde);
            table.emplace(sc.model, *field);
            st = Strategy::feedback(*table);
            const PrimalSolution sol(sc.model, *field);
            extra["value"] = sol.value(0.0, sc.model.factor.z0, spec.x0);
            extra["xi"] = sol.xi(0.0, sc.model.factor.z0);
            break;
        }
        case StrategyKind::ClosedFormGbm:
            cf = closed_form_of(sc.model);
            if (!cf) throw ValidationError("simulate: closed-form-gbm needs an 'index' scenario");
            st = Strategy::closed_form(*cf);
            if (spec.x0 >= 0.0) extra["value"] = cf->value(sc.model.factor.z0, spec.x0).v;
            break;
        case StrategyKind::ConstantTheta:
            st = Strategy::constant_theta(Eigen::Map<const Eigen::VectorXd>(spec.theta.data(), spec.theta.size()));
            break;
        case StrategyKind::ZeroTheta: st = Strategy::zero(); break;
    }
    const auto rep = evaluate_strategy(sc.model, st, spec.x0, spec.config);
    json r{{"x0", spec.x0}, {"cost", cost_json(rep)}};
    if (!extra.is_null()) r["reference"] = extra;
    if (dump_paths > 0) {
        const auto b = simulate_tracking_paths(sc.model, st, spec.x0, spec.config, dump_paths);
        std::ofstream os(out / "paths.csv");
        write_paths_csv(b, os);
        r["files"] = {"paths.csv"};
    }
    return r;
}

inline json cmd_closed_form(const Scenario& sc, const std::filesystem::path& out) {
    const auto cf = closed_form_of(sc.model);
    if (!cf) throw ValidationError("closed-form: needs an 'index' scenario");
    const auto& idx = *sc.model.index;
    json r{{"lambda", cf->lambda()}, {"alpha", cf->alpha()}, {"trivial", cf->trivial()}};
    if (!cf->trivial()) {
        r["gamma1"] = cf->gamma1();
        r["gamma2"] = cf->gamma2();
        r["gamma2_residual"] = cf->quadratic_residual(cf->gamma2());
        if (idx.sigma_I == 0.0) r["gamma0"] = gamma0(cf->alpha(), cf->rho(), idx.mu_I);
    }
    const int d = sc.model.market.dim();
    Csv csv(out / "closed_form.csv");
    auto& os = csv.stream();
    os << "z,x,v,v_x,stationary_residual";
    for (int c = 0; c < d; ++c) os << ",theta_bar_" << c + 1;
    for (int c = 0; c < d; ++c) os << ",theta_bar_printed_" << c + 1;
    for (int c = 0; c < d; ++c) os << ",theta_" << c + 1;
    os << '\n';
    for (double z : sc.probes.z)
        for (double x : sc.probes.x) {
            const auto v = cf->value(z, x);
            double scale = 1.0;
            const double res = cf->trivial() ? 0.0 : cf->stationary_residual(z, x, &scale);
            os << z << ',' << x << ',' << v.v << ',' << v.v_x << ',' << res / std::max(scale, 1e-300);
            const auto tb = cf->theta_bar(z, x);
            for (int c = 0; c < d; ++c) os << ',' << tb(c);
            const bool singular = idx.sigma_I > 0.0 && x == 0.0;
            const Eigen::VectorXd tp = singular ? Eigen::VectorXd::Constant(d, std::nan("")) : cf->theta_bar_printed(z, x);
            for (int c = 0; c < d; ++c) os << ',' << tp(c);
            const auto th = cf->theta(z, x);
            for (int c = 0; c < d; ++c) os << ',' << th(c);
            os << '\n';
        }
    json files = {"closed_form.csv"};
    if (sc.model.market.horizon) {
        Csv xc(out / "xi.csv");
        xc.row("t", "z", "xi", "xi_printed");
        for (double t : sc.probes.t)
            for (double z : sc.probes.z)
                xc.row(t, z, cf->xi(sc.model.horizon - t, z), cf->xi_printed(sc.model.horizon - t, z));
        files.push_back("xi.csv");
    }
    r["files"] = files;
    return r;
}

inline json cmd_figures(const std::vector<int>& ids, const std::filesystem::path& out) {
    const auto xs = default_figure_grid();
    json figs = json::array();
    bool all = true;
    for (int id : ids) {
        const auto sw = figure_sweep(id, xs);
        const std::string name = "figure_" + std::to_string(id) + ".csv";
        Csv csv(out / name);
        csv.row("x", "param_value", "v", "theta_star", "theta_feedback", "regime_ok");
        for (const auto& r : sw.rows) csv.row(r.x, r.param, r.v, r.theta_star, r.theta_feedback, r.regime_ok ? 1 : 0);
        json trends = json::array();
        for (const auto& t : figure_trends(sw)) {
            trends.push_back({{"name", t.name}, {"passed", t.passed}, {"detail", t.detail}});
            all = all && t.passed;
        }
        figs.push_back({{"figure", id}, {"parameter", sw.parameter}, {"values", sw.values}, {"file", name},
                        {"trends", trends}});
    }
    return {{"figures", figs}, {"all_trends_pass", all}};
}

inline json cmd_crosscheck(const Scenario& sc, const std::filesystem::path& out, bool& ok) {
    const auto& m = sc.model;
    CheckMatrix all;
    json r;
    if (auto cf = closed_form_of(m); cf && !cf->trivial()) {
        all.rows.push_back({"gamma2 quadratic residual", "", cf->quadratic_residual(cf->gamma2()), 0.0, 1e-12,
                            std::abs(cf->quadratic_residual(cf->gamma2())) <= 1e-12});
        for (double z : {0.5, 1.0, 2.0})
            for (double x : {0.01, 0.5, 2.0}) {
                double s = 1.0;
                const double res = cf->stationary_residual(z, x, &s) / s;
                all.rows.push_back({"stationary hjb residual", ratchet::detail::at_point({{"z", z}, {"x", x}}), res, 0.0, 1e-8,
                                    std::abs(res) <= 1e-8});
            }
    }
    if (m.market.horizon) {
        const auto fine = solve_dual(m, sc.pde);
        PdeConfig cc = sc.pde;
        cc.n_u = std::max(20, fine.n_u / 2);
        cc.u_max = fine.u_max;
        cc.n_z = std::max(1, sc.pde.n_z / 2);
        cc.dt.reset();
        const auto coarse = solve_dual(m, cc);
        const PrimalSolution sol(m, fine);
        std::vector<TzPoint> pts;
        for (double t : sc.probes.t)
            if (t < m.horizon)
                for (double z : sc.probes.z) pts.push_back({t, z});
        require(!pts.empty(), "crosscheck: need at least one probe with t < T");
        std::vector<double> us;
        for (double u : sc.probes.u)
            if (u <= fine.u_max && us.size() < 16) us.push_back(u);
        all.append(dual_equivalence(m, fine, coarse, pts, us, sc.mc));
        all.append(neumann_checks(m, sol, pts, sc.mc));
        all.append(shape_checks(sol, pts, 1000, sc.mc.seed));
        const auto [zl, zh] = interior_z(fine);
        all.append(hjb_checks(sol, 50, zl, zh, sc.mc.seed));
        r["field"] = field_json(fine);
    }
    write_checks_csv(out / "crosscheck.csv", all);
    ok = all.ok();
    r["checks"] = checks_json(all);
    r["failures"] = all.failures();
    r["all_pass"] = ok;
    r["files"] = {"crosscheck.csv"};
    return r;
}

inline void write_report(const std::filesystem::path& out, const RunConfig& rc, const json& scenario,
                         const json& results) {
    json rep;
    rep["tool"] = "ratchet";
    rep["config"] = rc.to_json();
    rep["scenario"] = scenario;
    rep["results"] = results;
    std::ofstream os(out / "run_report.json");
    os << rep.dump(2) << '\n';
}

inline int fail(std::ostream& err, int code, const std::string& kind, const std::string& msg, json extra = {}) {
    json e{{"error", {{"type", kind}, {"message", msg}, {"exit_code", code}}}};
    if (!extra.is_null()) e["error"]["report"] = extra;
    err << e.dump() << '\n';
    return code;
}

inline json assumption_json(const AssumptionReport& rep) {
    json checks = json::array();
    for (const auto& c : rep.checks) {
        json j{{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
        if (c.witness) j["witness"] = {{"t", c.witness->first}, {"z", c.witness->second}};
        checks.push_back(j);
    }
    return checks;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"ratchet: optimal tracking of a ratcheting benchmark with capital injection"};
    app.require_subcommand(1);
    RunConfig rc;
    const char* env_out = std::getenv("RATCHET_OUT");
    rc.out = env_out && *env_out ? env_out : "ratchet_out";
    auto common = [&](CLI::App* s, bool needs_scenario) {
        auto* o = s->add_option("--scenario", rc.scenario, "scenario JSON file");
        if (needs_scenario) o->required();
        s->add_option("--seed", rc.seed, "random seed");
        s->add_option("--paths", rc.paths, "Monte Carlo paths");
        s->add_option("--grid-u", rc.grid_u, "PDE nodes in u");
        s->add_option("--grid-z", rc.grid_z, "PDE nodes in z");
        s->add_option("--dt", rc.dt, "time step for Monte Carlo and simulation");
        s->add_option("--out", rc.out, "output directory (default $RATCHET_OUT or ./ratchet_out)");
    };
    auto* s_validate = app.add_subcommand("validate", "check model assumptions");
    auto* s_mc = app.add_subcommand("dual-mc", "Monte Carlo estimates of h and its partials at the probes");
    auto* s_pde = app.add_subcommand("dual-pde", "solve the dual PDE and save the field");
    auto* s_primal = app.add_subcommand("primal", "tabulate v, v_x, xi and theta* at the probes");
    auto* s_sim = app.add_subcommand("simulate", "evaluate a strategy by path simulation");
    auto* s_cf = app.add_subcommand("closed-form", "geometric index closed forms");
    auto* s_fig = app.add_subcommand("figures", "sensitivity sweeps as CSV");
    auto* s_cross = app.add_subcommand("crosscheck", "MC vs PDE vs closed-form pass/fail matrix");
    for (auto* s : {s_validate, s_mc, s_pde, s_primal, s_sim, s_cf, s_cross}) common(s, true);
    common(s_fig, false);
    s_fig->add_option("ids", rc.figures, "figure ids 1-4 (default: all)")->check(CLI::Range(1, 4));
    s_sim->add_option("--dump-paths", rc.dump_paths, "write this many full paths to paths.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        return detail::fail(err, kExitValidation, "usage", e.what());
    }
    rc.subcommand = app.get_subcommands().front()->get_name();

    try {
        const std::filesystem::path dir(rc.out);
        std::filesystem::create_directories(dir);
        json results, scenario_doc;
        int code = kExitOk;
        if (rc.subcommand == "figures") {
            if (rc.figures.empty()) rc.figures = {1, 2, 3, 4};
            results = detail::cmd_figures(rc.figures, dir);
            if (!results["all_trends_pass"].get<bool>()) code = kExitChecksFailed;
        } else {
            Scenario sc = load_scenario(rc.scenario);
            detail::apply_overrides(sc, rc);
            scenario_doc = sc.source;
            if (rc.subcommand == "validate") results = detail::cmd_validate(sc);
            else if (rc.subcommand == "dual-mc") results = detail::cmd_dual_mc(sc, dir);
            else if (rc.subcommand == "dual-pde") results = detail::cmd_dual_pde(sc, dir);
            else if (rc.subcommand == "primal") results = detail::cmd_primal(sc, dir);
            else if (rc.subcommand == "simulate") results = detail::cmd_simulate(sc, dir, rc.dump_paths);
            else if (rc.subcommand == "closed-form") results = detail::cmd_closed_form(sc, dir);
            else if (rc.subcommand == "crosscheck") {
                bool ok = false;
                results = detail::cmd_crosscheck(sc, dir, ok);
                if (!ok) code = kExitChecksFailed;
            }
        }
        detail::write_report(dir, rc, scenario_doc, results);
        out << (dir / "run_report.json").string() << '\n';
        return code;
    } catch (const AssumptionError& e) {
        return detail::fail(err, kExitValidation, "validation", e.what(), detail::assumption_json(e.report));
    } catch (const ValidationError& e) {
        return detail::fail(err, kExitValidation, "validation", e.what());
    } catch (const NumericalError& e) {
        return detail::fail(err, kExitNumerical, "numerical", e.what());
    } catch (const std::exception& e) {
        return detail::fail(err, kExitNumerical, "internal", e.what());
    }
}

}  // namespace ratchet::cli
