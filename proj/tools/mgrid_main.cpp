// Command-line front end: simulate / equilibrium / certify / linearize /
// sweep over one resolved configuration, emitting CSV and JSON reports.
#include <mgrid/config.hpp>
#include <mgrid/report_io.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mgrid;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    double dt = 0;      // 0 = keep config value
    double t_end = 0;   // 0 = keep config value
    std::uint64_t seed = 0;  // 0 = keep config value
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "configuration file (JSON)");
    cmd->add_option("--preset", a.preset, "parameter preset: table1, cs2, pi");
    cmd->add_option("--set", a.overrides, "dotted-path override, e.g. controller.alpha=1e-11")
        ->take_all();
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--dt", a.dt, "integration step override [s]");
    cmd->add_option("--T", a.t_end, "horizon override [s]");
    cmd->add_option("--seed", a.seed, "certificate random-sample seed");
    cmd->add_option("--jobs", a.jobs, "worker threads for grid/sweep evaluation");
}

RunConfig resolve(const CommonArgs& a) {
    std::vector<std::string> ov = a.overrides;
    if (a.dt > 0) ov.push_back("scenario.dt=" + std::to_string(a.dt));
    if (a.t_end > 0) ov.push_back("scenario.t_end=" + std::to_string(a.t_end));
    if (a.seed != 0) ov.push_back("certificate.seed=" + std::to_string(a.seed));
    std::optional<std::string> path;
    if (!a.config_path.empty()) path = a.config_path;
    return load_config(path, a.preset, ov);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    out << text;
}

fs::path prepare_out(const RunConfig& rc, const std::string& dir) {
    fs::path out(dir);
    fs::create_directories(out);
    write_text(out / "resolved_config.json", rc.resolved.dump(2) + "\n");
    TimescaleReport ts = check_timescales(rc.params);
    if (!ts.satisfied) {
        std::cerr << "note: time-scale separation is weak (min(tau_p, tau_d)/tau = "
                  << ts.separation_ratio << ", slowest electrical constant "
                  << ts.tau_fast_electrical << " s)\n";
    }
    return out;
}

int cmd_simulate(const CommonArgs& a, bool reduced) {
    RunConfig rc = resolve(a);
    fs::path out = prepare_out(rc, a.out_dir);
    SimModel model = rc.make_model();
    // a shortened horizon drops the events it no longer reaches
    size_t dropped = 0;
    std::vector<ScenarioEvent> kept;
    for (const auto& ev : rc.scenario.events) {
        if (ev.time <= rc.sim.t_end) kept.push_back(ev);
        else ++dropped;
    }
    if (dropped > 0) {
        std::cerr << "note: " << dropped << " scheduled event(s) beyond T="
                  << rc.sim.t_end << " s are dropped\n";
        rc.scenario.events = std::move(kept);
    }
    Trajectory tr;
    if (reduced) {
        SimOptions sopt = rc.sim;
        if (a.dt <= 0 && sopt.dt < 1e-2) sopt.dt = 0.1;  // slow-step default
        sopt.sample_every = 1;
        tr = simulate_reduced(Vec::Zero(rc.topo.n_g), Vec::Zero(rc.topo.n_g),
                              rc.scenario, model, sopt);
    } else {
        tr = integrate(default_initial_state(model), rc.scenario, model, rc.sim);
    }
    {
        std::ofstream csv(out / "trajectory.csv", std::ios::binary);
        write_trajectory_csv(csv, tr);
    }
    MetricsSummary ms = metrics(tr, rc.params.ctrl);
    write_text(out / "metrics.json", to_json(ms, ReportMeta::of(rc)).dump(2) + "\n");
    std::cout << "simulate: " << tr.size() << " samples, final share_err "
              << ms.final_share_err << ", containment violations "
              << ms.containment_violations << "\n";
    return 0;
}

int cmd_equilibrium(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    fs::path out = prepare_out(rc, a.out_dir);
    SimModel model = rc.make_model();
    EquilibriumReport rep = solve_equilibrium(model, {.tol = rc.newton_tol,
                                                      .max_iter = rc.newton_max_iter});
    write_text(out / "equilibrium.json", to_json(rep, ReportMeta::of(rc)).dump(2) + "\n");
    std::cout << "equilibrium: residual " << rep.residual << ", lambda[0] "
              << rep.state.lambda()(0) << ", consensus spread "
              << rep.consensus_spread << "\n";
    return 0;
}

int cmd_certify(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    fs::path out = prepare_out(rc, a.out_dir);
    SimModel model = rc.make_model();
    CertificateReport rep = certify_monotonicity(model, rc.certificate, a.jobs);
    write_text(out / "certificate.json", to_json(rep, ReportMeta::of(rc)).dump(2) + "\n");
    {
        std::ofstream csv(out / "certificate_grid.csv", std::ios::binary);
        write_certificate_csv(csv, rep);
    }
    std::cout << "certify: " << (rep.pass ? "PASS" : "FAIL") << ", min eig "
              << rep.min_eig_overall << (rep.had_errors ? " (with solver errors)" : "")
              << "\n";
    return rep.pass ? 0 : 3;
}

int cmd_linearize(const CommonArgs& a) {
    RunConfig rc = resolve(a);
    fs::path out = prepare_out(rc, a.out_dir);
    SimModel model = rc.make_model();
    EquilibriumReport eq = solve_equilibrium(model, {.tol = rc.newton_tol,
                                                     .max_iter = rc.newton_max_iter});
    LinearizationReport rep = linearize(eq.state, model);
    write_text(out / "linearization.json", to_json(rep, ReportMeta::of(rc)).dump(2) + "\n");
    {
        std::ofstream csv(out / "spectrum.csv", std::ios::binary);
        write_spectrum_csv(csv, rep);
    }
    std::cout << "linearize: max Re " << rep.max_real << ", near-zero modes "
              << rep.near_zero_count << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& a, const std::vector<std::string>& keys,
              double from, double to, int count) {
    if (keys.empty()) throw ConfigError("sweep needs at least one --param key");
    if (count < 2 || from <= 0 || to <= 0) {
        throw ConfigError("sweep needs --from > 0, --to > 0, --points >= 2 (log spacing)");
    }
    RunConfig rc = resolve(a);
    fs::path out = prepare_out(rc, a.out_dir);
    std::vector<double> values(count);
    const double l0 = std::log(from), l1 = std::log(to);
    for (int i = 0; i < count; ++i) {
        values[i] = std::exp(l0 + (l1 - l0) * i / (count - 1));
    }
    auto make_model = [&](double v) {
        RunConfig point = rc;
        for (const auto& k : keys) point = with_value(point, k, v);
        return point.make_model();
    };
    std::string label = keys.front();
    for (size_t i = 1; i < keys.size(); ++i) label += "," + keys[i];
    SweepReport rep = sweep_eigs(label, values, make_model, a.jobs);
    write_text(out / "sweep.json", to_json(rep, ReportMeta::of(rc)).dump(2) + "\n");
    {
        std::ofstream csv(out / "spectrum.csv", std::ios::binary);
        write_spectrum_csv(csv, rep);
    }
    size_t failures = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& r : rep.records) {
        if (!r.ok) ++failures;
        else worst = std::max(worst, r.max_real);
    }
    std::cout << "sweep " << label << ": " << rep.records.size() << " points, "
              << failures << " failed, max Re " << worst << "\n";
    return failures == rep.records.size() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DC microgrid distributed-control simulation and stability toolkit"};
    app.require_subcommand(1);

    CommonArgs sim_args, red_args, eq_args, cert_args, lin_args, sweep_args;
    auto* sim = app.add_subcommand("simulate", "integrate the closed loop over a scenario");
    add_common(sim, sim_args);
    bool reduced = false;
    sim->add_flag("--reduced", reduced, "quasi-static electrical (reduced-order) mode");

    auto* eq = app.add_subcommand("equilibrium", "solve the closed-loop equilibrium");
    add_common(eq, eq_args);

    auto* cert = app.add_subcommand("certify", "check the monotonicity certificate");
    add_common(cert, cert_args);

    auto* lin = app.add_subcommand("linearize", "small-signal eigenvalue analysis");
    add_common(lin, lin_args);

    auto* sweep = app.add_subcommand("sweep", "eigenvalues over a log-spaced parameter sweep");
    add_common(sweep, sweep_args);
    std::vector<std::string> sweep_keys;
    double sweep_from = 0, sweep_to = 0;
    int sweep_points = 9;
    sweep->add_option("--param", sweep_keys, "dotted config key (repeatable, set jointly)")
        ->take_all();
    sweep->add_option("--from", sweep_from, "first value (log spacing)");
    sweep->add_option("--to", sweep_to, "last value (log spacing)");
    sweep->add_option("--points", sweep_points, "number of sweep points");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_args, reduced);
        if (eq->parsed()) return cmd_equilibrium(eq_args);
        if (cert->parsed()) return cmd_certify(cert_args);
        if (lin->parsed()) return cmd_linearize(lin_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_keys, sweep_from,
                                              sweep_to, sweep_points);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const StructuralError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
