#include "helpers.hpp"

#include <mgrid/config.hpp>
#include <mgrid/report_io.hpp>

#include <catch2/catch.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace mgrid;

TEST_CASE("presets carry the case-study values") {
    RunConfig t1 = load_config(std::nullopt, "table1", {});
    CHECK(t1.params.elec.i_rated(0) == Approx(12.0));
    CHECK(t1.params.elec.i_rated(1) == Approx(4.0));
    CHECK(t1.params.elec.i_rated(2) == Approx(8.0));
    CHECK(t1.params.elec.i_rated(3) == Approx(8.0));
    CHECK(t1.params.elec.r_g(0) == Approx(0.075));  // 0.5 p.u. on 0.15 ohm
    CHECK(t1.params.elec.g_cte(0) == Approx(1.0 / 40));

    RunConfig cs2 = load_config(std::nullopt, "cs2", {});
    CHECK(cs2.params.elec.i_rated(0) == Approx(18.0));
    CHECK(cs2.params.elec.i_rated(1) == Approx(6.0));
    CHECK(cs2.params.elec.i_rated(2) == Approx(12.0));
    CHECK(cs2.params.elec.i_rated(3) == Approx(12.0));
    CHECK(cs2.params.elec.g_cte(0) == Approx(5.0 / 40));
    CHECK(cs2.params.elec.g_cte(1) == Approx(5.0 / 30));
    CHECK(cs2.params.ctrl.b_zeta == Approx(1e-3));
    CHECK(cs2.params.ctrl.b_v == Approx(1e-5));

    RunConfig pi = load_config(std::nullopt, "pi", {});
    CHECK(pi.params.ctrl.k_p == Approx(10.0));
    CHECK(pi.params.ctrl.delta1 == Approx(0.7 * 2.4));
    CHECK(pi.params.ctrl.delta2 == Approx(0.3 * 2.4));

    CHECK_THROWS_AS(load_config(std::nullopt, "nope", {}), ConfigError);
}

TEST_CASE("scenario schedule parses from the preset") {
    RunConfig rc = load_config(std::nullopt, "cs2", {});
    REQUIRE(rc.scenario.events.size() == 8);
    CHECK_FALSE(rc.controller_initially_enabled);
    CHECK(rc.scenario.events[0].kind == EventKind::controller_enable);
    CHECK(rc.scenario.events[0].time == 5.0);
    CHECK(rc.scenario.events[1].kind == EventKind::load_icte_scale);
    CHECK(rc.scenario.events[1].index == 0);  // config is 1-based
    CHECK(rc.scenario.events[1].factor == 1.25);
    CHECK(rc.scenario.events[4].kind == EventKind::dg_disconnect);
    CHECK(rc.scenario.events[4].index == 0);
    CHECK(rc.sim.t_end == 450.0);
    CHECK(rc.sim.dt == 1e-4);
}

TEST_CASE("overrides apply through dotted paths") {
    RunConfig rc = load_config(std::nullopt, "cs2",
                               {"controller.alpha=1e-3", "scenario.t_end=100"});
    CHECK(rc.params.ctrl.alpha == Approx(1e-3));
    CHECK(rc.sim.t_end == Approx(100.0));

    CHECK_THROWS_AS(load_config(std::nullopt, "cs2", {"controller.nope=1"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, "cs2", {"controller.alpha=\"x\""}),
                    ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, "cs2", {"controller.alpha"}), ConfigError);
}

TEST_CASE("config files merge strictly") {
    const std::string path = "/tmp/mgrid_test_config.json";
    {
        std::ofstream out(path);
        out << R"({"controller": {"k_v": 0.5}, "scenario": {"t_end": 50.0}})";
    }
    RunConfig rc = load_config(path, "cs2", {});
    CHECK(rc.params.ctrl.k_v == Approx(0.5));
    CHECK(rc.sim.t_end == Approx(50.0));

    {
        std::ofstream out(path);
        out << R"({"controler": {"k_v": 0.5}})";  // typo must be caught
    }
    CHECK_THROWS_AS(load_config(path, "cs2", {}), ConfigError);

    {
        std::ofstream out(path);
        out << R"({"controller": {"k_v": [1, 2]}})";  // wrong type
    }
    CHECK_THROWS_AS(load_config(path, "cs2", {}), ConfigError);

    CHECK_THROWS_AS(load_config(std::string("/tmp/does_not_exist.json"), "", {}),
                    ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("validation failures name the violated invariant") {
    try {
        load_config(std::nullopt, "cs2", {"controller.v_tol=5.0"});
        FAIL("expected StructuralError");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("v_tol") != std::string::npos);
    }
    try {
        load_config(std::nullopt, "cs2", {"electrical.r_g=[-1,0.4,0.55,0.6]"});
        FAIL("expected StructuralError");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("resistances") != std::string::npos);
    }
}

TEST_CASE("config hash is stable and sensitive") {
    RunConfig a = load_config(std::nullopt, "cs2", {});
    RunConfig b = load_config(std::nullopt, "cs2", {});
    RunConfig c = load_config(std::nullopt, "cs2", {"controller.alpha=2e-11"});
    CHECK(a.hash == b.hash);
    CHECK(a.hash != c.hash);
    CHECK(a.hash_hex().size() == 16);
}

TEST_CASE("sweep helper replaces numeric keys") {
    RunConfig rc = load_config(std::nullopt, "cs2", {});
    RunConfig swept = with_value(rc, "controller.tau_p", 100.0);
    CHECK(swept.params.ctrl.tau_p == Approx(100.0));
    CHECK(rc.params.ctrl.tau_p == Approx(10.0));
    CHECK_THROWS_AS(with_value(rc, "controller.missing", 1.0), ConfigError);
    CHECK_THROWS_AS(with_value(rc, "topology.gen_bus", 1.0), ConfigError);
}

TEST_CASE("reports embed the config hash and validate against their schema") {
    RunConfig rc = load_config(std::nullopt, "cs2", {"scenario.t_end=1"});
    SimModel m = rc.make_model();
    ReportMeta meta = ReportMeta::of(rc);

    auto eq = solve_equilibrium(m);
    json jeq = to_json(eq, meta);
    for (const char* key : {"config_hash", "preset", "phi_band", "residual_norm",
                            "newton_iterations", "consensus_spread", "lambda", "zeta",
                            "v", "i_g", "i_e", "v_n", "u", "loading_pu", "saturated"}) {
        INFO(key);
        CHECK(jeq.contains(key));
    }
    CHECK(jeq["config_hash"] == rc.hash_hex());
    CHECK(jeq["lambda"].is_array());
    CHECK(jeq["lambda"].size() == 4);

    CertificateGridSpec grid;
    grid.consensus_points = 3;
    grid.random_points = 2;
    CertificateReport cert = certify_monotonicity(m, grid);
    json jc = to_json(cert, meta);
    for (const char* key :
         {"config_hash", "pass", "had_errors", "min_eig_overall", "margin", "seed",
          "alpha", "samples"}) {
        INFO(key);
        CHECK(jc.contains(key));
    }
    CHECK(jc["samples"].is_array());
    CHECK(jc["samples"].size() == 5);

    auto lin = linearize(eq.state, m);
    json jl = to_json(lin, meta);
    CHECK(jl["eigenvalues"].is_array());
    CHECK(jl["eigenvalues"].size() == m.layout().size());
    CHECK(jl.contains("max_real"));
    CHECK(jl.contains("near_zero_count"));
}

TEST_CASE("trajectory CSV carries the fixed header and is byte-stable") {
    RunConfig rc = load_config(std::nullopt, "cs2", {});
    SimModel m = rc.make_model();
    auto eq = solve_equilibrium(m);
    SimOptions opt;
    opt.dt = 1e-4;
    opt.t_end = 0.05;
    opt.sample_every = 100;
    Trajectory tr = integrate(eq.state, Scenario{}, m, opt);

    std::ostringstream a, b;
    write_trajectory_csv(a, tr);
    write_trajectory_csv(b, tr);
    CHECK(a.str() == b.str());

    std::istringstream lines(a.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "t,Ig1,Ig2,Ig3,Ig4,Ie1,Ie2,Ie3,Ie4,Ie5,Vn1,Vn2,Vn3,Vn4,"
          "v1,v2,v3,v4,lam1,lam2,lam3,lam4,zeta1,zeta2,zeta3,zeta4,"
          "u1,u2,u3,u4,share_err,Ws");
}
