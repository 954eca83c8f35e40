#include "helpers.hpp"

#include <mgrid/params.hpp>

#include <catch2/catch.hpp>

using namespace mgrid;

TEST_CASE("per-unit conversion on the 0.15 ohm / 300 uH base") {
    auto pu = mgtest::table1_pu();
    ElectricalParams si = to_si(pu);

    // identity on base
    ElectricalParamsPu unit = pu;
    unit.r_g.setOnes();
    CHECK(to_si(unit).r_g(0) == Approx(0.15));

    // DG1 resistance: 0.5 p.u.
    CHECK(si.r_g(0) == Approx(0.075));
    // DG2 inductance: 0.4 p.u. on 300 uH
    CHECK(si.l_g(1) == Approx(120e-6));
    // loads pass through untouched
    CHECK(si.g_cte(0) == Approx(1.0 / 40));
    CHECK(si.c_n(2) == Approx(22e-3));
}

TEST_CASE("per-unit round trip") {
    auto pu = mgtest::table1_pu();
    for (int trial = 0; trial < 20; ++trial) {
        ElectricalParamsPu p = pu;
        p.r_g = mgtest::random_vec(4, 0.01, 10.0);
        p.l_g = mgtest::random_vec(4, 0.01, 10.0);
        p.r_e = mgtest::random_vec(5, 0.01, 10.0);
        p.l_e = mgtest::random_vec(5, 0.01, 10.0);
        ElectricalParamsPu back = to_pu(to_si(p));
        CHECK(((back.r_g - p.r_g).cwiseAbs().array() /
               p.r_g.cwiseAbs().array()).maxCoeff() < 1e-12);
        CHECK(((back.l_e - p.l_e).cwiseAbs().array() /
               p.l_e.cwiseAbs().array()).maxCoeff() < 1e-12);
    }
}

TEST_CASE("nonpositive base rejected") {
    auto pu = mgtest::table1_pu();
    pu.bases.r_base = 0.0;
    CHECK_THROWS_AS(to_si(pu), StructuralError);
}

TEST_CASE("derived controller constants") {
    ControllerParams raw;
    raw.v_n = 48.0;
    raw.mu = 0.05;
    ControllerParams c = derive_controller_constants(raw);
    CHECK(c.v_max == Approx(50.4));
    CHECK(c.v_min == Approx(45.6));
    CHECK(c.v_star == Approx(48.0));
    CHECK(c.delta == Approx(2.4));
    CHECK(c.delta1 + c.delta2 == Approx(c.delta));

    raw.phi_band = 0.5;
    c = derive_controller_constants(raw);
    CHECK(c.k_i_center == Approx(1.0));
    CHECK(c.delta_i == Approx(0.5));

    // band is symmetric about zero
    raw.phi_band = 1.0;
    c = derive_controller_constants(raw);
    CHECK(c.v_pos == Approx(-c.v_neg));
    CHECK(c.v_pos > 0);
}

TEST_CASE("v_tol outside (0, delta) is rejected") {
    ControllerParams raw;
    raw.v_tol = 0.0;  // atanh(1) would diverge
    CHECK_THROWS_AS(derive_controller_constants(raw), StructuralError);
    raw.v_tol = 2.41;  // at or beyond delta
    CHECK_THROWS_AS(derive_controller_constants(raw), StructuralError);
    raw.v_tol = 3.0;
    CHECK_THROWS_AS(derive_controller_constants(raw), StructuralError);
}

TEST_CASE("electrical validation names the violated invariant") {
    GridTopology t = default_case_topology();
    auto p = mgtest::table1_params();
    p.elec.r_g(1) = -0.1;
    try {
        validate_electrical(p.elec, t);
        FAIL("expected StructuralError");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("resistances") != std::string::npos);
    }

    auto p2 = mgtest::table1_params();
    p2.elec.i_rated(0) = 0.0;
    CHECK_THROWS_AS(validate_electrical(p2.elec, t), StructuralError);
}

TEST_CASE("time-scale separation report") {
    auto p = mgtest::table1_params();
    TimescaleReport r = check_timescales(p);
    CHECK(r.tau_fast_electrical == Approx(2e-3));  // L/R equal across branches
    CHECK(r.separation_ratio == Approx(10.0));
    CHECK(r.satisfied);

    p.ctrl.tau_p = 2.0;
    r = check_timescales(p);
    CHECK_FALSE(r.satisfied);
}
