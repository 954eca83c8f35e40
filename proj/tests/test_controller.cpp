#include "helpers.hpp"

#include <mgrid/controller.hpp>
#include <mgrid/equilibrium.hpp>

#include <catch2/catch.hpp>

using namespace mgrid;

namespace {

ControllerParams defaults() { return derive_controller_constants(ControllerParams{}); }

}  // namespace

TEST_CASE("omega1 values and limits") {
    ControllerParams c = defaults();  // delta1 = delta = 2.4
    CHECK(omega1(0.0, c) == Approx(48.0));
    CHECK(omega1(1e9, c) == Approx(50.4));
    CHECK(omega1(-1e9, c) == Approx(45.6));
    CHECK(omega1(2.4, c) == Approx(49.827825974293837).epsilon(1e-14));

    ControllerParams degenerate = c;
    degenerate.delta1 = 0.0;
    CHECK(omega1(7.0, degenerate) == Approx(48.0));  // analytic limit
}

TEST_CASE("omega2 values and limits") {
    ControllerParams c = defaults();
    c.delta1_frac = 0.7;
    c.k_p = 10.0;
    c = derive_controller_constants(c);  // delta2 = 0.72
    CHECK(omega2(0.4, 0.4, c) == Approx(0.0).margin(1e-15));
    CHECK(omega2(-5.0, 100.0, c) == Approx(0.72));

    ControllerParams off = defaults();  // delta2 = 0
    CHECK(omega2(0.3, -2.0, off) == 0.0);
    CHECK(omega2(-1.0, 5.0, off) == 0.0);
}

TEST_CASE("sigma values and limits") {
    ControllerParams c = defaults();
    c.phi_band = 0.5;
    c = derive_controller_constants(c);
    CHECK(sigma(0.0, c) == Approx(1.0));
    CHECK(sigma(-1e9, c) == Approx(0.5));
    CHECK(sigma(1e9, c) == Approx(1.5));
    CHECK(sigma(-0.31, c) == Approx(0.7244359857309266).epsilon(1e-14));

    ControllerParams zero = c;
    zero.delta_i = 0.0;
    CHECK(sigma(3.0, zero) == Approx(1.0));  // analytic limit
}

TEST_CASE("leakage coefficient shape") {
    ControllerParams c = defaults();
    c.alpha = 2.5;
    c = derive_controller_constants(c);
    const double mid = 0.5 * (c.v_pos + c.v_neg);
    CHECK(rho(mid, c) < c.alpha * 1e-3);
    CHECK(rho(1e6, c) == Approx(c.alpha));
    CHECK(rho(-1e6, c) == Approx(c.alpha));
    // symmetric band makes rho even
    for (double v = 0.0; v < 12.0; v += 0.37) {
        CHECK(rho(v, c) == Approx(rho(-v, c)).margin(1e-12 * c.alpha));
    }
}

TEST_CASE("saturating functions are strictly increasing and Lipschitz") {
    ControllerParams c = defaults();
    c.delta1_frac = 0.7;
    c.k_p = 10.0;
    c.phi_band = 0.5;
    c = derive_controller_constants(c);
    const double h = 1e-6;

    for (double v = -8.0; v <= 8.0; v += 0.05) {
        const double slope = (omega1(v + h, c) - omega1(v - h, c)) / (2 * h);
        CHECK(slope > 0.0);
        CHECK(slope <= 1.0 + 1e-6);  // max slope of delta1 tanh(v/delta1)
    }
    for (double lam = -3.0; lam <= 3.0; lam += 0.05) {
        const double slope = (sigma(lam + h, c) - sigma(lam - h, c)) / (2 * h);
        CHECK(slope > 0.0);
        CHECK(slope <= 1.0 + 1e-6);
    }
    // omega2: strictly increasing in the loading where its tanh is active
    // (the slope underflows to zero deep in saturation)
    for (double arg = -1.9; arg <= 1.9; arg += 0.05) {
        const double lam = 0.3 - arg / c.k_p;
        const double s2 = (omega2(lam, 0.3 + h, c) - omega2(lam, 0.3 - h, c)) / (2 * h);
        CHECK(s2 > 0.0);
        CHECK(s2 <= c.delta2 * c.k_p + 1e-6);
    }
}

TEST_CASE("actuation is contained in the voltage band") {
    ControllerParams c = defaults();
    c.delta1_frac = 0.7;
    c.k_p = 10.0;
    c = derive_controller_constants(c);
    for (int trial = 0; trial < 2000; ++trial) {
        const double u = actuation(mgtest::uniform(-50, 50), mgtest::uniform(-5, 5),
                                   mgtest::uniform(-3, 3), c);
        CHECK(u >= c.v_min - 1e-12);
        CHECK(u <= c.v_max + 1e-12);
    }
}

TEST_CASE("controller_rhs matches the element-wise equations") {
    SimModel m = mgtest::cs2_model();
    const auto& c = m.params.ctrl;
    const auto& e = m.params.elec;
    const Mat& lap = m.topo.laplacian;
    for (int trial = 0; trial < 50; ++trial) {
        ControllerState cs{mgtest::random_vec(4, -5, 5), mgtest::random_vec(4, -1, 1),
                           mgtest::random_vec(4, -1, 1)};
        Vec i_g = mgtest::random_vec(4, -20, 20);
        Vec dv, dl, dz;
        controller_rhs(cs, i_g, lap, e, c, dv, dl, dz);

        // independent scalar oracle, written from the per-DG equations with
        // explicit neighbor sums over the adjacency
        for (int i = 0; i < 4; ++i) {
            const double loading = i_g(i) / e.i_rated(i);
            const double sig = c.k_i_center + c.delta_i * std::tanh(cs.lambda(i) / c.delta_i);
            const double rho_i =
                c.alpha * (1 + 0.5 * (std::tanh(c.b * (cs.v(i) - c.v_pos)) -
                                      std::tanh(c.b * (cs.v(i) - c.v_neg))));
            double consensus_zeta = 0, consensus_lam = 0;
            for (int j = 0; j < 4; ++j) {
                const double a_ij = m.topo.cyber_adjacency(i, j);
                consensus_zeta += a_ij * (cs.zeta(i) - cs.zeta(j));
                consensus_lam += c.k * a_ij * (cs.lambda(j) - cs.lambda(i));
            }
            const double dv_i =
                (-rho_i * cs.v(i) - c.b_v * cs.v(i) + c.k_v * (sig - loading)) / c.tau;
            const double dl_i =
                (loading - sig - (consensus_zeta - consensus_lam)) / c.tau_p;
            double zeta_sum = 0;
            for (int j = 0; j < 4; ++j) {
                zeta_sum += m.topo.cyber_adjacency(i, j) * (cs.lambda(i) - cs.lambda(j));
            }
            const double dz_i = (zeta_sum - c.b_zeta * cs.zeta(i)) / c.tau_d;
            CHECK(dv(i) == Approx(dv_i).margin(1e-12));
            CHECK(dl(i) == Approx(dl_i).margin(1e-12));
            CHECK(dz(i) == Approx(dz_i).margin(1e-12));
        }
    }
}

TEST_CASE("consensus term vanishes on the agreement subspace") {
    SimModel m = mgtest::cs2_model();
    ControllerState cs{Vec::Zero(4), Vec::Constant(4, 0.37), mgtest::random_vec(4, -1, 1)};
    Vec i_g = mgtest::random_vec(4, -10, 10);
    Vec dv, dl, dz;
    controller_rhs(cs, i_g, m.topo.laplacian, m.params.elec, m.params.ctrl, dv, dl, dz);
    for (int i = 0; i < 4; ++i) {
        CHECK(dz(i) ==
              Approx(-m.params.ctrl.b_zeta * cs.zeta(i) / m.params.ctrl.tau_d).margin(1e-14));
    }
}

TEST_CASE("lambda translation leaves the Laplacian terms unchanged") {
    SimModel m = mgtest::cs2_model();
    const auto& c = m.params.ctrl;
    ControllerState cs{mgtest::random_vec(4, -3, 3), mgtest::random_vec(4, -1, 1),
                       mgtest::random_vec(4, -1, 1)};
    Vec i_g = mgtest::random_vec(4, -10, 10);
    Vec dv1, dl1, dz1, dv2, dl2, dz2;
    controller_rhs(cs, i_g, m.topo.laplacian, m.params.elec, c, dv1, dl1, dz1);
    ControllerState shifted = cs;
    const double shift = 0.273;
    shifted.lambda.array() += shift;
    controller_rhs(shifted, i_g, m.topo.laplacian, m.params.elec, c, dv2, dl2, dz2);
    for (int i = 0; i < 4; ++i) {
        // only the sigma evaluations may differ; Laplacian contributions cancel
        const double dsig = sigma(shifted.lambda(i), c) - sigma(cs.lambda(i), c);
        CHECK(dl2(i) - dl1(i) == Approx(-dsig / c.tau_p).margin(1e-12));
        CHECK(dz2(i) == Approx(dz1(i)).margin(1e-12));
        CHECK(dv2(i) - dv1(i) == Approx(c.k_v * dsig / c.tau).margin(1e-12));
    }
}

TEST_CASE("nominal reduction without leakage or proportional branch") {
    SimModel m = mgtest::cs2_model();
    auto c = m.params.ctrl;
    c.alpha = 0.0;
    c.b_v = 0.0;
    c.b_zeta = 0.0;
    c = derive_controller_constants(c);
    ControllerState cs{mgtest::random_vec(4, -3, 3), mgtest::random_vec(4, -1, 1),
                       mgtest::random_vec(4, -1, 1)};
    Vec i_g = mgtest::random_vec(4, -10, 10);
    Vec dv, dl, dz;
    controller_rhs(cs, i_g, m.topo.laplacian, m.params.elec, c, dv, dl, dz);
    for (int i = 0; i < 4; ++i) {
        const double loading = i_g(i) / m.params.elec.i_rated(i);
        CHECK(dv(i) ==
              Approx(c.k_v * (sigma(cs.lambda(i), c) - loading) / c.tau).margin(1e-14));
    }
    Vec lz = m.topo.laplacian * cs.zeta;
    Vec ll = m.topo.laplacian * cs.lambda;
    for (int i = 0; i < 4; ++i) {
        CHECK(dz(i) == Approx(ll(i) / c.tau_d).margin(1e-14));
        CHECK(dl(i) == Approx((i_g(i) / m.params.elec.i_rated(i) -
                               sigma(cs.lambda(i), c) - lz(i) - c.k * ll(i)) /
                              c.tau_p)
                           .margin(1e-14));
    }
}

TEST_CASE("controller derivatives vanish at the solved equilibrium") {
    SimModel m = mgtest::cs2_model();
    auto eq = solve_equilibrium(m);
    ControllerState cs = eq.state.controller_state();
    Vec dv, dl, dz;
    controller_rhs(cs, eq.state.i_g(), m.laplacian, m.params.elec, m.params.ctrl, dv, dl,
                   dz);
    CHECK(dv.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(dl.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(dz.cwiseAbs().maxCoeff() < 1e-9);
}
