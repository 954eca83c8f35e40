#include "helpers.hpp"

#include <mgrid/compact_form.hpp>
#include <mgrid/equilibrium.hpp>
#include <mgrid/plant.hpp>

#include <catch2/catch.hpp>

using namespace mgrid;

TEST_CASE("homogeneous electrical system rests at the origin") {
    SimModel m = mgtest::table1_model();
    auto e = m.params.elec;
    e.i_cte.setZero();
    Vec di_g, di_e, dv_n;
    plant_rhs(Vec::Zero(4), Vec::Zero(5), Vec::Zero(4), Vec::Zero(4), m.topo, e, di_g,
              di_e, dv_n);
    CHECK(di_g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(di_e.cwiseAbs().maxCoeff() == 0.0);
    CHECK(dv_n.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("plant_rhs matches the per-element equations") {
    SimModel m = mgtest::cs2_model();
    const auto& t = m.topo;
    const auto& e = m.params.elec;
    for (int trial = 0; trial < 50; ++trial) {
        Vec i_g = mgtest::random_vec(4, -20, 20);
        Vec i_e = mgtest::random_vec(5, -15, 15);
        Vec v_n = mgtest::random_vec(4, 40, 55);
        Vec u = mgtest::random_vec(4, 45, 51);
        Vec di_g, di_e, dv_n;
        plant_rhs(i_g, i_e, v_n, u, t, e, di_g, di_e, dv_n);

        // scalar oracle over the incidence entries
        for (int i = 0; i < t.n_g; ++i) {
            double coupling = 0;
            for (int k = 0; k < t.n_k; ++k) coupling += t.beta_g(i, k) * v_n(k);
            const double expect = (u(i) - coupling - e.r_g(i) * i_g(i)) / e.l_g(i);
            CHECK(di_g(i) == Approx(expect).margin(1e-12 * std::max(1.0, std::abs(expect))));
        }
        for (int j = 0; j < t.n_e; ++j) {
            double coupling = 0;
            for (int k = 0; k < t.n_k; ++k) coupling += t.beta_e(j, k) * v_n(k);
            const double expect = (-coupling - e.r_e(j) * i_e(j)) / e.l_e(j);
            CHECK(di_e(j) == Approx(expect).margin(1e-12 * std::max(1.0, std::abs(expect))));
        }
        for (int k = 0; k < t.n_k; ++k) {
            double inj = 0;
            for (int j = 0; j < t.n_e; ++j) inj += t.beta_e(j, k) * i_e(j);
            for (int i = 0; i < t.n_g; ++i) inj += t.beta_g(i, k) * i_g(i);
            const double expect =
                (inj - e.g_cte(k) * v_n(k) - e.i_cte(k)) / e.c_n(k);
            CHECK(dv_n(k) == Approx(expect).margin(1e-12 * std::max(1.0, std::abs(expect))));
        }
    }
}

TEST_CASE("plant derivatives vanish at the equilibrium actuation") {
    SimModel m = mgtest::cs2_model();
    auto eq = solve_equilibrium(m);
    Vec di_g, di_e, dv_n;
    plant_rhs(eq.state.i_g(), eq.state.i_e(), eq.state.v_n(), eq.u, m.topo,
              m.params.elec, di_g, di_e, dv_n);
    CHECK(di_g.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(di_e.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(dv_n.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("full_rhs composes plant and controller dynamics") {
    SimModel m = mgtest::cs2_model();
    const StateLayout l = m.layout();
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = mgtest::random_state(l);
        Vec dx = full_rhs(x, m);

        SystemState s{l, x};
        Vec u(l.n_g);
        for (int i = 0; i < l.n_g; ++i) {
            const double loading = x(l.ig() + i) / m.params.elec.i_rated(i);
            u(i) = actuation(x(l.v() + i), x(l.lam() + i), loading, m.params.ctrl);
        }
        Vec di_g, di_e, dv_n, dv, dl, dz;
        plant_rhs(s.i_g(), s.i_e(), s.v_n(), u, m.topo, m.params.elec, di_g, di_e, dv_n);
        controller_rhs(s.controller_state(), s.i_g(), m.laplacian, m.params.elec,
                       m.params.ctrl, dv, dl, dz);
        auto close_rel = [](const Vec& a, const Vec& b) {
            double worst = 0;
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                worst = std::max(worst,
                                 std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
            }
            return worst;
        };
        CHECK(close_rel(dx.segment(l.ig(), l.n_g), di_g) < 1e-12);
        CHECK(close_rel(dx.segment(l.ie(), l.n_e), di_e) < 1e-12);
        CHECK(close_rel(dx.segment(l.vn(), l.n_k), dv_n) < 1e-12);
        CHECK(close_rel(dx.segment(l.v(), l.n_g), dv) < 1e-12);
        CHECK(close_rel(dx.segment(l.lam(), l.n_g), dl) < 1e-12);
        CHECK(close_rel(dx.segment(l.zeta(), l.n_g), dz) < 1e-12);
    }
}

TEST_CASE("disabled controller holds the set-point and freezes its states") {
    SimModel m = mgtest::cs2_model();
    m.controller_enabled = false;
    const StateLayout l = m.layout();
    Vec x = mgtest::random_state(l);
    Vec dx = full_rhs(x, m);
    CHECK(dx.segment(l.v(), 3 * l.n_g).cwiseAbs().maxCoeff() == 0.0);
    Vec u = actuation_vector(x, m);
    CHECK(u.minCoeff() == Approx(48.0));
    CHECK(u.maxCoeff() == Approx(48.0));

    // the electrical part then sees u = V*
    Vec di_g, di_e, dv_n;
    SystemState s{l, x};
    plant_rhs(s.i_g(), s.i_e(), s.v_n(), Vec::Constant(4, 48.0), m.topo, m.params.elec,
              di_g, di_e, dv_n);
    CHECK((dx.segment(l.ig(), l.n_g) - di_g).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("full_rhs vanishes at the solved equilibrium") {
    SimModel m = mgtest::cs2_model();
    auto eq = solve_equilibrium(m);
    CHECK(full_rhs(eq.state.x, m).norm() < 1e-9);
}

TEST_CASE("bus power balance identity") {
    SimModel m = mgtest::cs2_model();
    const StateLayout l = m.layout();
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = mgtest::random_state(l);
        SystemState s{l, x};
        Vec dx = full_rhs(x, m);
        const Vec v_n = s.v_n();
        double lhs = 0;
        for (int k = 0; k < l.n_k; ++k) {
            lhs += m.params.elec.c_n(k) * dx(l.vn() + k) * v_n(k);
        }
        const double injected = v_n.dot(m.topo.beta_e.transpose() * s.i_e() +
                                        m.topo.beta_g.transpose() * s.i_g());
        const double dissipated =
            v_n.dot(m.params.elec.g_cte.cwiseProduct(v_n)) + v_n.dot(m.params.elec.i_cte);
        CHECK(lhs == Approx(injected - dissipated)
                         .epsilon(1e-9)
                         .margin(1e-9 * std::abs(injected)));
    }
}

TEST_CASE("interconnection matrix is skew") {
    SimModel m = mgtest::cs2_model();
    CompactForm cf = CompactForm::build(m.topo, m.params);
    for (int trial = 0; trial < 20; ++trial) {
        Vec xf = mgtest::random_vec(cf.j_f.rows(), -10, 10);
        CHECK(std::abs(xf.dot(cf.j_f * xf)) < 1e-10 * xf.squaredNorm());
        Vec xs = mgtest::random_vec(cf.j_s.rows(), -10, 10);
        CHECK(std::abs(xs.dot(cf.j_s * xs)) < 1e-10 * xs.squaredNorm());
    }
}

TEST_CASE("electrical subsystem contracts under fixed actuation") {
    SimModel m = mgtest::cs2_model();
    const auto& e = m.params.elec;
    Vec u = Vec::Constant(4, 48.0);
    Vec ig1 = mgtest::random_vec(4, -10, 10), ie1 = mgtest::random_vec(5, -10, 10),
        vn1 = mgtest::random_vec(4, 40, 55);
    Vec ig2 = mgtest::random_vec(4, -10, 10), ie2 = mgtest::random_vec(5, -10, 10),
        vn2 = mgtest::random_vec(4, 40, 55);

    auto energy = [&](const Vec& dig, const Vec& die, const Vec& dvn) {
        return 0.5 * (e.l_g.cwiseProduct(dig).dot(dig) + e.l_e.cwiseProduct(die).dot(die) +
                      e.c_n.cwiseProduct(dvn).dot(dvn));
    };

    const double dt = 1e-4;
    double prev = energy(ig1 - ig2, ie1 - ie2, vn1 - vn2);
    for (int step = 0; step < 2000; ++step) {
        Vec k1g, k1e, k1v, k2g, k2e, k2v;
        plant_rhs(ig1, ie1, vn1, u, m.topo, e, k1g, k1e, k1v);
        plant_rhs(ig2, ie2, vn2, u, m.topo, e, k2g, k2e, k2v);
        ig1 += dt * k1g;
        ie1 += dt * k1e;
        vn1 += dt * k1v;
        ig2 += dt * k2g;
        ie2 += dt * k2e;
        vn2 += dt * k2v;
        if (step % 100 == 99) {
            const double now = energy(ig1 - ig2, ie1 - ie2, vn1 - vn2);
            if (prev > 1e-18) {
                CHECK(now <= prev);
            }
            prev = now;
        }
    }
    CHECK(prev < 1e-4 * energy(ig1, ie1, vn1));  // trajectories have merged
}

TEST_CASE("dimension mismatches are rejected") {
    SimModel m = mgtest::table1_model();
    Vec wrong = Vec::Zero(m.layout().size() - 1);
    CHECK_THROWS_AS(full_rhs(wrong, m), StructuralError);
    Vec di_g, di_e, dv_n;
    CHECK_THROWS_AS(plant_rhs(Vec::Zero(3), Vec::Zero(5), Vec::Zero(4), Vec::Zero(4),
                              m.topo, m.params.elec, di_g, di_e, dv_n),
                    StructuralError);
}
