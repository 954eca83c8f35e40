#pragma once

#include "mgrid/controller.hpp"
#include "mgrid/core.hpp"
#include "mgrid/params.hpp"
#include "mgrid/plant.hpp"
#include "mgrid/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mgrid {

// ---------------------------------------------------------------------------
// Dense linear algebra plumbing
// ---------------------------------------------------------------------------

/// LU solve with partial pivoting and one step of iterative refinement.
/// Throws SolverError when A is singular to working precision.
inline Vec dense_solve(const Mat& a, const Vec& rhs) {
    if (a.rows() != a.cols() || a.rows() != rhs.size()) {
        throw StructuralError("dense_solve: shape mismatch");
    }
    Eigen::PartialPivLU<Mat> lu(a);
    const double rc = lu.rcond();
    if (!(rc > 1e-15)) {  // also catches NaN from a singular factorization
        throw SolverError("dense_solve: matrix singular to working precision",
                          std::numeric_limits<double>::infinity());
    }
    Vec x = lu.solve(rhs);
    Vec r = rhs - a * x;
    const double scale = std::max(1.0, rhs.norm());
    if (r.norm() > 0.5e-10 * scale) {
        x += lu.solve(r);
        r = rhs - a * x;
    }
    if (!x.allFinite() || r.norm() > 1e-8 * scale) {
        throw SolverError("dense_solve: residual indicates a singular or "
                          "severely ill-conditioned system",
                          r.norm());
    }
    return x;
}

/// Central-difference Jacobian of f at x with per-component step
/// max(abs_step, rel_step * |x_i|).
template <typename F>
Mat fd_jacobian(F&& f, const Vec& x, double abs_step = 1e-6, double rel_step = 1e-6) {
    const Vec f0 = f(x);
    Mat jac(f0.size(), x.size());
    Vec xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = std::max(abs_step, rel_step * std::abs(x(j)));
        xp(j) = x(j) + h;
        const Vec fp = f(xp);
        xp(j) = x(j) - h;
        const Vec fm = f(xp);
        xp(j) = x(j);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

// ---------------------------------------------------------------------------
// Damped Newton
// ---------------------------------------------------------------------------

struct NewtonOptions {
    double tol = 1e-10;      ///< L2 residual target
    int max_iter = 50;
    int max_backtrack = 20;  ///< step halvings per iteration
    double fd_abs = 1e-6;
    double fd_rel = 1e-6;
};

struct NewtonResult {
    Vec x;
    double residual = 0;
    int iterations = 0;
    bool converged = false;
};

/// Newton iteration with finite-difference Jacobians and a backtracking line
/// search that halves the step until the residual norm decreases. Falls back
/// to a rank-revealing QR step when the Jacobian is singular (consensus-type
/// null directions with a consistent right-hand side are then harmless).
template <typename F>
NewtonResult newton_solve(F&& f, Vec x, const NewtonOptions& opt = {}) {
    Vec r = f(x);
    double rn = r.norm();
    NewtonResult out;
    for (int it = 0; it < opt.max_iter; ++it) {
        if (rn <= opt.tol) break;
        const Mat jac = fd_jacobian(f, x, opt.fd_abs, opt.fd_rel);
        Vec dx;
        Eigen::PartialPivLU<Mat> lu(jac);
        if (lu.rcond() > 1e-14) {
            dx = lu.solve(-r);
        } else {
            dx = Eigen::ColPivHouseholderQR<Mat>(jac).solve(-r);
        }
        double s = 1.0;
        bool improved = false;
        for (int bt = 0; bt <= opt.max_backtrack; ++bt) {
            Vec xn = x + s * dx;
            Vec rn_vec = f(xn);
            const double rn_new = rn_vec.norm();
            if (rn_new < rn && rn_vec.allFinite()) {
                x = std::move(xn);
                r = std::move(rn_vec);
                rn = rn_new;
                improved = true;
                break;
            }
            s *= 0.5;
        }
        out.iterations = it + 1;
        if (!improved) break;  // stalled
    }
    out.x = std::move(x);
    out.residual = rn;
    out.converged = rn <= opt.tol;
    return out;
}

// ---------------------------------------------------------------------------
// Electrical network helpers
// ---------------------------------------------------------------------------

/// Steady state of the electrical equations for fixed generator voltages u.
/// Inactive DGs inject nothing and report zero current.
inline void linear_network_solve(const Vec& u, const SimModel& m,
                                 Vec& i_g, Vec& i_e, Vec& v_n) {
    const auto& t = m.topo;
    const auto& e = m.params.elec;
    Mat ybus = t.beta_e.transpose() * e.r_e.cwiseInverse().asDiagonal() * t.beta_e;
    Mat sys = ybus;
    sys += Mat(e.g_cte.asDiagonal());
    Vec rhs = -e.i_cte;
    for (int i = 0; i < t.n_g; ++i) {
        if (!m.dg_active[i]) continue;
        const int kbus = t.gen_bus[i];
        sys(kbus, kbus) += 1.0 / e.r_g(i);
        rhs(kbus) += u(i) / e.r_g(i);
    }
    v_n = dense_solve(sys, rhs);
    i_g = Vec::Zero(t.n_g);
    for (int i = 0; i < t.n_g; ++i) {
        if (m.dg_active[i]) {
            i_g(i) = (u(i) - v_n(t.gen_bus[i])) / e.r_g(i);
        }
    }
    i_e = -e.r_e.cwiseInverse().cwiseProduct(Vec(t.beta_e * v_n));
}

// ---------------------------------------------------------------------------
// Quasi-steady-state map h(x)
// ---------------------------------------------------------------------------

/// Algebraic solution of the fast subsystem for frozen slow states lambda:
/// generator currents h1, line currents h2, bus voltages h3, v-states h4.
struct QuasiSteadyState {
    Vec h1, h2, h3, h4;
    Vec lambda;
    double residual = 0;
    int iterations = 0;

    Vec flat() const {
        Vec z(h1.size() + h2.size() + h3.size() + h4.size());
        z << h1, h2, h3, h4;
        return z;
    }
};

namespace detail {

/// Residual of the quasi-steady-state equations in natural units
/// (volts / volts / amperes / v-dot). Row 4 carries the leakage as
/// rho(h4) h4 plus the constant leakage B_v h4, matching the v-dynamics.
/// Rows of inactive DGs pin the unknowns to zero.
inline Vec qss_residual(const Vec& z, const Vec& lambda, const SimModel& m) {
    const auto& t = m.topo;
    const auto& e = m.params.elec;
    const auto& c = m.params.ctrl;
    const auto h1 = z.segment(0, t.n_g);
    const auto h2 = z.segment(t.n_g, t.n_e);
    const auto h3 = z.segment(t.n_g + t.n_e, t.n_k);
    const auto h4 = z.segment(t.n_g + t.n_e + t.n_k, t.n_g);

    Vec r(z.size());
    const Vec bg_v = t.beta_g * h3;
    for (int i = 0; i < t.n_g; ++i) {
        if (!m.dg_active[i]) {
            r(i) = h1(i);
            continue;
        }
        const double loading = h1(i) / e.i_rated(i);
        r(i) = omega1(h4(i), c) - omega2(lambda(i), loading, c) - bg_v(i) -
               e.r_g(i) * h1(i);
    }
    r.segment(t.n_g, t.n_e) = -t.beta_e * h3 - e.r_e.cwiseProduct(h2);
    r.segment(t.n_g + t.n_e, t.n_k) = t.beta_g.transpose() * h1 +
                                      t.beta_e.transpose() * h2 -
                                      e.g_cte.cwiseProduct(h3) - e.i_cte;
    const int off4 = t.n_g + t.n_e + t.n_k;
    for (int i = 0; i < t.n_g; ++i) {
        if (!m.dg_active[i]) {
            r(off4 + i) = h4(i);
            continue;
        }
        const double loading = h1(i) / e.i_rated(i);
        r(off4 + i) = -gamma_leak(h4(i), c) - c.b_v * h4(i) +
                      c.k_v * (sigma(lambda(i), c) - loading);
    }
    return r;
}

/// Scalar solve of (rho(h) + B_v) h = target for h (the saturated v-branch of
/// row 4). The left side is nondecreasing; bisection is branch-safe.
inline double leak_balance_inverse(double target, const ControllerParams& c) {
    if (target == 0.0) return 0.0;
    auto g = [&](double h) { return (rho(h, c) + c.b_v) * h; };
    const double sign = target > 0.0 ? 1.0 : -1.0;
    const double at = std::abs(target);
    double hi = std::max(1.0, c.v_pos);
    int guard = 0;
    while (std::abs(g(sign * hi)) < at && guard++ < 80) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 90; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (std::abs(g(sign * mid)) < at) lo = mid; else hi = mid;
    }
    return sign * 0.5 * (lo + hi);
}

/// Cold-start guess: currents from the commanded loadings, a network pass
/// with the required voltages clipped into the omega1 range, h4 from
/// inverting omega1 where feasible and from the leakage balance where the
/// required voltage saturates.
inline Vec qss_initial_guess(const Vec& lambda, const SimModel& m) {
    const auto& t = m.topo;
    const auto& e = m.params.elec;
    const auto& c = m.params.ctrl;
    Vec h1(t.n_g);
    for (int i = 0; i < t.n_g; ++i) {
        h1(i) = m.dg_active[i] ? sigma(lambda(i), c) * e.i_rated(i) : 0.0;
    }
    Mat ybus = t.beta_e.transpose() * e.r_e.cwiseInverse().asDiagonal() * t.beta_e;
    Mat sys = ybus;
    sys += Mat(e.g_cte.asDiagonal());
    Vec h3 = dense_solve(sys, Vec(t.beta_g.transpose() * h1 - e.i_cte));

    // required actuations for the commanded currents; clip and redo the
    // network once if any DG cannot deliver them
    Vec u_req(t.n_g);
    bool any_clipped = false;
    for (int i = 0; i < t.n_g; ++i) {
        const double loading = m.dg_active[i] ? h1(i) / e.i_rated(i) : 0.0;
        u_req(i) = h3(t.gen_bus[i]) + e.r_g(i) * h1(i) + omega2(lambda(i), loading, c);
        const double cap = 0.97 * c.delta1;
        if (u_req(i) > c.v_star + cap) { u_req(i) = c.v_star + cap; any_clipped = true; }
        if (u_req(i) < c.v_star - cap) { u_req(i) = c.v_star - cap; any_clipped = true; }
    }
    if (any_clipped) {
        Vec ig_s, ie_s, vn_s;
        linear_network_solve(u_req, m, ig_s, ie_s, vn_s);
        h1 = ig_s;
        h3 = vn_s;
    }
    Vec h2 = -e.r_e.cwiseInverse().cwiseProduct(Vec(t.beta_e * h3));

    Vec h4 = Vec::Zero(t.n_g);
    for (int i = 0; i < t.n_g; ++i) {
        if (!m.dg_active[i]) continue;
        const double loading = h1(i) / e.i_rated(i);
        const double mismatch = sigma(lambda(i), c) - loading;
        const double u_i = h3(t.gen_bus[i]) + e.r_g(i) * h1(i) +
                           omega2(lambda(i), loading, c);
        const double arg = c.delta1 > 0.0 ? (u_i - c.v_star) / c.delta1 : 2.0;
        if (std::abs(arg) < 0.97) {
            h4(i) = omega1_inverse(u_i, c);
        } else {
            h4(i) = leak_balance_inverse(c.k_v * mismatch, c);
        }
    }
    Vec z(2 * t.n_g + t.n_e + t.n_k);
    z << h1, h2, h3, h4;
    return z;
}

}  // namespace detail

/// Damped-Newton solve of the quasi-steady-state equations at a frozen lambda.
/// Warm-startable through `guess` (with a cold retry if the warm start lands
/// on the wrong saturation branch); throws SolverError on non-convergence.
inline QuasiSteadyState solve_h(const Vec& lambda, const SimModel& m,
                                const QuasiSteadyState* guess = nullptr,
                                NewtonOptions opt = {}) {
    const auto& t = m.topo;
    if (lambda.size() != t.n_g) {
        throw StructuralError("solve_h: lambda has wrong length");
    }
    auto f = [&](const Vec& z) { return detail::qss_residual(z, lambda, m); };
    NewtonResult nr;
    if (guess) {
        nr = newton_solve(f, guess->flat(), opt);
    }
    if (!guess || !nr.converged) {
        NewtonResult cold = newton_solve(f, detail::qss_initial_guess(lambda, m), opt);
        if (!guess || cold.converged || cold.residual < nr.residual) {
            nr = std::move(cold);
        }
    }
    if (!nr.converged) {
        throw SolverError("solve_h: Newton did not converge (last residual " +
                              std::to_string(nr.residual) + ")",
                          nr.residual);
    }
    QuasiSteadyState q;
    q.h1 = nr.x.segment(0, t.n_g);
    q.h2 = nr.x.segment(t.n_g, t.n_e);
    q.h3 = nr.x.segment(t.n_g + t.n_e, t.n_k);
    q.h4 = nr.x.segment(t.n_g + t.n_e + t.n_k, t.n_g);
    q.lambda = lambda;
    q.residual = nr.residual;
    q.iterations = nr.iterations;
    return q;
}

// ---------------------------------------------------------------------------
// Full closed-loop equilibrium
// ---------------------------------------------------------------------------

struct EquilibriumReport {
    SystemState state{};            ///< equilibrium state
    double residual = 0;            ///< L2 norm of full_rhs at the state
    int iterations = 0;
    double consensus_spread = 0;    ///< max |lambda_i - lambda_l| over active DGs
    std::vector<bool> saturated;    ///< per DG: v outside (v_neg, v_pos)
    Vec u;                          ///< actuated voltages at equilibrium
    Vec loading;                    ///< Lambda I_g at equilibrium [p.u.]
};

/// Newton solve of full_rhs = 0. The initial guess holds bus voltages at V*,
/// lambda = zeta = v = 0, and currents from a linear network solve. States of
/// disconnected DGs are pinned at their values in `frozen` (zeros if absent).
inline EquilibriumReport solve_equilibrium(const SimModel& model,
                                           NewtonOptions opt = {.tol = 1e-9},
                                           const SystemState* frozen = nullptr) {
    SimModel m = model;
    m.controller_enabled = true;  // equilibrium of the closed loop
    m.refresh();
    const StateLayout l = m.layout();

    SystemState x0 = frozen ? *frozen : SystemState::zero(l);
    Vec u0 = Vec::Constant(l.n_g, m.params.ctrl.v_star);
    Vec ig0, ie0, vn0;
    linear_network_solve(u0, m, ig0, ie0, vn0);
    x0.i_g() = ig0;
    x0.i_e() = ie0;
    x0.v_n() = vn0;
    if (!frozen) {
        x0.v().setZero();
        x0.lambda().setZero();
        x0.zeta().setZero();
    }

    // rows of frozen (inactive-DG) states become x_j - pin_j
    std::vector<int> pinned;
    for (int i = 0; i < l.n_g; ++i) {
        if (!m.dg_active[i]) {
            pinned.push_back(l.ig() + i);
            pinned.push_back(l.v() + i);
            pinned.push_back(l.lam() + i);
            pinned.push_back(l.zeta() + i);
        }
    }
    Vec pin_values = frozen ? frozen->x : Vec(Vec::Zero(l.size()));
    for (int i = 0; i < l.n_g; ++i) {
        if (!m.dg_active[i]) x0.x(l.ig() + i) = pin_values(l.ig() + i);
    }

    // Newton runs on the inertia-weighted residual (volts / amperes / plain
    // controller units); the stiff 1/L scaling of full_rhs would otherwise
    // wreck the line search. The reported residual stays in full_rhs units.
    Vec weights(l.size());
    weights.segment(l.ig(), l.n_g) = m.params.elec.l_g;
    weights.segment(l.ie(), l.n_e) = m.params.elec.l_e;
    weights.segment(l.vn(), l.n_k) = m.params.elec.c_n;
    weights.segment(l.v(), l.n_g).setConstant(m.params.ctrl.tau);
    weights.segment(l.lam(), l.n_g).setConstant(m.params.ctrl.tau_p);
    weights.segment(l.zeta(), l.n_g).setConstant(m.params.ctrl.tau_d);

    RhsWorkspace ws(l);
    Vec dx_buf;
    auto f = [&](const Vec& x) {
        full_rhs(x, m, ws, dx_buf);
        Vec r = dx_buf.cwiseProduct(weights);
        for (int idx : pinned) r(idx) = x(idx) - pin_values(idx);
        return r;
    };
    NewtonOptions nat_opt = opt;
    nat_opt.tol = 1e-13;  // iterate to the rounding floor of the weighted residual
    NewtonResult nr = newton_solve(f, x0.x, nat_opt);

    EquilibriumReport rep;
    rep.state = SystemState{l, nr.x};
    full_rhs(rep.state.x, m, ws, dx_buf);
    for (int idx : pinned) dx_buf(idx) = 0.0;
    rep.residual = dx_buf.norm();
    if (!(rep.residual < opt.tol) || !dx_buf.allFinite()) {
        throw SolverError("solve_equilibrium: Newton did not converge (residual " +
                              std::to_string(rep.residual) + ")",
                          rep.residual);
    }
    rep.iterations = nr.iterations;
    const auto& c = m.params.ctrl;
    rep.u = actuation_vector(rep.state.x, m);
    rep.loading = rep.state.i_g().cwiseProduct(m.inv_i_rated);
    rep.saturated.assign(l.n_g, false);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < l.n_g; ++i) {
        const double vi = rep.state.x(l.v() + i);
        rep.saturated[i] = vi >= c.v_pos || vi <= c.v_neg;
        if (m.dg_active[i]) {
            lo = std::min(lo, rep.state.x(l.lam() + i));
            hi = std::max(hi, rep.state.x(l.lam() + i));
        }
    }
    rep.consensus_spread = hi > lo ? hi - lo : 0.0;
    return rep;
}

}  // namespace mgrid
