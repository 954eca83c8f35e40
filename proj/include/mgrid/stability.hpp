#pragma once

#include "mgrid/compact_form.hpp"
#include "mgrid/equilibrium.hpp"
#include "mgrid/plant.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace mgrid {

// ---------------------------------------------------------------------------
// Monotonicity certificate for M(lambda) = sigma(lambda) - Lambda h1(lambda)
// ---------------------------------------------------------------------------

/// Mismatch map between the commanded and delivered per-unit currents at the
/// quasi-steady state.
inline Vec compute_M(const Vec& lambda, const SimModel& m,
                     const QuasiSteadyState* warm = nullptr,
                     NewtonOptions opt = {.tol = 1e-12},
                     QuasiSteadyState* qss_out = nullptr) {
    QuasiSteadyState q = solve_h(lambda, m, warm, opt);
    Vec out(m.topo.n_g);
    for (int i = 0; i < m.topo.n_g; ++i) {
        out(i) = sigma(lambda(i), m.params.ctrl) - q.h1(i) / m.params.elec.i_rated(i);
    }
    if (qss_out) *qss_out = q;
    return out;
}

/// Raw central-difference Jacobian of M. The stencil solves are warm-started
/// from the center solution so every evaluation stays on one saturation
/// branch. The default step is large enough to keep the solver-tolerance
/// noise well below the B_v-scale entries of the Jacobian.
inline Mat jacobian_M(const Vec& lambda, const SimModel& m, double step = 1e-5,
                      NewtonOptions opt = {.tol = 1e-12}) {
    const int n = m.topo.n_g;
    QuasiSteadyState center;
    compute_M(lambda, m, nullptr, opt, &center);
    Mat jac(n, n);
    Vec lp = lambda;
    for (int c = 0; c < n; ++c) {
        const double h = step * (1.0 + std::abs(lambda(c)));
        lp(c) = lambda(c) + h;
        const Vec fp = compute_M(lp, m, &center, opt);
        lp(c) = lambda(c) - h;
        const Vec fm = compute_M(lp, m, &center, opt);
        lp(c) = lambda(c);
        jac.col(c) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

/// Symmetric part (J + J') / 2 of the M-Jacobian.
inline Mat jacobian_M_sym(const Vec& lambda, const SimModel& m, double step = 1e-5,
                          NewtonOptions opt = {.tol = 1e-12}) {
    const Mat j = jacobian_M(lambda, m, step, opt);
    return 0.5 * (j + j.transpose());
}

struct CertificateSample {
    Vec lambda;
    double min_eig = std::numeric_limits<double>::quiet_NaN();
    bool diag_dominant = false;  ///< raw Jacobian: positive diagonal, row-dominant
    bool ok = false;
    std::string error;
};

struct CertificateGridSpec {
    int consensus_points = 41;
    double lo = -1.0, hi = 1.0;
    int random_points = 20;
    std::uint64_t seed = 1;
    double margin = 0.0;   ///< pass needs min_eig > margin at every sample
    double fd_step = 1e-5;
};

struct CertificateReport {
    std::vector<CertificateSample> samples;
    bool pass = false;
    bool had_errors = false;
    double min_eig_overall = std::numeric_limits<double>::quiet_NaN();
    CertificateGridSpec grid;
    double alpha = 0;  ///< echoed tuning
    Vec i_rated, g_cte;
};

/// Evaluates the monotonicity certificate over consensus points lambda = s*1
/// and seeded random off-diagonal samples. Samples are independent, so they
/// may be evaluated by several workers; results are merged by index.
inline CertificateReport certify_monotonicity(const SimModel& m,
                                              const CertificateGridSpec& grid = {},
                                              int jobs = 1) {
    if (grid.consensus_points < 1) {
        throw StructuralError("certificate grid must contain at least one point");
    }
    const int n = m.topo.n_g;
    std::vector<Vec> points;
    for (int gi = 0; gi < grid.consensus_points; ++gi) {
        const double s = grid.consensus_points == 1
                             ? grid.lo
                             : grid.lo + (grid.hi - grid.lo) * gi / (grid.consensus_points - 1);
        points.push_back(Vec::Constant(n, s));
    }
    std::mt19937_64 rng(grid.seed);
    std::uniform_real_distribution<double> dist(grid.lo, grid.hi);
    for (int k = 0; k < grid.random_points; ++k) {
        Vec lam(n);
        for (int i = 0; i < n; ++i) lam(i) = dist(rng);
        points.push_back(lam);
    }

    CertificateReport rep;
    rep.grid = grid;
    rep.samples.resize(points.size());
    rep.alpha = m.params.ctrl.alpha;
    rep.i_rated = m.params.elec.i_rated;
    rep.g_cte = m.params.elec.g_cte;

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t idx = next.fetch_add(1); idx < points.size(); idx = next.fetch_add(1)) {
            CertificateSample s;
            s.lambda = points[idx];
            try {
                NewtonOptions opt{.tol = 1e-12};
                const Mat j = jacobian_M(points[idx], m, grid.fd_step, opt);
                const Mat js = 0.5 * (j + j.transpose());
                Eigen::SelfAdjointEigenSolver<Mat> es(js, Eigen::EigenvaluesOnly);
                s.min_eig = es.eigenvalues()(0);
                s.diag_dominant = true;
                for (int i = 0; i < n; ++i) {
                    double off = 0;
                    for (int c = 0; c < n; ++c) {
                        if (c != i) off += std::abs(j(i, c));
                    }
                    if (j(i, i) <= 0 || off >= j(i, i)) s.diag_dominant = false;
                }
                s.ok = true;
            } catch (const std::exception& e) {
                s.error = e.what();
            }
            rep.samples[idx] = std::move(s);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    rep.pass = true;
    for (const auto& s : rep.samples) {
        if (!s.ok) {
            rep.had_errors = true;
            rep.pass = false;
            continue;
        }
        if (!(s.min_eig > grid.margin)) rep.pass = false;
        if (std::isnan(rep.min_eig_overall) || s.min_eig < rep.min_eig_overall) {
            rep.min_eig_overall = s.min_eig;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Lyapunov monitors
// ---------------------------------------------------------------------------

/// Slow-system Lyapunov function W_s = 1/2 x~' Q_s x~ with x~ the (lambda,
/// zeta) deviation from the slow equilibrium.
inline double lyapunov_slow(const Vec& lambda, const Vec& zeta, const Vec& lambda_bar,
                            const Vec& zeta_bar, const ControllerParams& c) {
    const Vec dl = lambda - lambda_bar;
    const Vec dz = zeta - zeta_bar;
    return 0.5 * (c.tau_p * dl.squaredNorm() + c.tau_d * dz.squaredNorm());
}

namespace detail {

template <typename F>
double adaptive_simpson_rec(F&& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace detail

/// Fast-system (boundary-layer) Lyapunov function: a Q_f-weighted quadratic in
/// the electrical error plus, per DG, the integral of the omega1 increment
/// weighted by tau / (k_v Lambda_i). y_tilde stacks (I_g, I_e, V_n, v) errors
/// relative to the quasi-steady state; x_tilde is the slow deviation from the
/// equilibrium (lambda_bar, zeta_bar).
inline double lyapunov_fast(const Vec& y_tilde, const Vec& x_tilde_lambda,
                            const Vec& lambda_bar, const SimModel& m,
                            double quad_tol = 1e-10) {
    const auto& t = m.topo;
    const auto& c = m.params.ctrl;
    const int nf = t.n_g + t.n_e + t.n_k;
    if (y_tilde.size() != nf + t.n_g || x_tilde_lambda.size() != t.n_g ||
        lambda_bar.size() != t.n_g) {
        throw StructuralError("lyapunov_fast: dimension mismatch");
    }
    NewtonOptions opt{.tol = 1e-12};
    const QuasiSteadyState q_bar = solve_h(lambda_bar, m, nullptr, opt);
    const QuasiSteadyState q_now =
        solve_h(Vec(lambda_bar + x_tilde_lambda), m, &q_bar, opt);

    Vec h_f(nf);
    h_f << q_now.h1 - q_bar.h1, q_now.h2 - q_bar.h2, q_now.h3 - q_bar.h3;
    Vec z_f = y_tilde.head(nf) + h_f;
    double value = 0.0;
    for (int i = 0; i < t.n_g; ++i) value += m.params.elec.l_g(i) * z_f(i) * z_f(i);
    for (int j = 0; j < t.n_e; ++j)
        value += m.params.elec.l_e(j) * z_f(t.n_g + j) * z_f(t.n_g + j);
    for (int k = 0; k < t.n_k; ++k)
        value += m.params.elec.c_n(k) * z_f(t.n_g + t.n_e + k) * z_f(t.n_g + t.n_e + k);
    value *= 0.5;

    for (int i = 0; i < t.n_g; ++i) {
        const double y4 = y_tilde(nf + i);
        if (y4 == 0.0) continue;
        const double h_hat = q_now.h4(i);
        const double ref = omega1(q_bar.h4(i), c);
        const double weight = c.tau * m.params.elec.i_rated(i) / c.k_v;
        auto integrand = [&](double eta) { return omega1(eta + h_hat, c) - ref; };
        value += weight * detail::adaptive_simpson(integrand, 0.0, y4, quad_tol);
    }
    return value;
}

// ---------------------------------------------------------------------------
// Small-signal analysis
// ---------------------------------------------------------------------------

struct LinearizationReport {
    SystemState equilibrium{};
    Mat jacobian;
    Eigen::VectorXcd eigenvalues;  ///< sorted by descending real part
    double max_real = 0;
    int near_zero_count = 0;       ///< |Re| < 1e-8
    double eig_residual_max = 0;   ///< max ||A q - mu q|| over ||A||_F
};

/// Central-difference Jacobian of full_rhs at an equilibrium plus a dense
/// nonsymmetric eigendecomposition with a residual sanity check.
inline LinearizationReport linearize(const SystemState& equilibrium, const SimModel& m,
                                     double fd_step = 1e-6,
                                     double near_zero_tol = 1e-8) {
    SimModel model = m;
    model.controller_enabled = true;
    model.refresh();
    RhsWorkspace ws(model.layout());
    Vec buf;
    auto f = [&](const Vec& x) {
        full_rhs(x, model, ws, buf);
        return buf;
    };
    if (f(equilibrium.x).norm() >= 1e-9) {
        throw StructuralError("linearize: state is not an equilibrium (residual >= 1e-9)");
    }
    LinearizationReport rep;
    rep.equilibrium = equilibrium;
    rep.jacobian = fd_jacobian(f, equilibrium.x, fd_step, 0.0);

    Eigen::EigenSolver<Mat> es(rep.jacobian);
    if (es.info() != Eigen::Success) {
        throw SolverError("linearize: eigensolver failed", 0.0);
    }
    const auto n = rep.jacobian.rows();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto ea = es.eigenvalues()(a), eb = es.eigenvalues()(b);
        if (ea.real() != eb.real()) return ea.real() > eb.real();
        return ea.imag() > eb.imag();
    });
    rep.eigenvalues.resize(n);
    const double a_norm = rep.jacobian.norm();
    for (int i = 0; i < n; ++i) {
        const auto mu = es.eigenvalues()(order[i]);
        rep.eigenvalues(i) = mu;
        const Eigen::VectorXcd q = es.eigenvectors().col(order[i]);
        const double resid = (rep.jacobian.cast<std::complex<double>>() * q - mu * q).norm();
        rep.eig_residual_max = std::max(rep.eig_residual_max, resid / a_norm);
        if (std::abs(mu.real()) < near_zero_tol) ++rep.near_zero_count;
    }
    rep.max_real = rep.eigenvalues(0).real();
    if (rep.eig_residual_max > 1e-6) {
        throw SolverError("linearize: eigenpair residual exceeds sanity bound",
                          rep.eig_residual_max);
    }
    return rep;
}

struct SweepRecord {
    double value = 0;
    bool ok = false;
    std::string error;
    Eigen::VectorXcd eigenvalues;
    double max_real = std::numeric_limits<double>::quiet_NaN();
};

struct SweepReport {
    std::string parameter;
    std::vector<SweepRecord> records;
};

/// Re-solves the equilibrium and linearizes for each parameter value.
/// `make_model` maps a parameter value to a ready SimModel. Per-point
/// failures are recorded and the sweep continues.
template <typename ModelFn>
SweepReport sweep_eigs(const std::string& parameter, const std::vector<double>& values,
                       ModelFn&& make_model, int jobs = 1) {
    SweepReport rep;
    rep.parameter = parameter;
    rep.records.resize(values.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t idx = next.fetch_add(1); idx < values.size(); idx = next.fetch_add(1)) {
            SweepRecord rec;
            rec.value = values[idx];
            try {
                SimModel m = make_model(values[idx]);
                auto eq = solve_equilibrium(m);
                auto lin = linearize(eq.state, m);
                rec.eigenvalues = lin.eigenvalues;
                rec.max_real = lin.max_real;
                rec.ok = true;
            } catch (const std::exception& e) {
                rec.error = e.what();
            }
            rep.records[idx] = std::move(rec);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rep;
}

}  // namespace mgrid
