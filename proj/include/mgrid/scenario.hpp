#pragma once

#include "mgrid/equilibrium.hpp"
#include "mgrid/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mgrid {

// ---------------------------------------------------------------------------
// Timed events
// ---------------------------------------------------------------------------

enum class EventKind {
    controller_enable,
    load_icte_scale,
    load_g_scale,
    dg_disconnect,
    dg_reconnect,
    load_disconnect,
    load_reconnect,
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::controller_enable: return "controller_enable";
        case EventKind::load_icte_scale: return "load_icte_scale";
        case EventKind::load_g_scale: return "load_g_scale";
        case EventKind::dg_disconnect: return "dg_disconnect";
        case EventKind::dg_reconnect: return "dg_reconnect";
        case EventKind::load_disconnect: return "load_disconnect";
        case EventKind::load_reconnect: return "load_reconnect";
    }
    return "?";
}

struct ScenarioEvent {
    double time = 0;
    EventKind kind = EventKind::controller_enable;
    int index = -1;      ///< bus or DG index (0-based), unused for controller_enable
    double factor = 1.0; ///< for the load scaling events
};

struct Scenario {
    std::vector<ScenarioEvent> events;

    Scenario sorted() const {
        Scenario s = *this;
        std::stable_sort(s.events.begin(), s.events.end(),
                         [](const ScenarioEvent& a, const ScenarioEvent& b) {
                             return a.time < b.time;
                         });
        return s;
    }
};

/// Mutates state/model per one event. Load scalings multiply the present
/// value; a DG disconnect zeroes its current and freezes its controller
/// states; a load disconnect stashes and zeroes both load components.
inline void apply_event(SystemState& state, SimModel& m, const ScenarioEvent& ev) {
    const StateLayout l = m.layout();
    auto need_dg = [&](int i) {
        if (i < 0 || i >= m.topo.n_g) throw StructuralError("event references invalid DG");
    };
    auto need_bus = [&](int k) {
        if (k < 0 || k >= m.topo.n_k) throw StructuralError("event references invalid bus");
    };
    switch (ev.kind) {
        case EventKind::controller_enable:
            m.controller_enabled = true;
            break;
        case EventKind::load_icte_scale:
            need_bus(ev.index);
            if (m.load_active[ev.index]) {
                m.params.elec.i_cte(ev.index) *= ev.factor;
            } else {
                m.stash_i(ev.index) *= ev.factor;
            }
            break;
        case EventKind::load_g_scale:
            need_bus(ev.index);
            if (m.load_active[ev.index]) {
                m.params.elec.g_cte(ev.index) *= ev.factor;
            } else {
                m.stash_g(ev.index) *= ev.factor;
            }
            break;
        case EventKind::dg_disconnect:
            need_dg(ev.index);
            if (!m.dg_active[ev.index]) {
                throw StructuralError("dg_disconnect: DG already disconnected");
            }
            m.dg_active[ev.index] = 0;
            state.x(l.ig() + ev.index) = 0.0;
            m.refresh();
            break;
        case EventKind::dg_reconnect:
            need_dg(ev.index);
            if (m.dg_active[ev.index]) {
                throw StructuralError("dg_reconnect: DG already connected");
            }
            m.dg_active[ev.index] = 1;
            state.x(l.ig() + ev.index) = 0.0;  // re-enters at zero current
            m.refresh();
            break;
        case EventKind::load_disconnect:
            need_bus(ev.index);
            if (!m.load_active[ev.index]) {
                throw StructuralError("load_disconnect: load already disconnected");
            }
            m.stash_g(ev.index) = m.params.elec.g_cte(ev.index);
            m.stash_i(ev.index) = m.params.elec.i_cte(ev.index);
            m.params.elec.g_cte(ev.index) = 0.0;
            m.params.elec.i_cte(ev.index) = 0.0;
            m.load_active[ev.index] = 0;
            break;
        case EventKind::load_reconnect:
            need_bus(ev.index);
            if (m.load_active[ev.index]) {
                throw StructuralError("load_reconnect: load already connected");
            }
            m.params.elec.g_cte(ev.index) = m.stash_g(ev.index);
            m.params.elec.i_cte(ev.index) = m.stash_i(ev.index);
            m.load_active[ev.index] = 1;
            break;
    }
}

// ---------------------------------------------------------------------------
// Trajectory container
// ---------------------------------------------------------------------------

struct Trajectory {
    StateLayout layout{};
    std::vector<double> t;
    std::vector<Vec> states;        ///< flat states in the fixed ordering
    std::vector<Vec> u;             ///< actuated voltages
    std::vector<Vec> loading;       ///< Lambda I_g [p.u.]
    std::vector<Vec> rho_v;         ///< leakage coefficient per DG
    std::vector<double> share_err;  ///< max pairwise loading gap, active DGs
    std::vector<double> ws;         ///< slow Lyapunov value vs segment equilibrium
    std::vector<unsigned> vsat;     ///< bitmask of |v_i| > v_diag_limit
    std::vector<double> event_times;
    bool reduced = false;

    size_t size() const { return t.size(); }
};

struct SimOptions {
    double dt = 1e-4;        ///< integration step [s]
    double t_end = 450.0;    ///< horizon [s]
    int sample_every = 100;  ///< record every N steps
    double v_diag_limit = 3.0;
};

// ---------------------------------------------------------------------------
// Full-model fixed-step integration
// ---------------------------------------------------------------------------

namespace detail {

struct SegmentEquilibrium {
    Vec lambda_bar, zeta_bar;
    bool valid = false;
};

inline void refresh_segment_equilibrium(const SimModel& m, const SystemState& state,
                                        SegmentEquilibrium& eq) {
    try {
        auto rep = solve_equilibrium(m, {.tol = 1e-9}, &state);
        eq.lambda_bar = rep.state.lambda();
        eq.zeta_bar = rep.state.zeta();
        eq.valid = true;
    } catch (const std::exception&) {
        // keep the previous target; W_s stays relative to it
    }
}

inline void record_sample(Trajectory& tr, double t, const SystemState& state,
                          const SimModel& m, const SegmentEquilibrium& eq,
                          double v_diag_limit) {
    const StateLayout l = m.layout();
    const auto& c = m.params.ctrl;
    tr.t.push_back(t);
    tr.states.push_back(state.x);
    Vec u(l.n_g), load(l.n_g), rv(l.n_g);
    unsigned mask = 0;
    for (int i = 0; i < l.n_g; ++i) {
        const double vi = state.x(l.v() + i);
        load(i) = state.x(l.ig() + i) * m.inv_i_rated(i);
        u(i) = m.controller_enabled
                   ? actuation(vi, state.x(l.lam() + i), load(i), c)
                   : c.v_star;
        rv(i) = rho(vi, c);
        if (std::abs(vi) > v_diag_limit) mask |= 1u << i;
    }
    double se = 0.0;
    for (int i = 0; i < l.n_g; ++i) {
        if (!m.dg_active[i]) continue;
        for (int j = i + 1; j < l.n_g; ++j) {
            if (!m.dg_active[j]) continue;
            se = std::max(se, std::abs(load(i) - load(j)));
        }
    }
    double w = 0.0;
    if (eq.valid) {
        for (int i = 0; i < l.n_g; ++i) {
            if (!m.dg_active[i]) continue;
            const double dl = state.x(l.lam() + i) - eq.lambda_bar(i);
            const double dz = state.x(l.zeta() + i) - eq.zeta_bar(i);
            w += 0.5 * (c.tau_p * dl * dl + c.tau_d * dz * dz);
        }
    }
    tr.u.push_back(std::move(u));
    tr.loading.push_back(std::move(load));
    tr.rho_v.push_back(std::move(rv));
    tr.share_err.push_back(se);
    tr.ws.push_back(w);
    tr.vsat.push_back(mask);
}

}  // namespace detail

/// Classic fixed-step 4th-order integration of the full closed loop with an
/// event schedule. Steps are aligned so every event time is hit exactly (the
/// step before an event is shortened); events mutate state and model, then
/// integration resumes. Samples are taken every sample_every steps plus at
/// t = 0 and t_end.
inline Trajectory integrate(SystemState state, const Scenario& scenario, SimModel m,
                            const SimOptions& opt) {
    const StateLayout l = m.layout();
    if (state.x.size() != l.size()) {
        throw StructuralError("integrate: initial state has wrong dimension");
    }
    if (!(opt.dt > 0)) throw StructuralError("integrate: dt must be positive");
    const double lr_g = (m.params.elec.l_g.array() / m.params.elec.r_g.array()).minCoeff();
    const double lr_e = (m.params.elec.l_e.array() / m.params.elec.r_e.array()).minCoeff();
    const double dt_bound = 0.2 * std::min(lr_g, lr_e);
    if (opt.dt >= dt_bound) {
        throw StructuralError("integrate: dt exceeds the stability bound 0.2 min(L/R) = " +
                              std::to_string(dt_bound));
    }
    Scenario sc = scenario.sorted();
    for (const auto& ev : sc.events) {
        if (ev.time < 0.0 || ev.time > opt.t_end) {
            throw StructuralError("integrate: event outside [0, T]");
        }
    }

    Trajectory tr;
    tr.layout = l;
    for (const auto& ev : sc.events) tr.event_times.push_back(ev.time);

    RhsWorkspace ws(l);
    Vec k1(l.size()), k2(l.size()), k3(l.size()), k4(l.size()), xtmp(l.size());
    detail::SegmentEquilibrium eq;

    double t = 0.0;
    size_t next_event = 0;
    long step_count = 0;

    // events scheduled exactly at t = 0 fire before the first step
    while (next_event < sc.events.size() && sc.events[next_event].time <= 0.0) {
        apply_event(state, m, sc.events[next_event]);
        ++next_event;
    }
    detail::refresh_segment_equilibrium(m, state, eq);
    detail::record_sample(tr, t, state, m, eq, opt.v_diag_limit);

    const double t_eps = 1e-9 * std::max(1.0, opt.t_end);
    while (t < opt.t_end - t_eps) {
        const double t_stop =
            next_event < sc.events.size() ? sc.events[next_event].time : opt.t_end;
        double h = opt.dt;
        bool lands_on_stop = false;
        if (t + h >= t_stop - t_eps) {
            h = t_stop - t;
            lands_on_stop = true;
        }

        full_rhs(state.x, m, ws, k1);
        xtmp = state.x + (0.5 * h) * k1;
        full_rhs(xtmp, m, ws, k2);
        xtmp = state.x + (0.5 * h) * k2;
        full_rhs(xtmp, m, ws, k3);
        xtmp = state.x + h * k3;
        full_rhs(xtmp, m, ws, k4);
        state.x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = lands_on_stop ? t_stop : t + h;
        ++step_count;

        if (!state.x.allFinite()) {
            throw SolverError("integrate: non-finite state at t = " + std::to_string(t),
                              std::numeric_limits<double>::infinity());
        }

        bool model_changed = false;
        while (next_event < sc.events.size() &&
               sc.events[next_event].time <= t + t_eps) {
            apply_event(state, m, sc.events[next_event]);
            ++next_event;
            model_changed = true;
        }
        if (model_changed) {
            detail::refresh_segment_equilibrium(m, state, eq);
        }
        if (step_count % opt.sample_every == 0 || !(t < opt.t_end - t_eps)) {
            detail::record_sample(tr, t, state, m, eq, opt.v_diag_limit);
        }
    }
    return tr;
}

/// Nominal cold-start state: bus voltages at the nominal voltage, everything
/// else zero.
inline SystemState default_initial_state(const SimModel& m) {
    SystemState s = SystemState::zero(m.layout());
    s.v_n().setConstant(m.params.ctrl.v_n);
    return s;
}

// ---------------------------------------------------------------------------
// Reduced-order (quasi-static electrical) simulation
// ---------------------------------------------------------------------------

/// Integrates the slow (lambda, zeta) dynamics on the quasi-steady-state
/// manifold: the electrical states and v are re-solved (warm-started Newton)
/// at every stage evaluation. Fast states in the returned trajectory are the
/// quasi-static ones.
inline Trajectory simulate_reduced(const Vec& lambda0, const Vec& zeta0,
                                   const Scenario& scenario, SimModel m,
                                   const SimOptions& opt) {
    const StateLayout l = m.layout();
    if (lambda0.size() != l.n_g || zeta0.size() != l.n_g) {
        throw StructuralError("simulate_reduced: state dimension mismatch");
    }
    if (!(opt.dt > 0)) throw StructuralError("simulate_reduced: dt must be positive");
    Scenario sc = scenario.sorted();
    for (const auto& ev : sc.events) {
        if (ev.time < 0.0 || ev.time > opt.t_end) {
            throw StructuralError("simulate_reduced: event outside [0, T]");
        }
    }

    Trajectory tr;
    tr.layout = l;
    tr.reduced = true;
    for (const auto& ev : sc.events) tr.event_times.push_back(ev.time);

    NewtonOptions hopt{.tol = 1e-11};
    QuasiSteadyState warm;
    bool have_warm = false;
    auto qss_at = [&](const Vec& lam) {
        QuasiSteadyState q = solve_h(lam, m, have_warm ? &warm : nullptr, hopt);
        warm = q;
        have_warm = true;
        return q;
    };

    Vec lam = lambda0, zeta = zeta0;
    auto slow_rhs = [&](const Vec& lam_s, const Vec& zeta_s, Vec& dl, Vec& dz) {
        const auto& c = m.params.ctrl;
        QuasiSteadyState q = qss_at(lam_s);
        Vec lz = m.laplacian * zeta_s;
        Vec ll = m.laplacian * lam_s;
        dl.resize(l.n_g);
        dz.resize(l.n_g);
        for (int i = 0; i < l.n_g; ++i) {
            if (!m.dg_active[i] || !m.controller_enabled) {
                dl(i) = 0.0;
                dz(i) = 0.0;
                continue;
            }
            const double load = q.h1(i) * m.inv_i_rated(i);
            dl(i) = (load - sigma(lam_s(i), c) - lz(i) - c.k * ll(i)) / c.tau_p;
            dz(i) = (ll(i) - c.b_zeta * zeta_s(i)) / c.tau_d;
        }
    };

    detail::SegmentEquilibrium eq;
    auto refresh_eq = [&]() {
        SystemState frozen = SystemState::zero(l);
        frozen.lambda() = lam;
        frozen.zeta() = zeta;
        detail::refresh_segment_equilibrium(m, frozen, eq);
    };
    auto record = [&](double tnow) {
        QuasiSteadyState q = qss_at(lam);
        SystemState s = SystemState::zero(l);
        s.i_g() = q.h1;
        s.i_e() = q.h2;
        s.v_n() = q.h3;
        s.v() = q.h4;
        s.lambda() = lam;
        s.zeta() = zeta;
        detail::record_sample(tr, tnow, s, m, eq, opt.v_diag_limit);
    };

    double t = 0.0;
    size_t next_event = 0;
    long step_count = 0;
    while (next_event < sc.events.size() && sc.events[next_event].time <= 0.0) {
        SystemState dummy = SystemState::zero(l);
        dummy.lambda() = lam;
        dummy.zeta() = zeta;
        apply_event(dummy, m, sc.events[next_event]);
        ++next_event;
        have_warm = false;
    }
    refresh_eq();
    record(t);

    Vec d1l(l.n_g), d1z(l.n_g), d2l(l.n_g), d2z(l.n_g), d3l(l.n_g), d3z(l.n_g),
        d4l(l.n_g), d4z(l.n_g);
    const double t_eps = 1e-9 * std::max(1.0, opt.t_end);
    while (t < opt.t_end - t_eps) {
        const double t_stop =
            next_event < sc.events.size() ? sc.events[next_event].time : opt.t_end;
        double h = opt.dt;
        bool lands_on_stop = false;
        if (t + h >= t_stop - t_eps) {
            h = t_stop - t;
            lands_on_stop = true;
        }
        slow_rhs(lam, zeta, d1l, d1z);
        slow_rhs(lam + 0.5 * h * d1l, zeta + 0.5 * h * d1z, d2l, d2z);
        slow_rhs(lam + 0.5 * h * d2l, zeta + 0.5 * h * d2z, d3l, d3z);
        slow_rhs(lam + h * d3l, zeta + h * d3z, d4l, d4z);
        lam += (h / 6.0) * (d1l + 2.0 * d2l + 2.0 * d3l + d4l);
        zeta += (h / 6.0) * (d1z + 2.0 * d2z + 2.0 * d3z + d4z);
        t = lands_on_stop ? t_stop : t + h;
        ++step_count;
        if (!lam.allFinite() || !zeta.allFinite()) {
            throw SolverError("simulate_reduced: non-finite state at t = " + std::to_string(t),
                              std::numeric_limits<double>::infinity());
        }
        bool model_changed = false;
        while (next_event < sc.events.size() &&
               sc.events[next_event].time <= t + t_eps) {
            SystemState dummy = SystemState::zero(l);
            dummy.lambda() = lam;
            dummy.zeta() = zeta;
            apply_event(dummy, m, sc.events[next_event]);
            lam = dummy.lambda();
            zeta = dummy.zeta();
            ++next_event;
            model_changed = true;
            have_warm = false;
        }
        if (model_changed) refresh_eq();
        if (step_count % opt.sample_every == 0 || !(t < opt.t_end - t_eps)) {
            record(t);
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Objective metrics
// ---------------------------------------------------------------------------

struct WindowMetrics {
    double t_start = 0, t_end = 0;
    double final_share_err = 0;  ///< at the last sample of the window
    double max_share_err = 0;
    double settle_time = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsSummary {
    double final_share_err = 0;
    double u_min = 0, u_max = 0;
    double vn_min = 0, vn_max = 0;
    int containment_violations = 0;  ///< samples with any u outside [V_min, V_max]
    int vsat_samples = 0;            ///< samples with any |v_i| > limit
    double share_tol = 1e-3;
    std::vector<WindowMetrics> windows;
};

/// Sharing-error, containment, and settling summaries over one trajectory.
/// Windows are the intervals between consecutive events (plus the leading and
/// trailing stretches); settle time is the first sample after which the
/// sharing error stays below share_tol until the window ends.
inline MetricsSummary metrics(const Trajectory& tr, const ControllerParams& c,
                              double share_tol = 1e-3, double slack = 1e-9) {
    if (tr.size() == 0) throw StructuralError("metrics: empty trajectory");
    MetricsSummary s;
    s.share_tol = share_tol;
    s.final_share_err = tr.share_err.back();
    s.u_min = std::numeric_limits<double>::infinity();
    s.u_max = -s.u_min;
    s.vn_min = s.u_min;
    s.vn_max = s.u_max;
    const StateLayout l = tr.layout;
    for (size_t k = 0; k < tr.size(); ++k) {
        bool violated = false;
        for (int i = 0; i < l.n_g; ++i) {
            const double ui = tr.u[k](i);
            s.u_min = std::min(s.u_min, ui);
            s.u_max = std::max(s.u_max, ui);
            if (ui < c.v_min - slack || ui > c.v_max + slack) violated = true;
        }
        for (int kk = 0; kk < l.n_k; ++kk) {
            const double vn = tr.states[k](l.vn() + kk);
            s.vn_min = std::min(s.vn_min, vn);
            s.vn_max = std::max(s.vn_max, vn);
        }
        if (violated) ++s.containment_violations;
        if (tr.vsat[k] != 0) ++s.vsat_samples;
    }

    std::vector<double> edges{tr.t.front()};
    for (double te : tr.event_times) {
        if (te > tr.t.front() && te < tr.t.back()) edges.push_back(te);
    }
    edges.push_back(tr.t.back());
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    for (size_t w = 0; w + 1 < edges.size(); ++w) {
        WindowMetrics wm;
        wm.t_start = edges[w];
        wm.t_end = edges[w + 1];
        // the right edge belongs to the next window (samples at an event time
        // reflect the post-event system), except for the trailing window
        const bool last_window = (w + 2 == edges.size());
        const double hi = last_window ? wm.t_end + 1e-9 : wm.t_end - 1e-9;
        size_t first = tr.size(), last = tr.size();
        for (size_t k = 0; k < tr.size(); ++k) {
            if (tr.t[k] >= wm.t_start - 1e-9 && tr.t[k] < hi) {
                if (first == tr.size()) first = k;
                last = k;
            }
        }
        if (first == tr.size()) continue;
        wm.max_share_err = 0;
        for (size_t k = first; k <= last; ++k) {
            wm.max_share_err = std::max(wm.max_share_err, tr.share_err[k]);
        }
        wm.final_share_err = tr.share_err[last];
        for (size_t k = first; k <= last; ++k) {
            bool stays = true;
            for (size_t q = k; q <= last; ++q) {
                if (tr.share_err[q] >= share_tol) {
                    stays = false;
                    break;
                }
            }
            if (stays) {
                wm.settle_time = tr.t[k];
                break;
            }
        }
        s.windows.push_back(wm);
    }
    return s;
}

}  // namespace mgrid
