#pragma once

#include "mgrid/controller.hpp"
#include "mgrid/core.hpp"
#include "mgrid/params.hpp"
#include "mgrid/topology.hpp"

#include <cstdint>
#include <vector>

namespace mgrid {

/// Fixed state ordering (I_g, I_e, V_n, v, lambda, zeta) shared by all state
/// vectors, Jacobians, and CSV columns.
struct StateLayout {
    int n_g = 0, n_e = 0, n_k = 0;

    int size() const { return 4 * n_g + n_e + n_k; }
    int ig() const { return 0; }
    int ie() const { return n_g; }
    int vn() const { return n_g + n_e; }
    int v() const { return n_g + n_e + n_k; }
    int lam() const { return v() + n_g; }
    int zeta() const { return lam() + n_g; }

    static StateLayout of(const GridTopology& t) { return {t.n_g, t.n_e, t.n_k}; }
};

/// Full system state as one flat vector in the fixed ordering.
struct SystemState {
    StateLayout layout;
    Vec x;

    static SystemState zero(const StateLayout& l) { return {l, Vec::Zero(l.size())}; }

    auto i_g() { return x.segment(layout.ig(), layout.n_g); }
    auto i_e() { return x.segment(layout.ie(), layout.n_e); }
    auto v_n() { return x.segment(layout.vn(), layout.n_k); }
    auto v() { return x.segment(layout.v(), layout.n_g); }
    auto lambda() { return x.segment(layout.lam(), layout.n_g); }
    auto zeta() { return x.segment(layout.zeta(), layout.n_g); }

    auto i_g() const { return x.segment(layout.ig(), layout.n_g); }
    auto i_e() const { return x.segment(layout.ie(), layout.n_e); }
    auto v_n() const { return x.segment(layout.vn(), layout.n_k); }
    auto v() const { return x.segment(layout.v(), layout.n_g); }
    auto lambda() const { return x.segment(layout.lam(), layout.n_g); }
    auto zeta() const { return x.segment(layout.zeta(), layout.n_g); }

    ControllerState controller_state() const { return {v(), lambda(), zeta()}; }
};

/// Electrical network dynamics (generator, line, and bus equations):
///   L_g dI_g/dt = u - beta_g V_n - R_g I_g
///   L_e dI_e/dt = -beta_e V_n - R_e I_e
///   C_n dV_n/dt = beta_e' I_e + beta_g' I_g - G_cte V_n - I_cte
inline void plant_rhs(const Vec& i_g, const Vec& i_e, const Vec& v_n, const Vec& u,
                      const GridTopology& t, const ElectricalParams& p,
                      Vec& di_g, Vec& di_e, Vec& dv_n) {
    if (i_g.size() != t.n_g || i_e.size() != t.n_e || v_n.size() != t.n_k ||
        u.size() != t.n_g) {
        throw StructuralError("plant_rhs: dimension mismatch");
    }
    di_g = (u - t.beta_g * v_n - p.r_g.cwiseProduct(i_g)).cwiseQuotient(p.l_g);
    di_e = (-t.beta_e * v_n - p.r_e.cwiseProduct(i_e)).cwiseQuotient(p.l_e);
    dv_n = (t.beta_e.transpose() * i_e + t.beta_g.transpose() * i_g -
            p.g_cte.cwiseProduct(v_n) - p.i_cte)
               .cwiseQuotient(p.c_n);
}

/// Runtime model: topology + parameters plus the mutable pieces that scenario
/// events touch (load values live in params; connectivity in the masks).
/// refresh() must be called after any change to params or masks.
struct SimModel {
    GridTopology topo;
    SystemParams params;
    std::vector<std::uint8_t> dg_active;
    std::vector<std::uint8_t> load_active;
    bool controller_enabled = true;

    // caches rebuilt by refresh()
    Mat laplacian;  ///< cyber Laplacian over active DGs (inactive rows/cols zero)
    Vec inv_i_rated, inv_l_g, inv_l_e, inv_c_n;
    bool cyber_connected = true;
    bool has_inactive = false;

    // stashed load values while a bus is disconnected
    Vec stash_g, stash_i;

    void refresh() {
        const int n_g = topo.n_g;
        Mat adj = topo.cyber_adjacency;
        for (int i = 0; i < n_g; ++i) {
            if (!dg_active[i]) {
                adj.row(i).setZero();
                adj.col(i).setZero();
            }
        }
        laplacian = -adj;
        for (int i = 0; i < n_g; ++i) {
            laplacian(i, i) = adj.row(i).sum();
        }
        // connectivity over the active subgraph only
        std::vector<int> act;
        for (int i = 0; i < n_g; ++i) {
            if (dg_active[i]) act.push_back(i);
        }
        if (act.size() > 1) {
            Mat sub(act.size(), act.size());
            for (size_t a = 0; a < act.size(); ++a) {
                for (size_t b = 0; b < act.size(); ++b) {
                    sub(a, b) = laplacian(act[a], act[b]);
                }
            }
            cyber_connected = fiedler_value(sub) > 1e-9;
        } else {
            cyber_connected = true;
        }
        inv_i_rated = params.elec.i_rated.cwiseInverse();
        inv_l_g = params.elec.l_g.cwiseInverse();
        inv_l_e = params.elec.l_e.cwiseInverse();
        inv_c_n = params.elec.c_n.cwiseInverse();
        has_inactive = false;
        for (int i = 0; i < n_g; ++i) {
            if (!dg_active[i]) has_inactive = true;
        }
    }

    static SimModel make(GridTopology t, SystemParams p, bool controller_enabled = true) {
        validate_electrical(p.elec, t);
        SimModel m;
        m.topo = std::move(t);
        m.params = std::move(p);
        m.dg_active.assign(m.topo.n_g, 1);
        m.load_active.assign(m.topo.n_k, 1);
        m.controller_enabled = controller_enabled;
        m.stash_g = Vec::Zero(m.topo.n_k);
        m.stash_i = Vec::Zero(m.topo.n_k);
        m.refresh();
        return m;
    }

    StateLayout layout() const { return StateLayout::of(topo); }
};

/// Preallocated intermediates for full_rhs, sized for one model.
struct RhsWorkspace {
    Vec u, sig, tmp_g, tmp_e, tmp_k, lz, ll, ig_act;

    explicit RhsWorkspace(const StateLayout& l)
        : u(l.n_g), sig(l.n_g), tmp_g(l.n_g), tmp_e(l.n_e), tmp_k(l.n_k),
          lz(l.n_g), ll(l.n_g), ig_act(l.n_g) {}
};

/// Assembled closed-loop right-hand side over the flat state vector.
///
/// With the controller disabled, u is held at V* and the controller states
/// are frozen. A disconnected DG keeps I_g = 0 with all of its rows forced
/// to zero; its cyber row/column is already removed from model.laplacian.
inline void full_rhs(const Vec& x, const SimModel& m, RhsWorkspace& ws, Vec& dx) {
    const StateLayout l = m.layout();
    if (x.size() != l.size()) {
        throw StructuralError("full_rhs: state dimension mismatch");
    }
    dx.resize(l.size());
    const auto& e = m.params.elec;
    const auto& c = m.params.ctrl;
    const auto i_g = x.segment(l.ig(), l.n_g);
    const auto i_e = x.segment(l.ie(), l.n_e);
    const auto v_n = x.segment(l.vn(), l.n_k);
    const auto v = x.segment(l.v(), l.n_g);
    const auto lam = x.segment(l.lam(), l.n_g);
    const auto zeta = x.segment(l.zeta(), l.n_g);

    if (m.controller_enabled) {
        for (int i = 0; i < l.n_g; ++i) {
            const double loading = i_g(i) * m.inv_i_rated(i);
            ws.u(i) = omega1(v(i), c) - omega2(lam(i), loading, c);
            ws.sig(i) = sigma(lam(i), c);
        }
    } else {
        ws.u.setConstant(c.v_star);
    }

    // electrical block
    ws.tmp_g.noalias() = m.topo.beta_g * v_n;
    dx.segment(l.ig(), l.n_g) =
        (ws.u - ws.tmp_g - e.r_g.cwiseProduct(i_g)).cwiseProduct(m.inv_l_g);
    ws.tmp_e.noalias() = m.topo.beta_e * v_n;
    dx.segment(l.ie(), l.n_e) =
        (-ws.tmp_e - e.r_e.cwiseProduct(i_e)).cwiseProduct(m.inv_l_e);
    ws.tmp_k.noalias() = m.topo.beta_e.transpose() * i_e;
    if (m.has_inactive) {
        // a disconnected DG injects nothing, whatever its (pinned) current
        ws.ig_act = i_g;
        for (int i = 0; i < l.n_g; ++i) {
            if (!m.dg_active[i]) ws.ig_act(i) = 0.0;
        }
        ws.tmp_k.noalias() += m.topo.beta_g.transpose() * ws.ig_act;
    } else {
        ws.tmp_k.noalias() += m.topo.beta_g.transpose() * i_g;
    }
    dx.segment(l.vn(), l.n_k) =
        (ws.tmp_k - e.g_cte.cwiseProduct(v_n) - e.i_cte).cwiseProduct(m.inv_c_n);

    // controller block
    if (m.controller_enabled) {
        ws.lz.noalias() = m.laplacian * zeta;
        ws.ll.noalias() = m.laplacian * lam;
        for (int i = 0; i < l.n_g; ++i) {
            const double loading = i_g(i) * m.inv_i_rated(i);
            dx(l.v() + i) = (-gamma_leak(v(i), c) - c.b_v * v(i) +
                             c.k_v * (ws.sig(i) - loading)) / c.tau;
            dx(l.lam() + i) = (loading - ws.sig(i) - ws.lz(i) - c.k * ws.ll(i)) / c.tau_p;
            dx(l.zeta() + i) = (ws.ll(i) - c.b_zeta * zeta(i)) / c.tau_d;
        }
    } else {
        dx.segment(l.v(), 3 * l.n_g).setZero();
    }

    // disconnected DGs: frozen states, zero current derivative
    for (int i = 0; i < l.n_g; ++i) {
        if (!m.dg_active[i]) {
            dx(l.ig() + i) = 0.0;
            dx(l.v() + i) = 0.0;
            dx(l.lam() + i) = 0.0;
            dx(l.zeta() + i) = 0.0;
        }
    }
}

/// Allocating convenience overload.
inline Vec full_rhs(const Vec& x, const SimModel& m) {
    RhsWorkspace ws(m.layout());
    Vec dx;
    full_rhs(x, m, ws, dx);
    return dx;
}

/// Actuated voltages u_i at a given state (V* when the controller is off).
inline Vec actuation_vector(const Vec& x, const SimModel& m) {
    const StateLayout l = m.layout();
    Vec u(l.n_g);
    const auto& c = m.params.ctrl;
    if (!m.controller_enabled) {
        u.setConstant(c.v_star);
        return u;
    }
    for (int i = 0; i < l.n_g; ++i) {
        const double loading = x(l.ig() + i) * m.inv_i_rated(i);
        u(i) = actuation(x(l.v() + i), x(l.lam() + i), loading, c);
    }
    return u;
}

}  // namespace mgrid
