#pragma once

#include "mgrid/core.hpp"
#include "mgrid/topology.hpp"

#include <cmath>
#include <string>

namespace mgrid {

struct PerUnitBases {
    double r_base = 0.15;    ///< ohm
    double l_base = 300e-6;  ///< henry
};

/// Electrical inputs with R/L in per unit; loads, caps, and ratings are SI.
struct ElectricalParamsPu {
    Vec r_g, l_g;  ///< p.u. per generator
    Vec r_e, l_e;  ///< p.u. per line
    Vec c_n;       ///< F per bus
    Vec g_cte;     ///< S per bus
    Vec i_cte;     ///< A per bus
    Vec i_rated;   ///< A per generator
    PerUnitBases bases;
};

/// Electrical network constants, all SI.
struct ElectricalParams {
    Vec r_g, l_g;  ///< ohm, henry per generator
    Vec r_e, l_e;  ///< ohm, henry per line
    Vec c_n;       ///< F per bus
    Vec g_cte;     ///< S per bus
    Vec i_cte;     ///< A per bus
    Vec i_rated;   ///< A per generator
    PerUnitBases bases;
};

/// Converts per-unit R/L values to SI on the given bases; SI fields pass through.
inline ElectricalParams to_si(const ElectricalParamsPu& pu) {
    if (pu.bases.r_base <= 0.0 || pu.bases.l_base <= 0.0) {
        throw StructuralError("per-unit bases must be positive");
    }
    ElectricalParams p;
    p.r_g = pu.r_g * pu.bases.r_base;
    p.l_g = pu.l_g * pu.bases.l_base;
    p.r_e = pu.r_e * pu.bases.r_base;
    p.l_e = pu.l_e * pu.bases.l_base;
    p.c_n = pu.c_n;
    p.g_cte = pu.g_cte;
    p.i_cte = pu.i_cte;
    p.i_rated = pu.i_rated;
    p.bases = pu.bases;
    return p;
}

/// Inverse of to_si (round-trip aid).
inline ElectricalParamsPu to_pu(const ElectricalParams& si) {
    if (si.bases.r_base <= 0.0 || si.bases.l_base <= 0.0) {
        throw StructuralError("per-unit bases must be positive");
    }
    ElectricalParamsPu p;
    p.r_g = si.r_g / si.bases.r_base;
    p.l_g = si.l_g / si.bases.l_base;
    p.r_e = si.r_e / si.bases.r_base;
    p.l_e = si.l_e / si.bases.l_base;
    p.c_n = si.c_n;
    p.g_cte = si.g_cte;
    p.i_cte = si.i_cte;
    p.i_rated = si.i_rated;
    p.bases = si.bases;
    return p;
}

inline void validate_electrical(const ElectricalParams& p, const GridTopology& t) {
    auto expect_size = [](const Vec& v, int n, const std::string& name) {
        if (v.size() != n) throw StructuralError(name + " has wrong length");
    };
    expect_size(p.r_g, t.n_g, "r_g");
    expect_size(p.l_g, t.n_g, "l_g");
    expect_size(p.i_rated, t.n_g, "i_rated");
    expect_size(p.r_e, t.n_e, "r_e");
    expect_size(p.l_e, t.n_e, "l_e");
    expect_size(p.c_n, t.n_k, "c_n");
    expect_size(p.g_cte, t.n_k, "g_cte");
    expect_size(p.i_cte, t.n_k, "i_cte");
    if ((p.r_g.array() <= 0).any() || (p.r_e.array() <= 0).any()) {
        throw StructuralError("resistances must be strictly positive");
    }
    if ((p.l_g.array() <= 0).any() || (p.l_e.array() <= 0).any()) {
        throw StructuralError("inductances must be strictly positive");
    }
    if ((p.c_n.array() <= 0).any()) {
        throw StructuralError("bus capacitances must be strictly positive");
    }
    if ((p.g_cte.array() < 0).any()) {
        throw StructuralError("load conductances must be nonnegative");
    }
    if ((p.i_rated.array() <= 0).any()) {
        throw StructuralError("rated currents must be strictly positive");
    }
}

/// Controller gains and limits. Raw fields come from configuration; the
/// remaining values are filled in by derive_controller_constants().
struct ControllerParams {
    // raw
    double v_n = 48.0;        ///< nominal voltage [V]
    double mu = 0.05;         ///< allowed fractional voltage deviation
    double delta1_frac = 1.0; ///< share of delta assigned to the integral branch
    double k_v = 0.3;         ///< integrator gain
    double k_p = 1.0;         ///< proportional gain
    double phi_band = 1.0;    ///< half-width of the p.u. current band in sigma
    double tau = 1.0;         ///< decentralized integrator time constant [s]
    double tau_p = 10.0;      ///< lambda communication time constant [s]
    double tau_d = 10.0;      ///< zeta communication time constant [s]
    double k = 10.0;          ///< consensus gain
    double alpha = 1e-11;     ///< leakage coefficient
    double b = 5.0;           ///< leakage steepness
    double v_tol = 0.03;      ///< saturation tolerance defining the leakage band [V]
    double b_v = 1e-5;        ///< constant leakage on v
    double b_zeta = 1e-3;     ///< constant leakage on zeta

    // derived
    double v_min = 0, v_max = 0, v_star = 0, delta = 0;
    double delta1 = 0, delta2 = 0;
    double k_i_center = 0, delta_i = 0;
    double v_pos = 0, v_neg = 0;
};

/// Fills the derived controller constants from the raw fields.
///
/// v_pos/v_neg mark where the leakage band opens; they require
/// 0 < v_tol < delta so both atanh arguments stay inside (-1, 1).
inline ControllerParams derive_controller_constants(ControllerParams p) {
    if (p.v_n <= 0.0) throw StructuralError("v_n must be positive");
    if (p.mu <= 0.0) throw StructuralError("mu must be positive");
    if (p.delta1_frac < 0.0 || p.delta1_frac > 1.0) {
        throw StructuralError("delta1_frac must lie in [0, 1]");
    }
    if (p.tau <= 0.0 || p.tau_p <= 0.0 || p.tau_d <= 0.0) {
        throw StructuralError("tau, tau_p, tau_d must be positive");
    }
    if (p.k_v <= 0.0) throw StructuralError("k_v must be positive");
    if (p.k_p < 0.0) throw StructuralError("k_p must be nonnegative");
    if (p.k <= 0.0) throw StructuralError("consensus gain k must be positive");
    if (p.alpha < 0.0) throw StructuralError("alpha must be nonnegative");
    if (p.b <= 0.0) throw StructuralError("leakage steepness b must be positive");
    if (p.b_v < 0.0 || p.b_zeta < 0.0) {
        throw StructuralError("b_v and b_zeta must be nonnegative");
    }
    if (p.phi_band < 0.0) throw StructuralError("phi_band must be nonnegative");

    p.v_max = (1.0 + p.mu) * p.v_n;
    p.v_min = (1.0 - p.mu) * p.v_n;
    p.v_star = 0.5 * (p.v_min + p.v_max);
    p.delta = 0.5 * (p.v_max - p.v_min);
    p.delta1 = p.delta1_frac * p.delta;
    p.delta2 = p.delta - p.delta1;
    p.k_i_center = 0.5 * ((1.0 - p.phi_band) + (1.0 + p.phi_band));  // = 1 p.u.
    p.delta_i = p.phi_band;

    if (p.v_tol <= 0.0 || p.v_tol >= p.delta) {
        throw StructuralError("v_tol must lie in (0, delta) for a finite leakage band");
    }
    p.v_pos = p.delta * std::atanh((p.v_max - p.v_tol - p.v_star) / p.delta);
    p.v_neg = p.delta * std::atanh((p.v_min + p.v_tol - p.v_star) / p.delta);
    if (!(p.v_pos > p.v_neg)) {
        throw StructuralError("leakage band is empty (v_pos <= v_neg)");
    }
    return p;
}

/// Full parameter set for one model instance.
struct SystemParams {
    ElectricalParams elec;
    ControllerParams ctrl;
};

/// Time-scale separation report (Assumption 1: tau_p, tau_d >> tau, with tau
/// itself the slowest of the fast dynamics).
struct TimescaleReport {
    double tau_fast_electrical = 0;  ///< max L/R over generators and lines [s]
    double separation_ratio = 0;     ///< min(tau_p, tau_d) / tau
    bool satisfied = false;          ///< ratio >= threshold and tau >= electrical
};

inline TimescaleReport check_timescales(const SystemParams& p, double min_ratio = 5.0) {
    TimescaleReport r;
    const double tg = (p.elec.l_g.array() / p.elec.r_g.array()).maxCoeff();
    const double te = (p.elec.l_e.array() / p.elec.r_e.array()).maxCoeff();
    r.tau_fast_electrical = std::max(tg, te);
    r.separation_ratio = std::min(p.ctrl.tau_p, p.ctrl.tau_d) / p.ctrl.tau;
    r.satisfied = r.separation_ratio >= min_ratio && p.ctrl.tau >= r.tau_fast_electrical;
    return r;
}

}  // namespace mgrid
