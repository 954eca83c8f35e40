#pragma once

#include "mgrid/core.hpp"
#include "mgrid/params.hpp"
#include "mgrid/topology.hpp"

#include <cmath>

namespace mgrid {

/// Bounded voltage set-point branch: V* + delta1 * tanh(v / delta1).
/// Total for delta1 = 0 (analytic limit: returns V*).
inline double omega1(double v, const ControllerParams& c) {
    if (c.delta1 <= 0.0) return c.v_star;
    return c.v_star + c.delta1 * std::tanh(v / c.delta1);
}

/// Slope of omega1 with respect to v.
inline double omega1_slope(double v, const ControllerParams& c) {
    if (c.delta1 <= 0.0) return 0.0;
    const double th = std::tanh(v / c.delta1);
    return 1.0 - th * th;
}

/// Inverse of omega1 on its open range; the argument is clamped slightly
/// inside (-1, 1) so saturated targets map to large finite v.
inline double omega1_inverse(double u, const ControllerParams& c, double clamp = 1.0 - 1e-12) {
    if (c.delta1 <= 0.0) return 0.0;
    double a = (u - c.v_star) / c.delta1;
    if (a > clamp) a = clamp;
    if (a < -clamp) a = -clamp;
    return c.delta1 * std::atanh(a);
}

/// Bounded proportional branch: delta2 * tanh(k_p (Lambda_i I_i - lambda_i)).
/// Identically zero when delta2 = 0.
inline double omega2(double lambda, double loading_pu, const ControllerParams& c) {
    if (c.delta2 <= 0.0) return 0.0;
    return c.delta2 * std::tanh(c.k_p * (loading_pu - lambda));
}

/// Bounded per-unit current set-point: K_I + Delta_I * tanh(lambda / Delta_I).
/// Returns the band center when Delta_I = 0 (analytic limit).
inline double sigma(double lambda, const ControllerParams& c) {
    if (c.delta_i <= 0.0) return c.k_i_center;
    return c.k_i_center + c.delta_i * std::tanh(lambda / c.delta_i);
}

/// Smooth anti-windup leakage coefficient, near 0 inside (v_neg, v_pos) and
/// near alpha outside.
inline double rho(double v, const ControllerParams& c) {
    return c.alpha * (1.0 + 0.5 * (std::tanh(c.b * (v - c.v_pos)) -
                                   std::tanh(c.b * (v - c.v_neg))));
}

/// Leakage term rho(v) * v appearing in the v-dynamics.
inline double gamma_leak(double v, const ControllerParams& c) {
    return rho(v, c) * v;
}

/// Actuated generator voltage u_i = omega1(v_i) - omega2(lambda_i, loading_i);
/// bounded in [V_min, V_max] by construction.
inline double actuation(double v, double lambda, double loading_pu, const ControllerParams& c) {
    return omega1(v, c) - omega2(lambda, loading_pu, c);
}

/// Controller state triple (all length n_g).
struct ControllerState {
    Vec v;       ///< decentralized integrator states
    Vec lambda;  ///< communicated set-point states [p.u.]
    Vec zeta;    ///< communicated consensus states [p.u.]

    static ControllerState zero(int n_g) {
        return {Vec::Zero(n_g), Vec::Zero(n_g), Vec::Zero(n_g)};
    }
};

/// Vectorized controller dynamics:
///   tau    dv/dt     = -rho(v).v - B_v v + k_v (sigma(lambda) - Lambda I_g)
///   tau_p  dlambda/dt = Lambda I_g - sigma(lambda) - L zeta - k L lambda
///   tau_d  dzeta/dt   = L lambda - B_zeta zeta
inline void controller_rhs(const ControllerState& cs, const Vec& i_g, const Mat& laplacian,
                           const ElectricalParams& elec, const ControllerParams& c,
                           Vec& dv, Vec& dlambda, Vec& dzeta) {
    const auto n = cs.v.size();
    if (cs.lambda.size() != n || cs.zeta.size() != n || i_g.size() != n ||
        laplacian.rows() != n || laplacian.cols() != n || elec.i_rated.size() != n) {
        throw StructuralError("controller_rhs: dimension mismatch");
    }
    dv.resize(n);
    dlambda.resize(n);
    dzeta.resize(n);
    Vec lz = laplacian * cs.zeta;
    Vec ll = laplacian * cs.lambda;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double loading = i_g(i) / elec.i_rated(i);
        const double sig = sigma(cs.lambda(i), c);
        dv(i) = (-gamma_leak(cs.v(i), c) - c.b_v * cs.v(i) + c.k_v * (sig - loading)) / c.tau;
        dlambda(i) = (loading - sig - lz(i) - c.k * ll(i)) / c.tau_p;
        dzeta(i) = (ll(i) - c.b_zeta * cs.zeta(i)) / c.tau_d;
    }
}

}  // namespace mgrid
