#pragma once

#include <mgrid/equilibrium.hpp>
#include <mgrid/plant.hpp>

#include <random>

namespace mgtest {

using namespace mgrid;

/// Case-study electrical network in per unit (base network).
inline ElectricalParamsPu table1_pu() {
    ElectricalParamsPu pu;
    pu.r_g = Vec(4);
    pu.r_g << 0.5, 0.4, 0.55, 0.6;
    pu.l_g = pu.r_g;
    pu.r_e = Vec(5);
    pu.r_e << 1, 2, 2, 1, 1;
    pu.l_e = pu.r_e;
    pu.c_n = Vec::Constant(4, 22e-3);
    pu.g_cte = Vec(4);
    pu.g_cte << 1.0 / 40, 1.0 / 30, 1.0 / 30, 1.0 / 30;
    pu.i_cte = Vec(4);
    pu.i_cte << 1, 1.2, 0.8, 1;
    pu.i_rated = Vec(4);
    pu.i_rated << 12, 4, 8, 8;
    return pu;
}

inline SystemParams table1_params() {
    SystemParams p;
    p.elec = to_si(table1_pu());
    p.ctrl = derive_controller_constants(ControllerParams{});
    return p;
}

/// Reinforced variant: rated currents x1.5, load conductances x5.
inline SystemParams cs2_params() {
    auto pu = table1_pu();
    pu.i_rated *= 1.5;
    pu.g_cte *= 5.0;
    SystemParams p;
    p.elec = to_si(pu);
    p.ctrl = derive_controller_constants(ControllerParams{});
    return p;
}

inline SimModel table1_model() {
    return SimModel::make(default_case_topology(), table1_params());
}

inline SimModel cs2_model() {
    return SimModel::make(default_case_topology(), cs2_params());
}

inline std::mt19937_64& rng() {
    static std::mt19937_64 gen(20240811);
    return gen;
}

inline double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng());
}

inline Vec random_vec(Eigen::Index n, double lo, double hi) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
}

/// Random state with physically plausible magnitudes per block.
inline Vec random_state(const StateLayout& l) {
    Vec x(l.size());
    x.segment(l.ig(), l.n_g) = random_vec(l.n_g, -20.0, 20.0);
    x.segment(l.ie(), l.n_e) = random_vec(l.n_e, -15.0, 15.0);
    x.segment(l.vn(), l.n_k) = random_vec(l.n_k, 40.0, 55.0);
    x.segment(l.v(), l.n_g) = random_vec(l.n_g, -5.0, 5.0);
    x.segment(l.lam(), l.n_g) = random_vec(l.n_g, -1.0, 1.0);
    x.segment(l.zeta(), l.n_g) = random_vec(l.n_g, -0.5, 0.5);
    return x;
}

}  // namespace mgtest
