#pragma once

#include "mgrid/config.hpp"
#include "mgrid/equilibrium.hpp"
#include "mgrid/scenario.hpp"
#include "mgrid/stability.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <string>

namespace mgrid {

inline json to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

/// Common header block carried by every report for reproducibility.
struct ReportMeta {
    std::string config_hash;
    std::string preset;
    double phi_band = 0;  ///< echoed because the sigma band is a tuning choice

    json to_json_block() const {
        return {{"config_hash", config_hash}, {"preset", preset}, {"phi_band", phi_band}};
    }

    static ReportMeta of(const RunConfig& rc) {
        return {rc.hash_hex(), rc.preset, rc.params.ctrl.phi_band};
    }
};

inline json to_json(const EquilibriumReport& rep, const ReportMeta& meta) {
    json j = meta.to_json_block();
    j["residual_norm"] = rep.residual;
    j["newton_iterations"] = rep.iterations;
    j["consensus_spread"] = rep.consensus_spread;
    j["lambda"] = to_json(rep.state.lambda());
    j["zeta"] = to_json(rep.state.zeta());
    j["v"] = to_json(rep.state.v());
    j["i_g"] = to_json(rep.state.i_g());
    j["i_e"] = to_json(rep.state.i_e());
    j["v_n"] = to_json(rep.state.v_n());
    j["u"] = to_json(rep.u);
    j["loading_pu"] = to_json(rep.loading);
    j["saturated"] = rep.saturated;
    return j;
}

inline json to_json(const CertificateReport& rep, const ReportMeta& meta) {
    json j = meta.to_json_block();
    j["pass"] = rep.pass;
    j["had_errors"] = rep.had_errors;
    j["min_eig_overall"] = rep.min_eig_overall;
    j["margin"] = rep.grid.margin;
    j["seed"] = rep.grid.seed;
    j["alpha"] = rep.alpha;
    j["i_rated"] = to_json(rep.i_rated);
    j["g_cte"] = to_json(rep.g_cte);
    json samples = json::array();
    for (const auto& s : rep.samples) {
        json js = {{"lambda", to_json(s.lambda)},
                   {"ok", s.ok},
                   {"diag_dominant", s.diag_dominant}};
        if (s.ok) {
            js["min_eig"] = s.min_eig;
        } else {
            js["error"] = s.error;
        }
        samples.push_back(std::move(js));
    }
    j["samples"] = std::move(samples);
    return j;
}

inline json to_json(const LinearizationReport& rep, const ReportMeta& meta) {
    json j = meta.to_json_block();
    j["state_ordering"] = "i_g, i_e, v_n, v, lambda, zeta";
    j["max_real"] = rep.max_real;
    j["near_zero_count"] = rep.near_zero_count;
    j["eig_residual_max"] = rep.eig_residual_max;
    json eigs = json::array();
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        eigs.push_back({{"re", rep.eigenvalues(i).real()}, {"im", rep.eigenvalues(i).imag()}});
    }
    j["eigenvalues"] = std::move(eigs);
    j["equilibrium_lambda"] = to_json(rep.equilibrium.lambda());
    return j;
}

inline json to_json(const SweepReport& rep, const ReportMeta& meta) {
    json j = meta.to_json_block();
    j["parameter"] = rep.parameter;
    json recs = json::array();
    for (const auto& r : rep.records) {
        json jr = {{"value", r.value}, {"ok", r.ok}};
        if (r.ok) {
            jr["max_real"] = r.max_real;
            json eigs = json::array();
            for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) {
                eigs.push_back(
                    {{"re", r.eigenvalues(i).real()}, {"im", r.eigenvalues(i).imag()}});
            }
            jr["eigenvalues"] = std::move(eigs);
        } else {
            jr["error"] = r.error;
        }
        recs.push_back(std::move(jr));
    }
    j["records"] = std::move(recs);
    return j;
}

inline json to_json(const MetricsSummary& s, const ReportMeta& meta) {
    json j = meta.to_json_block();
    j["final_share_err"] = s.final_share_err;
    j["u_min"] = s.u_min;
    j["u_max"] = s.u_max;
    j["vn_min"] = s.vn_min;
    j["vn_max"] = s.vn_max;
    j["containment_violations"] = s.containment_violations;
    j["vsat_samples"] = s.vsat_samples;
    j["share_tol"] = s.share_tol;
    json windows = json::array();
    for (const auto& w : s.windows) {
        json jw = {{"t_start", w.t_start},
                   {"t_end", w.t_end},
                   {"final_share_err", w.final_share_err},
                   {"max_share_err", w.max_share_err}};
        if (std::isfinite(w.settle_time)) jw["settle_time"] = w.settle_time;
        windows.push_back(std::move(jw));
    }
    j["windows"] = std::move(windows);
    return j;
}

// ---------------------------------------------------------------------------
// CSV writers (fixed formats, byte-stable across runs)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_num(std::ostream& os, double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf;
}

}  // namespace detail

/// Trajectory CSV with the fixed header
/// t,Ig1..,Ie1..,Vn1..,v1..,lam1..,zeta1..,u1..,share_err,Ws
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
    const StateLayout l = tr.layout;
    os << "t";
    for (int i = 1; i <= l.n_g; ++i) os << ",Ig" << i;
    for (int j = 1; j <= l.n_e; ++j) os << ",Ie" << j;
    for (int k = 1; k <= l.n_k; ++k) os << ",Vn" << k;
    for (int i = 1; i <= l.n_g; ++i) os << ",v" << i;
    for (int i = 1; i <= l.n_g; ++i) os << ",lam" << i;
    for (int i = 1; i <= l.n_g; ++i) os << ",zeta" << i;
    for (int i = 1; i <= l.n_g; ++i) os << ",u" << i;
    os << ",share_err,Ws\n";
    for (size_t s = 0; s < tr.size(); ++s) {
        detail::put_num(os, tr.t[s]);
        const Vec& x = tr.states[s];
        for (Eigen::Index c = 0; c < x.size(); ++c) {
            os << ',';
            detail::put_num(os, x(c));
        }
        for (int i = 0; i < l.n_g; ++i) {
            os << ',';
            detail::put_num(os, tr.u[s](i));
        }
        os << ',';
        detail::put_num(os, tr.share_err[s]);
        os << ',';
        detail::put_num(os, tr.ws[s]);
        os << '\n';
    }
}

/// Spectrum CSV: one row per eigenvalue per parameter value.
inline void write_spectrum_csv(std::ostream& os, const SweepReport& rep) {
    os << "param,Re,Im\n";
    for (const auto& r : rep.records) {
        if (!r.ok) continue;
        for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) {
            detail::put_num(os, r.value);
            os << ',';
            detail::put_num(os, r.eigenvalues(i).real());
            os << ',';
            detail::put_num(os, r.eigenvalues(i).imag());
            os << '\n';
        }
    }
}

/// Single-spectrum CSV (param column fixed at zero offset), same layout.
inline void write_spectrum_csv(std::ostream& os, const LinearizationReport& rep,
                               double param_value = 0.0) {
    os << "param,Re,Im\n";
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        detail::put_num(os, param_value);
        os << ',';
        detail::put_num(os, rep.eigenvalues(i).real());
        os << ',';
        detail::put_num(os, rep.eigenvalues(i).imag());
        os << '\n';
    }
}

/// Certificate grid CSV: s-samples with their minimum eigenvalues.
inline void write_certificate_csv(std::ostream& os, const CertificateReport& rep) {
    os << "sample,min_eig,diag_dominant,ok";
    const int n = rep.samples.empty() ? 0 : static_cast<int>(rep.samples[0].lambda.size());
    for (int i = 1; i <= n; ++i) os << ",lam" << i;
    os << '\n';
    for (size_t k = 0; k < rep.samples.size(); ++k) {
        const auto& s = rep.samples[k];
        os << k << ',';
        detail::put_num(os, s.min_eig);
        os << ',' << (s.diag_dominant ? 1 : 0) << ',' << (s.ok ? 1 : 0);
        for (Eigen::Index i = 0; i < s.lambda.size(); ++i) {
            os << ',';
            detail::put_num(os, s.lambda(i));
        }
        os << '\n';
    }
}

}  // namespace mgrid
