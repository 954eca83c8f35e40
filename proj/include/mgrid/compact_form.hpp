#pragma once

#include "mgrid/core.hpp"
#include "mgrid/params.hpp"
#include "mgrid/topology.hpp"

namespace mgrid {

/// Block matrices of the two-time-scale decomposition: the slow pair
/// (Q_s, P_s, J_s, kappa_1) acts on (lambda, zeta), the fast trio
/// (Q_f, P_f, J_f, kappa_2) on (I_g, I_e, V_n). J_s and J_f are skew;
/// the v-state enters the fast analysis through its own integral term, not
/// through Q_f.
struct CompactForm {
    Mat q_s, p_s, j_s, kappa_1;
    Mat q_f, p_f, j_f, kappa_2;

    static CompactForm build(const GridTopology& t, const SystemParams& p) {
        const int n_g = t.n_g, n_e = t.n_e, n_k = t.n_k;
        CompactForm cf;
        const int ns = 2 * n_g;
        cf.q_s = Mat::Zero(ns, ns);
        cf.q_s.topLeftCorner(n_g, n_g) = p.ctrl.tau_p * Mat::Identity(n_g, n_g);
        cf.q_s.bottomRightCorner(n_g, n_g) = p.ctrl.tau_d * Mat::Identity(n_g, n_g);

        cf.p_s = Mat::Zero(ns, ns);
        cf.p_s.topLeftCorner(n_g, n_g) = p.ctrl.k * t.laplacian;
        cf.p_s.bottomRightCorner(n_g, n_g) = p.ctrl.b_zeta * Mat::Identity(n_g, n_g);

        cf.j_s = Mat::Zero(ns, ns);
        cf.j_s.topRightCorner(n_g, n_g) = -t.laplacian;
        cf.j_s.bottomLeftCorner(n_g, n_g) = t.laplacian;

        cf.kappa_1 = Mat::Zero(ns, ns);
        cf.kappa_1.topLeftCorner(n_g, n_g) = Mat::Identity(n_g, n_g);

        const int nf = n_g + n_e + n_k;
        cf.q_f = Mat::Zero(nf, nf);
        cf.q_f.block(0, 0, n_g, n_g) = p.elec.l_g.asDiagonal();
        cf.q_f.block(n_g, n_g, n_e, n_e) = p.elec.l_e.asDiagonal();
        cf.q_f.block(n_g + n_e, n_g + n_e, n_k, n_k) = p.elec.c_n.asDiagonal();

        cf.p_f = Mat::Zero(nf, nf);
        cf.p_f.block(0, 0, n_g, n_g) = p.elec.r_g.asDiagonal();
        cf.p_f.block(n_g, n_g, n_e, n_e) = p.elec.r_e.asDiagonal();
        cf.p_f.block(n_g + n_e, n_g + n_e, n_k, n_k) = p.elec.g_cte.asDiagonal();

        cf.j_f = Mat::Zero(nf, nf);
        cf.j_f.block(0, n_g + n_e, n_g, n_k) = -t.beta_g;
        cf.j_f.block(n_g, n_g + n_e, n_e, n_k) = -t.beta_e;
        cf.j_f.block(n_g + n_e, 0, n_k, n_g) = t.beta_g.transpose();
        cf.j_f.block(n_g + n_e, n_g, n_k, n_e) = t.beta_e.transpose();

        cf.kappa_2 = Mat::Zero(nf, nf);
        cf.kappa_2.block(0, 0, n_g, n_g) = Mat::Identity(n_g, n_g);
        return cf;
    }

    /// Checks definiteness and skewness. Q_s, Q_f must be positive definite;
    /// P_f requires G_cte > 0. The lambda block of P_s (k L) is only
    /// semidefinite - its null direction is the consensus vector - so P_s is
    /// checked as PSD, plus definite on the consensus complement when
    /// B_zeta > 0.
    void validate() const {
        auto min_eig = [](const Mat& m) {
            Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
            return es.eigenvalues()(0);
        };
        if (min_eig(q_s) <= 0 || min_eig(q_f) <= 0) {
            throw StructuralError("compact form: Q_s / Q_f must be positive definite");
        }
        if (min_eig(p_f) <= 0) {
            throw StructuralError("compact form: P_f must be positive definite (G_cte > 0)");
        }
        if (min_eig(0.5 * (p_s + p_s.transpose())) < -1e-12) {
            throw StructuralError("compact form: P_s must be positive semidefinite");
        }
        const int n_g = p_s.rows() / 2;
        Vec ones = Vec::Ones(n_g);
        Eigen::SelfAdjointEigenSolver<Mat> es(p_s, Eigen::EigenvaluesOnly);
        // zero eigenvalues of P_s beyond the single consensus direction mean
        // B_zeta = 0 or a disconnected cyber layer
        int zero_count = 0;
        for (int i = 0; i < es.eigenvalues().size(); ++i) {
            if (es.eigenvalues()(i) < 1e-12) ++zero_count;
        }
        if (zero_count > 1) {
            throw StructuralError(
                "compact form: P_s singular beyond the consensus direction "
                "(needs B_zeta > 0 and a connected cyber graph)");
        }
        if ((j_s + j_s.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
            (j_f + j_f.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
            throw StructuralError("compact form: J_s / J_f must be skew-symmetric");
        }
    }
};

}  // namespace mgrid
