#pragma once

#include "mgrid/core.hpp"

#include <array>
#include <string>
#include <vector>

namespace mgrid {

/// Graph Laplacian of a communication network: L = degree - adjacency.
///
/// The adjacency matrix must be symmetric, nonnegative, with zero diagonal
/// (undirected weighted graph). The resulting graph must be connected,
/// checked through the second-smallest Laplacian eigenvalue.
inline Mat build_laplacian(const Mat& adjacency, double connectivity_tol = 1e-9) {
    const auto n = adjacency.rows();
    if (adjacency.cols() != n) {
        throw StructuralError("cyber adjacency must be square");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (adjacency(i, i) != 0.0) {
            throw StructuralError("cyber adjacency must have zero diagonal");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            if (adjacency(i, j) < 0.0) {
                throw StructuralError("cyber adjacency weights must be nonnegative");
            }
            if (adjacency(i, j) != adjacency(j, i)) {
                throw StructuralError("cyber adjacency must be symmetric (undirected graph)");
            }
        }
    }
    Mat lap = -adjacency;
    for (Eigen::Index i = 0; i < n; ++i) {
        lap(i, i) = adjacency.row(i).sum();
    }
    if (n > 1) {
        Eigen::SelfAdjointEigenSolver<Mat> es(lap, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(1) <= connectivity_tol) {
            throw StructuralError("cyber graph is disconnected (Fiedler value <= tolerance)");
        }
    }
    return lap;
}

/// Second-smallest eigenvalue of a symmetric Laplacian (algebraic connectivity).
inline double fiedler_value(const Mat& laplacian) {
    Eigen::SelfAdjointEigenSolver<Mat> es(laplacian, Eigen::EigenvaluesOnly);
    return laplacian.rows() > 1 ? es.eigenvalues()(1) : 0.0;
}

/// Electrical incidence structure plus the cyber (communication) layer.
///
/// beta_g has one +1 per row (DG i injects into bus gen_bus[i]); beta_e has
/// -1 at the from-bus and +1 at the to-bus of each line, so a positive line
/// current flows from -> to.
struct GridTopology {
    int n_g = 0;  ///< generators
    int n_e = 0;  ///< transmission lines
    int n_k = 0;  ///< load buses

    std::vector<int> gen_bus;               ///< bus index per generator (0-based)
    std::vector<std::array<int, 2>> lines;  ///< {from, to} bus per line (0-based)
    Mat cyber_adjacency;                    ///< n_g x n_g, symmetric, zero diagonal

    Mat beta_g;     ///< n_g x n_k generator incidence
    Mat beta_e;     ///< n_e x n_k line incidence
    Mat laplacian;  ///< n_g x n_g cyber Laplacian
};

/// Validates and assembles a topology from its defining pieces.
inline GridTopology make_topology(int n_k, std::vector<int> gen_bus,
                                  std::vector<std::array<int, 2>> lines,
                                  Mat cyber_adjacency,
                                  double connectivity_tol = 1e-9) {
    GridTopology t;
    t.n_g = static_cast<int>(gen_bus.size());
    t.n_e = static_cast<int>(lines.size());
    t.n_k = n_k;
    if (n_k <= 0 || t.n_g <= 0) {
        throw StructuralError("topology needs at least one bus and one generator");
    }
    for (int i = 0; i < t.n_g; ++i) {
        if (gen_bus[i] < 0 || gen_bus[i] >= n_k) {
            throw StructuralError("gen_bus[" + std::to_string(i) + "] out of range");
        }
    }
    for (int j = 0; j < t.n_e; ++j) {
        const auto [a, b] = lines[j];
        if (a < 0 || a >= n_k || b < 0 || b >= n_k) {
            throw StructuralError("line " + std::to_string(j) + " endpoint out of range");
        }
        if (a == b) {
            throw StructuralError("line " + std::to_string(j) + " is a self-loop");
        }
    }
    if (cyber_adjacency.rows() != t.n_g || cyber_adjacency.cols() != t.n_g) {
        throw StructuralError("cyber adjacency must be n_g x n_g");
    }

    t.gen_bus = std::move(gen_bus);
    t.lines = std::move(lines);
    t.cyber_adjacency = std::move(cyber_adjacency);

    t.beta_g = Mat::Zero(t.n_g, t.n_k);
    for (int i = 0; i < t.n_g; ++i) {
        t.beta_g(i, t.gen_bus[i]) = 1.0;
    }
    t.beta_e = Mat::Zero(t.n_e, t.n_k);
    for (int j = 0; j < t.n_e; ++j) {
        t.beta_e(j, t.lines[j][0]) = -1.0;
        t.beta_e(j, t.lines[j][1]) = 1.0;
    }
    t.laplacian = build_laplacian(t.cyber_adjacency, connectivity_tol);
    return t;
}

/// Ring adjacency over n nodes.
inline Mat ring_adjacency(int n, double weight = 1.0) {
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        a(i, j) = weight;
        a(j, i) = weight;
    }
    return a;
}

/// Default case-study layout: 4 buses with one DG each, a 5-line electrical
/// ring 1-2-3-4-1 with chord 1-3, and a 4-node cyber ring (weight 5).
inline GridTopology default_case_topology() {
    return make_topology(
        4, {0, 1, 2, 3},
        {{{0, 1}}, {{1, 2}}, {{2, 3}}, {{3, 0}}, {{0, 2}}},
        ring_adjacency(4, 5.0));
}

}  // namespace mgrid
