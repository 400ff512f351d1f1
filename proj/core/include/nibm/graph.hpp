#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <boost/rational.hpp>

#include "nibm/errors.hpp"

namespace nibm {

using Rational = boost::rational<std::int64_t>;

/// Fixed geometry of the problem: starting points a_k (strictly decreasing),
/// ending points b_l (strictly decreasing), observation time t in (0,1) and
/// temperature T > 0.
struct ProblemConfig {
    int p = 0;
    int q = 0;
    std::vector<double> a;
    std::vector<double> b;
    double t = 0.5;
    double T = 1.0;

    void validate() const; // throws InvalidConfig
};

/// p x q matrix of exact rational transition weights, nonnegative and
/// summing to one, every row and column nonzero.
struct TransitionMatrix {
    int p = 0;
    int q = 0;
    std::vector<Rational> entries; // row-major, size p*q

    const Rational& at(int k, int l) const { return entries[static_cast<std::size_t>(k) * q + l]; }
    Rational& at(int k, int l) { return entries[static_cast<std::size_t>(k) * q + l]; }

    void validate() const; // throws InvalidConfig / ZeroRowOrColumn
};

/// One edge of the bipartite tree: connects starting vertex k to ending
/// vertex l, with the transition weight as edge weight. Edges are indexed
/// by the anti-diagonal i = k + l (0-based), i = 0 .. p+q-2.
struct Edge {
    int k = 0;
    int l = 0;
    Rational weight;
};

/// Validated weighted bipartite tree. Vertices are numbered 0..p-1 for the
/// a-side and p..p+q-1 for the b-side. edges[i] is the unique edge on
/// anti-diagonal i, and consecutive edges trace a right-down path from
/// (0,0) to (p-1,q-1).
struct PathTree {
    int p = 0;
    int q = 0;
    std::vector<Edge> edges;

    int vertexCount() const { return p + q; }
    int edgeCount() const { return p + q - 1; }
    int aVertex(int i) const { return edges[i].k; }
    int bVertex(int i) const { return p + edges[i].l; }
    double mass(int i) const { return boost::rational_cast<double>(edges[i].weight); }
};

/// Interaction matrix A (entries 0, 1/2, 1) together with the vertex-edge
/// incidence matrix B it factors through: A = B^T B / 2.
struct InteractionMatrix {
    Eigen::MatrixXd A;         // (p+q-1) x (p+q-1)
    Eigen::MatrixXd incidence; // (p+q) x (p+q-1)
};

/// Per-edge path counts for a finite ensemble size n.
struct FiniteCounts {
    std::int64_t n = 0;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> nkl; // p x q
    std::vector<std::int64_t> nk; // row sums, size p
    std::vector<std::int64_t> ml; // column sums, size q
};

enum class RoundingMode {
    Strict,           // n * t_{k,l} must be an integer
    LargestRemainder, // distribute floor remainders by largest fractional part
};

/// Validates the nonzero pattern of m as a right-down path and returns the
/// edge list ordered by anti-diagonal. Throws NotConnected,
/// AntiDiagonalClash or ZeroRowOrColumn.
PathTree buildTree(const TransitionMatrix& m);

/// Interaction matrix per the shared-vertex rule, plus the incidence
/// factorization (asserted to match exactly).
InteractionMatrix interactionMatrix(const PathTree& g);

/// Vertex elimination order: each entry is a leaf of the tree that remains
/// after removing all earlier entries; the last entry is the surviving
/// root. Ties break toward the smallest vertex index (a-side first).
std::vector<int> leafPeelOrder(const PathTree& g);

FiniteCounts finiteCounts(const TransitionMatrix& m, std::int64_t n,
                          RoundingMode mode = RoundingMode::Strict);

} // namespace nibm
