#include "nibm/graph.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>

namespace nibm {

void ProblemConfig::validate() const {
    if (p < 1 || q < 1) throw InvalidConfig("p and q must be >= 1");
    if (static_cast<int>(a.size()) != p) throw InvalidConfig("a must have p entries");
    if (static_cast<int>(b.size()) != q) throw InvalidConfig("b must have q entries");
    for (int k = 0; k + 1 < p; ++k)
        if (!(a[k] > a[k + 1])) throw InvalidConfig("starting points must be strictly decreasing");
    for (int l = 0; l + 1 < q; ++l)
        if (!(b[l] > b[l + 1])) throw InvalidConfig("ending points must be strictly decreasing");
    if (!(t > 0.0 && t < 1.0)) throw InvalidConfig("t must lie in (0,1)");
    if (!(T > 0.0)) throw InvalidConfig("T must be positive");
}

void TransitionMatrix::validate() const {
    if (p < 1 || q < 1 || entries.size() != static_cast<std::size_t>(p) * q)
        throw InvalidConfig("transition matrix has wrong shape");
    Rational sum{0};
    for (const auto& e : entries) {
        if (e < Rational{0}) throw InvalidConfig("transition weights must be nonnegative");
        sum += e;
    }
    if (sum != Rational{1}) throw InvalidConfig("transition weights must sum to 1 exactly");
    for (int k = 0; k < p; ++k) {
        bool nonzero = false;
        for (int l = 0; l < q; ++l) nonzero |= at(k, l) > Rational{0};
        if (!nonzero) throw ZeroRowOrColumn("row " + std::to_string(k + 1) + " is all zero");
    }
    for (int l = 0; l < q; ++l) {
        bool nonzero = false;
        for (int k = 0; k < p; ++k) nonzero |= at(k, l) > Rational{0};
        if (!nonzero) throw ZeroRowOrColumn("column " + std::to_string(l + 1) + " is all zero");
    }
}

PathTree buildTree(const TransitionMatrix& m) {
    m.validate();
    const int nEdges = m.p + m.q - 1;
    std::vector<Edge> edges(static_cast<std::size_t>(nEdges));
    std::vector<bool> seen(static_cast<std::size_t>(nEdges), false);
    int count = 0;
    for (int k = 0; k < m.p; ++k) {
        for (int l = 0; l < m.q; ++l) {
            if (m.at(k, l) == Rational{0}) continue;
            const int i = k + l;
            if (seen[static_cast<std::size_t>(i)])
                throw AntiDiagonalClash("two nonzero entries share anti-diagonal " + std::to_string(i + 1));
            seen[static_cast<std::size_t>(i)] = true;
            edges[static_cast<std::size_t>(i)] = Edge{k, l, m.at(k, l)};
            ++count;
        }
    }
    if (count != nEdges)
        throw NotConnected("nonzero pattern has " + std::to_string(count) + " entries, need " +
                           std::to_string(nEdges));
    // Consecutive edges must differ by a single right or down step.
    if (edges.front().k != 0 || edges.front().l != 0)
        throw NotConnected("path must start at the top-left entry");
    if (edges.back().k != m.p - 1 || edges.back().l != m.q - 1)
        throw NotConnected("path must end at the bottom-right entry");
    for (int i = 0; i + 1 < nEdges; ++i) {
        const auto& e0 = edges[static_cast<std::size_t>(i)];
        const auto& e1 = edges[static_cast<std::size_t>(i + 1)];
        const bool right = e1.k == e0.k && e1.l == e0.l + 1;
        const bool down = e1.k == e0.k + 1 && e1.l == e0.l;
        if (!right && !down)
            throw NotConnected("nonzero pattern is not a right-down path at edge " + std::to_string(i + 1));
    }
    return PathTree{m.p, m.q, std::move(edges)};
}

InteractionMatrix interactionMatrix(const PathTree& g) {
    const int m = g.edgeCount();
    const int v = g.vertexCount();
    InteractionMatrix out;
    out.A = Eigen::MatrixXd::Zero(m, m);
    out.incidence = Eigen::MatrixXd::Zero(v, m);
    for (int i = 0; i < m; ++i) {
        out.incidence(g.aVertex(i), i) = 1.0;
        out.incidence(g.bVertex(i), i) = 1.0;
        for (int j = 0; j < m; ++j) {
            if (i == j) {
                out.A(i, j) = 1.0;
            } else if (g.edges[i].k == g.edges[j].k || g.edges[i].l == g.edges[j].l) {
                out.A(i, j) = 0.5;
            }
        }
    }
    // Entries are exact in binary floating point, so this holds exactly.
    const Eigen::MatrixXd btb = 0.5 * out.incidence.transpose() * out.incidence;
    assert((btb - out.A).cwiseAbs().maxCoeff() == 0.0);
    (void)btb;
    return out;
}

std::vector<int> leafPeelOrder(const PathTree& g) {
    const int v = g.vertexCount();
    std::vector<int> degree(static_cast<std::size_t>(v), 0);
    std::vector<bool> removed(static_cast<std::size_t>(v), false);
    std::vector<bool> edgeGone(static_cast<std::size_t>(g.edgeCount()), false);
    for (int i = 0; i < g.edgeCount(); ++i) {
        ++degree[static_cast<std::size_t>(g.aVertex(i))];
        ++degree[static_cast<std::size_t>(g.bVertex(i))];
    }
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(v));
    for (int step = 0; step + 1 < v; ++step) {
        int leaf = -1;
        for (int u = 0; u < v; ++u) {
            if (!removed[static_cast<std::size_t>(u)] && degree[static_cast<std::size_t>(u)] == 1) {
                leaf = u;
                break;
            }
        }
        assert(leaf >= 0);
        removed[static_cast<std::size_t>(leaf)] = true;
        order.push_back(leaf);
        for (int i = 0; i < g.edgeCount(); ++i) {
            if (edgeGone[static_cast<std::size_t>(i)]) continue;
            if (g.aVertex(i) == leaf || g.bVertex(i) == leaf) {
                edgeGone[static_cast<std::size_t>(i)] = true;
                --degree[static_cast<std::size_t>(g.aVertex(i))];
                --degree[static_cast<std::size_t>(g.bVertex(i))];
            }
        }
    }
    for (int u = 0; u < v; ++u)
        if (!removed[static_cast<std::size_t>(u)]) order.push_back(u);
    return order;
}

FiniteCounts finiteCounts(const TransitionMatrix& m, std::int64_t n, RoundingMode mode) {
    m.validate();
    if (n < 1) throw InvalidConfig("n must be >= 1");
    FiniteCounts out;
    out.n = n;
    out.nkl.setZero(m.p, m.q);
    out.nk.assign(static_cast<std::size_t>(m.p), 0);
    out.ml.assign(static_cast<std::size_t>(m.q), 0);

    if (mode == RoundingMode::Strict) {
        for (int k = 0; k < m.p; ++k) {
            for (int l = 0; l < m.q; ++l) {
                const Rational scaled = m.at(k, l) * Rational{n};
                if (scaled.denominator() != 1)
                    throw NonIntegerCounts("n * t_{" + std::to_string(k + 1) + "," + std::to_string(l + 1) +
                                           "} is not an integer");
                out.nkl(k, l) = scaled.numerator();
            }
        }
    } else {
        // Largest-remainder rounding over the nonzero entries.
        struct Cell { int k, l; Rational frac; };
        std::vector<Cell> cells;
        std::int64_t assigned = 0;
        for (int k = 0; k < m.p; ++k) {
            for (int l = 0; l < m.q; ++l) {
                if (m.at(k, l) == Rational{0}) continue;
                const Rational scaled = m.at(k, l) * Rational{n};
                const std::int64_t fl = scaled.numerator() / scaled.denominator();
                out.nkl(k, l) = fl;
                assigned += fl;
                cells.push_back(Cell{k, l, scaled - Rational{fl}});
            }
        }
        std::stable_sort(cells.begin(), cells.end(),
                         [](const Cell& x, const Cell& y) { return x.frac > y.frac; });
        for (std::int64_t r = n - assigned; r > 0; --r) {
            const auto& c = cells[static_cast<std::size_t>(n - assigned - r)];
            ++out.nkl(c.k, c.l);
        }
    }

    std::int64_t total = 0;
    for (int k = 0; k < m.p; ++k)
        for (int l = 0; l < m.q; ++l) {
            out.nk[static_cast<std::size_t>(k)] += out.nkl(k, l);
            out.ml[static_cast<std::size_t>(l)] += out.nkl(k, l);
            total += out.nkl(k, l);
        }
    assert(total == n);
    (void)total;
    return out;
}

} // namespace nibm
