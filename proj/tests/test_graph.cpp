#include <doctest.h>

#include <algorithm>
#include <set>

#include <nibm/graph.hpp>

using namespace nibm;

namespace {

TransitionMatrix makeMatrix(int p, int q, std::vector<Rational> entries) {
    TransitionMatrix m;
    m.p = p;
    m.q = q;
    m.entries = std::move(entries);
    return m;
}

const Rational r0{0};

} // namespace

TEST_CASE("star graph gives the Angelesco interaction matrix") {
    // one starting point splitting into three ending points
    const auto m = makeMatrix(1, 3, {{1, 3}, {1, 3}, {1, 3}});
    const PathTree g = buildTree(m);
    REQUIRE(g.edgeCount() == 3);
    const InteractionMatrix im = interactionMatrix(g);

    Eigen::MatrixXd want(3, 3);
    want << 1.0, 0.5, 0.5, //
        0.5, 1.0, 0.5,     //
        0.5, 0.5, 1.0;
    CHECK(im.A == want);
}

TEST_CASE("staircase graph gives the tridiagonal interaction matrix") {
    // p = q = 3, edges (0,0),(0,1),(1,1),(1,2),(2,2)
    const auto m = makeMatrix(3, 3,
                              {{1, 5}, {1, 5}, r0, //
                               r0, {1, 5}, {1, 5}, //
                               r0, r0, {1, 5}});
    const PathTree g = buildTree(m);
    REQUIRE(g.edgeCount() == 5);
    const InteractionMatrix im = interactionMatrix(g);

    Eigen::MatrixXd want(5, 5);
    want << 1.0, 0.5, 0.0, 0.0, 0.0, //
        0.5, 1.0, 0.5, 0.0, 0.0,     //
        0.0, 0.5, 1.0, 0.5, 0.0,     //
        0.0, 0.0, 0.5, 1.0, 0.5,     //
        0.0, 0.0, 0.0, 0.5, 1.0;
    CHECK(im.A == want);
}

TEST_CASE("mixed graph gives the general five-edge interaction matrix") {
    // p = 2, q = 4, edges (0,0),(0,1),(1,1),(1,2),(1,3)
    const auto m = makeMatrix(2, 4,
                              {{1, 5}, {1, 5}, r0, r0, //
                               r0, {1, 5}, {1, 5}, {1, 5}});
    const PathTree g = buildTree(m);
    REQUIRE(g.edgeCount() == 5);
    const InteractionMatrix im = interactionMatrix(g);

    Eigen::MatrixXd want(5, 5);
    want << 1.0, 0.5, 0.0, 0.0, 0.0, //
        0.5, 1.0, 0.5, 0.0, 0.0,     //
        0.0, 0.5, 1.0, 0.5, 0.5,     //
        0.0, 0.0, 0.5, 1.0, 0.5,     //
        0.0, 0.0, 0.5, 0.5, 1.0;
    CHECK(im.A == want);
}

TEST_CASE("buildTree orders edges by anti-diagonal and keeps weights") {
    const auto m = makeMatrix(2, 4,
                              {{4, 30}, {4, 30}, r0, r0, //
                               r0, {4, 30}, {7, 30}, {11, 30}});
    const PathTree g = buildTree(m);
    REQUIRE(g.edges.size() == 5);
    for (int i = 0; i < g.edgeCount(); ++i) {
        CHECK(g.edges[i].k + g.edges[i].l == i);
        CHECK(g.edges[i].weight > r0);
    }
    CHECK(g.edges[0].weight == Rational(4, 30));
    CHECK(g.edges[4].weight == Rational(11, 30));
    CHECK(g.mass(4) == doctest::Approx(11.0 / 30.0).epsilon(1e-15));
    CHECK(g.aVertex(3) == 1);
    CHECK(g.bVertex(3) == 2 + 2);
}

TEST_CASE("diagonal support is not connected") {
    const auto m = makeMatrix(2, 2, {{1, 2}, r0, r0, {1, 2}});
    CHECK_THROWS_AS(buildTree(m), NotConnected);
}

TEST_CASE("full 2x2 support clashes on the middle anti-diagonal") {
    const auto m = makeMatrix(2, 2, {{1, 4}, {1, 4}, {1, 4}, {1, 4}});
    CHECK_THROWS_AS(buildTree(m), AntiDiagonalClash);
}

TEST_CASE("zero rows and columns are rejected") {
    const auto zeroRow = makeMatrix(2, 2, {{1, 2}, {1, 2}, r0, r0});
    CHECK_THROWS_AS(zeroRow.validate(), ZeroRowOrColumn);
    const auto zeroCol = makeMatrix(2, 2, {{1, 2}, r0, {1, 2}, r0});
    CHECK_THROWS_AS(zeroCol.validate(), ZeroRowOrColumn);
}

TEST_CASE("weights must sum to one") {
    const auto m = makeMatrix(1, 2, {{1, 2}, {1, 3}});
    CHECK_THROWS_AS(m.validate(), InvalidConfig);
}

TEST_CASE("interaction matrix factors through the incidence matrix") {
    const auto m = makeMatrix(2, 4,
                              {{4, 30}, {4, 30}, r0, r0, //
                               r0, {4, 30}, {7, 30}, {11, 30}});
    const PathTree g = buildTree(m);
    const InteractionMatrix im = interactionMatrix(g);

    CHECK(im.incidence.rows() == g.vertexCount());
    CHECK(im.incidence.cols() == g.edgeCount());
    const Eigen::MatrixXd reco = im.incidence.transpose() * im.incidence / 2.0;
    CHECK((im.A - reco).cwiseAbs().maxCoeff() == 0.0);
    CHECK(im.A == im.A.transpose());
    for (int i = 0; i < im.A.rows(); ++i) CHECK(im.A(i, i) == 1.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(im.A);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("leaf peel order removes a leaf at every step") {
    const auto m = makeMatrix(2, 4,
                              {{4, 30}, {4, 30}, r0, r0, //
                               r0, {4, 30}, {7, 30}, {11, 30}});
    const PathTree g = buildTree(m);
    const std::vector<int> order = leafPeelOrder(g);
    REQUIRE(static_cast<int>(order.size()) == g.vertexCount());

    std::set<int> removed;
    for (std::size_t step = 0; step + 1 < order.size(); ++step) {
        const int v = order[step];
        CHECK(removed.insert(v).second);
        // a leaf of the remaining tree touches exactly one surviving edge
        int degree = 0;
        for (int i = 0; i < g.edgeCount(); ++i) {
            const int u = g.aVertex(i), w = g.bVertex(i);
            if (removed.count(u) || removed.count(w)) continue;
            if (u == v || w == v) ++degree;
        }
        CHECK(degree <= 1);
    }
    // every vertex appears exactly once
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int v = 0; v < g.vertexCount(); ++v) CHECK(sorted[static_cast<std::size_t>(v)] == v);
}

TEST_CASE("finite counts in strict mode need integer path numbers") {
    const auto m = makeMatrix(2, 2, {{1, 3}, {1, 3}, r0, {1, 3}});
    const FiniteCounts c = finiteCounts(m, 6, RoundingMode::Strict);
    CHECK(c.n == 6);
    CHECK(c.nkl(0, 0) == 2);
    CHECK(c.nkl(0, 1) == 2);
    CHECK(c.nkl(1, 0) == 0);
    CHECK(c.nkl(1, 1) == 2);
    CHECK(c.nk[0] == 4);
    CHECK(c.ml[1] == 4);

    CHECK_THROWS_AS(finiteCounts(m, 7, RoundingMode::Strict), NonIntegerCounts);
}

TEST_CASE("largest-remainder rounding preserves the total") {
    const auto m = makeMatrix(2, 4,
                              {{4, 30}, {4, 30}, r0, r0, //
                               r0, {4, 30}, {7, 30}, {11, 30}});
    for (const std::int64_t n : {5, 7, 11, 16, 23}) {
        const FiniteCounts c = finiteCounts(m, n, RoundingMode::LargestRemainder);
        CHECK(c.n == n);
        std::int64_t total = 0;
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 4; ++l) {
                total += c.nkl(k, l);
                const double exact =
                    static_cast<double>(n) * boost::rational_cast<double>(m.at(k, l));
                CHECK(std::abs(static_cast<double>(c.nkl(k, l)) - exact) < 1.0);
                if (m.at(k, l) == r0) CHECK(c.nkl(k, l) == 0);
            }
        CHECK(total == n);
    }
}
