#include <doctest.h>

#include <cmath>

#include <nibm/config.hpp>
#include <nibm/equilibrium.hpp>

using namespace nibm;

namespace {

std::string fixturePath(const std::string& name) {
    return std::string(TEST_FIXTURE_DIR) + "/" + name;
}

EquilibriumSolution solveFixture(const std::string& name, int gridCells) {
    const RunConfig cfg = parseRunConfigFile(fixturePath(name));
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    SolverSettings s = cfg.solver;
    s.gridCells = gridCells;
    return solveEquilibrium(cfg.problem, tree, im.A, s);
}

} // namespace

TEST_CASE("log-kernel cell integrals match independent quadrature") {
    // reference values from 40-digit quadrature with the inner integral
    // done by antiderivative
    CHECK(logKernelCellIntegral(0, 1, 0, 1) == doctest::Approx(-1.5).epsilon(1e-13));
    CHECK(logKernelCellIntegral(0, 1, 1, 2) ==
          doctest::Approx(-0.11370563888010938).epsilon(1e-13));
    CHECK(logKernelCellIntegral(0, 1, 2, 3) ==
          doctest::Approx(0.67116657676671237).epsilon(1e-13));
    CHECK(logKernelCellIntegral(-0.5, 0.25, 0.1, 0.9) ==
          doctest::Approx(-0.4086483046387682).epsilon(1e-13));
    CHECK(logKernelCellIntegral(3, 3.125, 3, 3.125) ==
          doctest::Approx(-0.055928774088747436).epsilon(1e-13));
    CHECK(logKernelCellIntegral(1, 2, -4, -3.5) ==
          doctest::Approx(0.82816528793232865).epsilon(1e-13));
    // symmetry in the two cells
    CHECK(logKernelCellIntegral(0.2, 0.7, -1.0, 0.4) ==
          doctest::Approx(logKernelCellIntegral(-1.0, 0.4, 0.2, 0.7)).epsilon(1e-14));
}

TEST_CASE("simplex projection") {
    Eigen::VectorXd v(3);
    v << 2.0, 2.0, -10.0;
    const Eigen::VectorXd w = projectSimplex(v, 1.0);
    CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w(1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w(2) == 0.0);

    Eigen::VectorXd u(4);
    u << 0.3, -0.1, 0.25, 0.05;
    const Eigen::VectorXd pu = projectSimplex(u, 0.7);
    CHECK(pu.minCoeff() >= 0.0);
    CHECK(pu.sum() == doctest::Approx(0.7).epsilon(1e-12));
    // projection is idempotent
    const Eigen::VectorXd pp = projectSimplex(pu, 0.7);
    CHECK((pp - pu).cwiseAbs().maxCoeff() < 1e-12);
    // feasible points are fixed
    Eigen::VectorXd f(2);
    f << 0.25, 0.75;
    CHECK((projectSimplex(f, 1.0) - f).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("discrete energy is symmetric and carries the field in c") {
    const RunConfig cfg = parseRunConfigFile(fixturePath("pq2.conf"));
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(cfg.problem, tree);

    CHECK(fields.components() == 3);
    CHECK(fields.curvature == doctest::Approx(2.0).epsilon(1e-15)); // t = 1/2
    // centers x_i = (1-t) a_k + t b_l for edges (0,0),(0,1),(1,1)
    CHECK(fields.centers[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fields.centers[1] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(fields.centers[2] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(fields.value(1, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fields.derivative(0, 1.25) == doctest::Approx(1.0).epsilon(1e-15));

    std::vector<ComponentGrid> grids;
    for (int i = 0; i < 3; ++i) grids.push_back({fields.centers[i] - 1.0, fields.centers[i] + 1.0, 8});
    const DiscreteEnergy e = assembleEnergy(fields, im.A, grids);
    CHECK(e.size() == 24);
    CHECK((e.Q - e.Q.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    // gradient at zero is the linear (field) part
    CHECK((e.gradient(Eigen::VectorXd::Zero(24)) - e.c).cwiseAbs().maxCoeff() == 0.0);
    // field part is the exact cell average of V/T: for a quadratic field,
    // midpoint value plus curvature * h^2 / 12
    const double h = grids[0].width();
    const double avg = fields.value(0, grids[0].mid(3)) + fields.curvature * h * h / 12.0;
    CHECK(e.c(3) == doctest::Approx(avg / cfg.problem.T).epsilon(1e-12));
}

TEST_CASE("single confluent component recovers the semicircle law") {
    const EquilibriumSolution sol = solveFixture("semicircle.conf", 512);
    REQUIRE(sol.converged);
    REQUIRE(sol.measures.components() == 1);
    CHECK(sol.supportsDisjoint);

    CHECK(sol.supports[0].alpha == doctest::Approx(-1.0).epsilon(5e-3));
    CHECK(sol.supports[0].beta == doctest::Approx(1.0).epsilon(5e-3));

    const ComponentGrid& g = sol.measures.grids[0];
    double l1 = 0.0;
    for (int c = 0; c < g.cells; ++c) {
        const double x = g.mid(c);
        const double ref = x * x < 1.0 ? 2.0 / M_PI * std::sqrt(1.0 - x * x) : 0.0;
        l1 += std::abs(sol.measures.density(0, c) - ref) * g.width();
    }
    CHECK(l1 < 2e-3);

    // square-root vanishing at both edges
    const EdgeFit left = edgeExponentFit(sol, 0, SupportSide::Left);
    const EdgeFit right = edgeExponentFit(sol, 0, SupportSide::Right);
    CHECK(left.exponent == doctest::Approx(0.5).epsilon(0.15));
    CHECK(right.exponent == doctest::Approx(0.5).epsilon(0.15));

    // Euler-Lagrange: flat on the support
    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(
        parseRunConfigFile(fixturePath("semicircle.conf")).problem, PathTree{1, 1, {{0, 0, Rational(1)}}});
    Eigen::MatrixXd A(1, 1);
    A << 1.0;
    const ElReport rep = elResidual(sol, fields, A);
    CHECK(rep.maxResidual < 1e-4);
    CHECK(rep.components[0].L == doctest::Approx(2.3862893450451477).epsilon(1e-4));
}

TEST_CASE("equilibrium measure is translation covariant") {
    const std::string base = "[problem]\np = 1\nq = 1\na = 0\nb = 0\n[transition]\nrow = 1\n";
    const std::string moved = "[problem]\np = 1\nq = 1\na = 3\nb = 3\n[transition]\nrow = 1\n";
    SolverSettings s;
    s.gridCells = 192;

    auto solve = [&](const std::string& text) {
        const RunConfig cfg = parseRunConfigString(text);
        const PathTree tree = buildTree(cfg.transition);
        const InteractionMatrix im = interactionMatrix(tree);
        return solveEquilibrium(cfg.problem, tree, im.A, s);
    };
    const EquilibriumSolution a = solve(base);
    const EquilibriumSolution b = solve(moved);
    CHECK(b.supports[0].alpha - a.supports[0].alpha == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(b.supports[0].beta - a.supports[0].beta == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("two-by-two fixture separates into three disjoint bumps") {
    const RunConfig cfg = parseRunConfigFile(fixturePath("pq2.conf"));
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    const EquilibriumSolution sol = solveEquilibrium(cfg.problem, tree, im.A, cfg.solver);

    REQUIRE(sol.converged);
    REQUIRE(sol.measures.components() == 3);
    CHECK(sol.supportsDisjoint);

    // frozen support endpoints (first solve of this fixture, cross-checked
    // against the field centers +- the low-temperature spread)
    CHECK(sol.supports[0].alpha == doctest::Approx(0.875375).epsilon(1e-3));
    CHECK(sol.supports[0].beta == doctest::Approx(1.13303).epsilon(1e-3));
    CHECK(sol.supports[1].alpha == doctest::Approx(-0.128556).epsilon(1e-2));
    CHECK(sol.supports[1].beta == doctest::Approx(0.128556).epsilon(1e-2));
    CHECK(sol.supports[2].alpha == doctest::Approx(-1.13303).epsilon(1e-3));
    CHECK(sol.supports[2].beta == doctest::Approx(-0.875375).epsilon(1e-3));

    // mirror symmetry of the configuration
    CHECK(sol.supports[2].alpha == doctest::Approx(-sol.supports[0].beta).epsilon(1e-6));
    CHECK(sol.supports[1].alpha == doctest::Approx(-sol.supports[1].beta).epsilon(1e-6));

    // masses match the edge weights
    for (int i = 0; i < 3; ++i) {
        CHECK(sol.measures.weights[static_cast<std::size_t>(i)].sum() ==
              doctest::Approx(tree.mass(i)).epsilon(1e-10));
    }

    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(cfg.problem, tree);
    const ElReport rep = elResidual(sol, fields, im.A);
    CHECK(rep.maxResidual < 1e-4);
    for (const auto& c : rep.components) {
        CHECK(c.gapMidpointSlack > 0.0);
        CHECK(c.minOffSupport > -1e-6);
    }

    const auto contained = supportContainmentCheck(sol, fields, 0.4375);
    for (const bool ok : contained) CHECK(ok);
}

TEST_CASE("hot fixture reports touching supports") {
    const EquilibriumSolution sol = solveFixture("pq2_largeT.conf", 256);
    CHECK_FALSE(sol.supportsDisjoint);
}
