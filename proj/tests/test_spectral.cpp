#include <doctest.h>

#include <cmath>
#include <complex>

#include <nibm/config.hpp>
#include <nibm/spectral.hpp>

using namespace nibm;

namespace {

std::string fixturePath(const std::string& name) {
    return std::string(TEST_FIXTURE_DIR) + "/" + name;
}

struct Solved {
    RunConfig cfg;
    PathTree tree;
    InteractionMatrix im;
    EquilibriumSolution sol;
};

Solved solveFixture(const std::string& name) {
    Solved s{parseRunConfigFile(fixturePath(name)), {}, {}, {}};
    s.tree = buildTree(s.cfg.transition);
    s.im = interactionMatrix(s.tree);
    s.sol = solveEquilibrium(s.cfg.problem, s.tree, s.im.A, s.cfg.solver);
    return s;
}

const Solved& pq2() {
    static const Solved s = solveFixture("pq2.conf");
    return s;
}

const Solved& semicircle() {
    static const Solved s = solveFixture("semicircle.conf");
    return s;
}

// sqrt(z^2 - 1) with the branch that behaves like z at infinity
Complex sqrtBranch(Complex z) { return std::sqrt(z - 1.0) * std::sqrt(z + 1.0); }

} // namespace

TEST_CASE("Cauchy transform of the semicircle matches the closed form") {
    const auto& s = semicircle();
    // rho = (2/pi) sqrt(1-x^2) has F(z) = 2 (z - sqrt(z^2-1))
    for (const Complex z : {Complex(2.0, 0.0), Complex(0.0, 1.0), Complex(-1.5, 0.7),
                            Complex(0.3, -2.0), Complex(5.0, 5.0)}) {
        const Complex want = 2.0 * (z - sqrtBranch(z));
        const Complex got = cauchyTransform(s.sol, 0, z);
        CHECK(std::abs(got - want) < 5e-3);
    }
}

TEST_CASE("Cauchy transform decays like mass over z") {
    const auto& s = pq2();
    for (int i = 0; i < 3; ++i) {
        const double mass = s.tree.mass(i);
        const Complex z(40.0, 17.0);
        CHECK(std::abs(z * cauchyTransform(s.sol, i, z) - mass) < 0.05);
        const Complex z2 = 4.0 * z;
        // remainder of z F(z) - mass shrinks with |z|
        CHECK(std::abs(z2 * cauchyTransform(s.sol, i, z2) - mass) <
              0.5 * std::abs(z * cauchyTransform(s.sol, i, z) - mass));
    }
}

TEST_CASE("boundary values obey Plemelj") {
    const auto& s = semicircle();
    for (const double x : {-0.6, 0.0, 0.45, 0.9}) {
        const double rho = 2.0 / M_PI * std::sqrt(1.0 - x * x);
        const Complex above = cauchyTransform(s.sol, 0, x, Side::Above);
        const Complex below = cauchyTransform(s.sol, 0, x, Side::Below);
        CHECK(above.imag() == doctest::Approx(-M_PI * rho).epsilon(5e-3));
        CHECK(below.imag() == doctest::Approx(M_PI * rho).epsilon(5e-3));
        CHECK(above.real() == doctest::Approx(below.real()).epsilon(1e-10));
        // side evaluation is the limit of off-axis evaluation (the off-axis
        // path uses the piecewise-constant cells, so only a few digits match,
        // and fewer still near the support edge)
        if (std::abs(x) < 0.6) {
            const Complex near = cauchyTransform(s.sol, 0, Complex(x, 1e-7));
            CHECK(std::abs(near - above) < 2e-3);
        }
    }
    CHECK_THROWS_AS(cauchyTransform(s.sol, 0, Complex(0.25, 0.0)), OnCutWithoutSide);
}

TEST_CASE("contour integrals of xi count the enclosed mass per sheet") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    for (int j = 0; j < ctx.sheets(); ++j) {
        for (int i = 0; i < s.tree.edgeCount(); ++i) {
            double expectedIm = 0.0;
            if (j == s.tree.aVertex(i)) expectedIm = -2.0 * M_PI * s.tree.mass(i);
            if (j == s.tree.bVertex(i)) expectedIm = 2.0 * M_PI * s.tree.mass(i);
            const Complex v = contourIntegralXi(ctx, j, i);
            CHECK(std::abs(v.real()) < 1e-6);
            CHECK(v.imag() == doctest::Approx(expectedIm).epsilon(1e-6));
        }
    }
}

TEST_CASE("xi glues across each cut onto the partner sheet") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    const ElReport rep = elResidual(s.sol, ctx.fields, s.im.A);
    const double tol = 10.0 * std::max(rep.maxResidual, 1e-9);
    for (int i = 0; i < s.tree.edgeCount(); ++i) {
        const auto& sup = s.sol.supports[static_cast<std::size_t>(i)];
        for (int k = 1; k < 64; ++k) {
            const double x = sup.alpha + (sup.beta - sup.alpha) * (k + 0.37) / 64.0;
            const Complex up = xi(ctx, s.tree.aVertex(i), x, Side::Above);
            const Complex down = xi(ctx, s.tree.bVertex(i), x, Side::Below);
            CHECK(std::abs(up - down) < tol);
        }
    }
}

TEST_CASE("density is recovered from the boundary value of xi") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    const ElReport rep = elResidual(s.sol, ctx.fields, s.im.A);
    const double tol = std::max(1e-6, 10.0 * rep.maxResidual);
    for (int i = 0; i < s.tree.edgeCount(); ++i) {
        const ComponentGrid& g = s.sol.measures.grids[static_cast<std::size_t>(i)];
        const auto& sup = s.sol.supports[static_cast<std::size_t>(i)];
        const double margin = 0.15 * (sup.beta - sup.alpha);
        for (int c = 0; c < g.cells; c += 37) {
            const double x = g.mid(c);
            // away from the endpoints the cell average agrees with the
            // pointwise density; at the square-root edges it cannot
            if (x <= sup.alpha + margin || x >= sup.beta - margin) continue;
            const double viaXi = xi(ctx, s.tree.aVertex(i), x, Side::Above).imag() / M_PI;
            CHECK(std::abs(viaXi - s.sol.measures.density(i, c)) < tol);
        }
    }
}

TEST_CASE("xi approaches its linear term with a 1/z remainder") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    const double t = s.cfg.problem.t, T = s.cfg.problem.T;
    for (int j = 0; j < ctx.sheets(); ++j) {
        const bool aSide = j < s.cfg.problem.p;
        const double pin = aSide ? s.cfg.problem.a[static_cast<std::size_t>(j)]
                                 : s.cfg.problem.b[static_cast<std::size_t>(j - s.cfg.problem.p)];
        auto remainder = [&](Complex z) {
            const Complex lin = aSide ? (z - pin) / (T * t) : -(z - pin) / (T * (1.0 - t));
            return xi(ctx, j, z) - lin;
        };
        const Complex z(30.0, 12.0);
        const Complex r1 = remainder(z) * z;
        const Complex r2 = remainder(2.0 * z) * (2.0 * z);
        // z * remainder tends to a constant (the enclosed mass, up to sign)
        CHECK(std::abs(r2 - r1) < 0.1 * std::abs(r1));
        CHECK(std::abs(remainder(2.0 * z)) < 0.6 * std::abs(remainder(z)));
    }
}

TEST_CASE("lambda constants satisfy every edge condition") {
    const auto& s = pq2();
    SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    for (const double r : edgeConditionResiduals(ctx)) CHECK(std::abs(r) < 1e-8);

    // differences of the constants do not depend on the chosen root
    const std::vector<double> base = ctx.tildeC;
    for (int root = 0; root < ctx.sheets(); ++root) {
        solveLambdaConstants(ctx, root);
        CHECK(ctx.tildeC[static_cast<std::size_t>(root)] == 0.0);
        for (int j = 0; j < ctx.sheets(); ++j) {
            const double want = base[static_cast<std::size_t>(j)] -
                                base[static_cast<std::size_t>(root)];
            CHECK(ctx.tildeC[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-10));
        }
        for (const double r : edgeConditionResiduals(ctx)) CHECK(std::abs(r) < 1e-8);
    }
}

TEST_CASE("lambda is conjugation symmetric and consistent with lambdaRe") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    for (int j = 0; j < ctx.sheets(); ++j) {
        for (const Complex z : {Complex(1.7, 0.4), Complex(-0.2, 1.1), Complex(0.05, -0.3)}) {
            CHECK(lambda(ctx, j, z).real() == doctest::Approx(lambdaRe(ctx, j, z)).epsilon(1e-10));
            CHECK(lambdaRe(ctx, j, std::conj(z)) == doctest::Approx(lambdaRe(ctx, j, z)).epsilon(1e-10));
        }
    }
}

TEST_CASE("lens geometry is feasible for both steps of the fixture") {
    const auto& s = pq2();
    const SpectralContext ctx = makeSpectralContext(s.cfg.problem, s.tree, s.sol);
    for (int i = 0; i + 1 < s.tree.edgeCount(); ++i) {
        const LensReport lr = lensFeasibility(ctx, i, 240, 160);
        CHECK(lr.alphaInPositive);
        CHECK(lr.betaInNegative);
        CHECK(lr.uniquePositive);
        CHECK(lr.uniqueNegative);
        CHECK(lr.feasible());
        CHECK(lr.fieldAtAlpha > 0.0);
        CHECK(lr.fieldAtBeta < 0.0);
    }
}
