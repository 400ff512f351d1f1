#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <nibm/config.hpp>
#include <nibm/ensemble.hpp>

using namespace nibm;

namespace {

std::string fixturePath(const std::string& name) {
    return std::string(TEST_FIXTURE_DIR) + "/" + name;
}

EnsembleSpec fixtureSpec(const std::string& name, std::int64_t n,
                         RoundingMode mode = RoundingMode::Strict) {
    const RunConfig cfg = parseRunConfigFile(fixturePath(name));
    return EnsembleSpec::make(cfg.problem, cfg.transition, n, mode);
}

RunConfig inlineConfig(const std::string& text) { return parseRunConfigString(text); }

// Independent closed form: completing the square in the product of the two
// Gaussian weights gives precision c = 1/(2 sigma^2 t(1-t)), mean
// mu = (1-t) a + t b and prefactor exp(-(a-b)^2/(2 sigma^2)); the moments
// follow from M_m = mu M_{m-1} + (m-1)/(2c) M_{m-2}.
double crossMomentOracle(const EnsembleSpec& spec, int k, int l, int m) {
    const double t = spec.cfg.t, s2 = spec.sigma2;
    const double a = spec.cfg.a[static_cast<std::size_t>(k)];
    const double b = spec.cfg.b[static_cast<std::size_t>(l)];
    const double c = 1.0 / (2.0 * s2 * t * (1.0 - t));
    const double mu = (1.0 - t) * a + t * b;
    const double pre = std::exp(-(a - b) * (a - b) / (2.0 * s2));
    std::vector<double> mom(static_cast<std::size_t>(m) + 2);
    mom[0] = std::sqrt(M_PI / c);
    mom[1] = mu * mom[0];
    for (int j = 2; j <= m; ++j)
        mom[static_cast<std::size_t>(j)] = mu * mom[static_cast<std::size_t>(j - 1)] +
                                           (j - 1) / (2.0 * c) * mom[static_cast<std::size_t>(j - 2)];
    return pre * mom[static_cast<std::size_t>(m)];
}

} // namespace

TEST_CASE("gaussian cross moments match the completed-square closed form") {
    const EnsembleSpec single = fixtureSpec("semicircle.conf", 1);
    // a = b = 0, t = 1/2, sigma^2 = 1: moment 0 is sqrt(pi/2), odd vanish
    CHECK(gaussianCrossMoment(single, 0, 0, 0) == doctest::Approx(std::sqrt(M_PI / 2)).epsilon(1e-14));
    CHECK(gaussianCrossMoment(single, 0, 0, 1) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(gaussianCrossMoment(single, 0, 0, 2) ==
          doctest::Approx(0.25 * std::sqrt(M_PI / 2)).epsilon(1e-14));

    const EnsembleSpec spec = fixtureSpec("pq2.conf", 6, RoundingMode::LargestRemainder);
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l)
            for (int m = 0; m <= 6; ++m) {
                const double want = crossMomentOracle(spec, k, l, m);
                CHECK(gaussianCrossMoment(spec, k, l, m) ==
                      doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("n = 1 kernel diagonal is the Brownian bridge marginal") {
    const EnsembleSpec spec = fixtureSpec("semicircle.conf", 1);
    const KernelEvaluator ke(spec);
    const double var = spec.sigma2 * spec.cfg.t * (1.0 - spec.cfg.t);
    for (const double x : {-1.2, -0.4, 0.0, 0.3, 0.9}) {
        const double want = std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
        CHECK(std::abs(ke(x, x) - want) < 1e-10);
    }
}

TEST_CASE("kernel diagonal integrates to n") {
    for (const std::int64_t n : {1, 2, 8}) {
        const EnsembleSpec spec = fixtureSpec("semicircle.conf", n);
        const KernelEvaluator ke(spec);
        CHECK(integrateKernelDiagonal(ke) == doctest::Approx(static_cast<double>(n)).epsilon(1e-6));
    }
    const EnsembleSpec spec = fixtureSpec("pq2.conf", 6, RoundingMode::LargestRemainder);
    const KernelEvaluator ke(spec);
    CHECK(integrateKernelDiagonal(ke) == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("Hermite and monomial bases agree where well conditioned") {
    const EnsembleSpec spec = fixtureSpec("semicircle.conf", 8);
    const KernelEvaluator hermite(spec, BasisMode::Hermite);
    const KernelEvaluator monomial(spec, BasisMode::Monomial);
    for (const double x : {-0.8, -0.1, 0.5, 1.1}) {
        CHECK(hermite(x, x) == doctest::Approx(monomial(x, x)).epsilon(1e-8));
        CHECK(hermite(x, 0.2) == doctest::Approx(monomial(x, 0.2)).epsilon(1e-8));
    }
    CHECK(hermite.mode() == BasisMode::Hermite);
    CHECK(hermite.log10Condition() < monomial.log10Condition());
}

TEST_CASE("kernel matches brute force for two and three paths") {
    const EnsembleSpec two = fixtureSpec("semicircle.conf", 2);
    const KernelEvaluator keTwo(two);
    for (const double x : {-0.7, 0.0, 0.6}) {
        CHECK(std::abs(keTwo(x, x) - bruteForceOnePoint(two, x)) < 1e-5);
    }
    // two-point correlation via the 2x2 determinant; zero on the diagonal
    for (const double x1 : {-0.5, 0.4}) {
        const double x2 = x1 + 0.8;
        const double det = keTwo(x1, x1) * keTwo(x2, x2) - keTwo(x1, x2) * keTwo(x2, x1);
        CHECK(std::abs(det - bruteForceTwoPoint(two, x1, x2)) < 1e-5);
        CHECK(std::abs(bruteForceTwoPoint(two, x1, x1)) < 1e-12);
    }

    const RunConfig cfg = inlineConfig(
        "[problem]\np = 1\nq = 2\na = 0\nb = 1, -1\nt = 0.5\nT = 1\n"
        "[transition]\nrow = 1/3, 2/3\n");
    const EnsembleSpec three = EnsembleSpec::make(cfg.problem, cfg.transition, 3);
    const KernelEvaluator keThree(three);
    for (const double x : {-0.6, 0.1, 0.55}) {
        CHECK(std::abs(keThree(x, x) - bruteForceOnePoint(three, x)) < 1e-4);
    }
}

TEST_CASE("mean density curve is the scaled diagonal") {
    const EnsembleSpec spec = fixtureSpec("semicircle.conf", 4);
    const KernelEvaluator ke(spec);
    const std::vector<double> xs = {-0.9, 0.0, 0.7};
    const std::vector<double> curve = meanDensityCurve(ke, xs);
    REQUIRE(curve.size() == xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j)
        CHECK(curve[j] == doctest::Approx(ke(xs[j], xs[j]) / 4.0).epsilon(1e-12));
}

TEST_CASE("oversized ensembles are rejected") {
    CHECK_THROWS_AS(KernelEvaluator(fixtureSpec("semicircle.conf", 80)), IllConditioned);
    CHECK_THROWS_AS(fixtureSpec("pq2.conf", 7, RoundingMode::Strict), NonIntegerCounts);
}

TEST_CASE("sampling is bit-reproducible per seed") {
    const EnsembleSpec spec = fixtureSpec("pq2.conf", 6, RoundingMode::LargestRemainder);
    for (const SamplerMode mode : {SamplerMode::GridRejection, SamplerMode::Corrected}) {
        const SampleResult r1 = samplePaths(spec, 16, 42, 5, 100000000, mode);
        const SampleResult r2 = samplePaths(spec, 16, 42, 5, 100000000, mode);
        REQUIRE(r1.bundles.size() == 5);
        CHECK(r1.stats.accepted == 5);
        CHECK(r1.stats.rejected == r2.stats.rejected);
        for (std::size_t b = 0; b < 5; ++b) {
            CHECK(r1.bundles[b].positions == r2.bundles[b].positions);
            CHECK(r1.bundles[b].times == r2.bundles[b].times);
            CHECK(r1.bundles[b].edgeOfPath == r2.bundles[b].edgeOfPath);
        }
        const SampleResult r3 = samplePaths(spec, 16, 43, 5, 100000000, mode);
        CHECK(r1.bundles[0].positions != r3.bundles[0].positions);
    }
}

TEST_CASE("sampled bundles are ordered and pinned to their endpoints") {
    const EnsembleSpec spec = fixtureSpec("pq2.conf", 6, RoundingMode::LargestRemainder);
    const SampleResult res = samplePaths(spec, 16, 7, 3, 100000000, SamplerMode::Corrected);
    for (const PathBundle& pb : res.bundles) {
        REQUIRE(pb.positions.rows() == 6);
        REQUIRE(pb.positions.cols() == 17);
        for (int s = 1; s < 16; ++s)
            for (int r = 0; r + 1 < 6; ++r) CHECK(pb.positions(r, s) > pb.positions(r + 1, s));
        // endpoints: ranks descend within the fixed start/end values
        for (int r = 0; r < 6; ++r) {
            const int e = pb.edgeOfPath[static_cast<std::size_t>(r)];
            const auto& edges = buildTree(parseRunConfigFile(fixturePath("pq2.conf")).transition).edges;
            CHECK(pb.positions(r, 0) ==
                  spec.cfg.a[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].k)]);
            CHECK(pb.positions(r, 16) ==
                  spec.cfg.b[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].l)]);
        }
    }
}

TEST_CASE("single path is never rejected and has the bridge law") {
    const EnsembleSpec spec = fixtureSpec("semicircle.conf", 1);
    const int steps = 8;
    const std::int64_t bundles = 4000;
    const SampleResult res = samplePaths(spec, steps, 11, bundles, 100000000, SamplerMode::Corrected);
    CHECK(res.stats.rejected == 0);

    // Kolmogorov-Smirnov against the bridge marginal at mid time
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(bundles));
    for (const PathBundle& pb : res.bundles) xs.push_back(pb.positions(0, steps / 2));
    std::sort(xs.begin(), xs.end());
    const double sd = std::sqrt(spec.sigma2 * 0.25); // var = sigma^2 t(1-t) at t = 1/2
    double ks = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const double cdf = 0.5 * std::erfc(-xs[j] / (sd * std::sqrt(2.0)));
        ks = std::max(ks, std::abs(cdf - (j + 1.0) / static_cast<double>(bundles)));
        ks = std::max(ks, std::abs(cdf - j / static_cast<double>(bundles)));
    }
    // 1% critical value 1.63 / sqrt(N)
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(bundles)));
}

TEST_CASE("corrected sampler validates its prerequisites") {
    const EnsembleSpec spec = fixtureSpec("pq2.conf", 6, RoundingMode::LargestRemainder);
    CHECK_THROWS_AS(samplePaths(spec, 3, 1, 1, 100000000, SamplerMode::Corrected), InvalidConfig);
    // five coincident paths exceed the exact confluent-cluster support
    const EnsembleSpec big = fixtureSpec("semicircle.conf", 5);
    CHECK_THROWS_AS(samplePaths(big, 16, 1, 1, 100000000, SamplerMode::Corrected), InvalidConfig);
    CHECK_NOTHROW(samplePaths(big, 4, 1, 1, 100000000, SamplerMode::GridRejection));
}
