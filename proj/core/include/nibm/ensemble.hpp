#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nibm/graph.hpp"

namespace nibm {

/// Finite ensemble: n paths split into per-edge groups, diffusion variance
/// sigma^2 = T/n.
struct EnsembleSpec {
    ProblemConfig cfg;
    FiniteCounts counts;
    double sigma2 = 0.0;

    static EnsembleSpec make(const ProblemConfig& cfg, const TransitionMatrix& m, std::int64_t n,
                             RoundingMode mode = RoundingMode::Strict);

    std::int64_t n() const { return counts.n; }
};

enum class BasisMode {
    Monomial, // x^d * gaussian weight; cross-check only, ill-conditioned in n
    Hermite,  // per-weight orthonormal Hermite polynomials (default)
};

/// Closed form of \int x^m w_{1,k}(x) w_{2,l}(x) dx where
/// w_{1,k}(x) = exp(-(x-a_k)^2/(2 t sigma^2)) and
/// w_{2,l}(x) = exp(-(x-b_l)^2/(2 (1-t) sigma^2)).
double gaussianCrossMoment(const EnsembleSpec& spec, int k, int l, int m);

/// Correlation kernel K_n(x,y) of the biorthogonal ensemble, evaluated
/// through the inverse Gram matrix of the two weighted families. The Gram
/// matrix entries span hundreds of orders of magnitude at small sigma^2, so
/// assembly, factorization, and evaluation run in extended precision and
/// only the final kernel value is rounded to double. Throws IllConditioned
/// when even extended precision cannot certify the inverse.
class KernelEvaluator {
public:
    explicit KernelEvaluator(const EnsembleSpec& spec, BasisMode mode = BasisMode::Hermite);
    KernelEvaluator(KernelEvaluator&&) noexcept;
    KernelEvaluator& operator=(KernelEvaluator&&) noexcept;
    ~KernelEvaluator();

    double operator()(double x, double y) const;

    const EnsembleSpec& spec() const;
    BasisMode mode() const;
    /// log10 of the 1-norm condition estimate of the Gram matrix.
    double log10Condition() const;
    /// Real interval outside which the weight envelope is negligible.
    std::pair<double, double> envelope() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// \int K_n(x,x) dx over the weight envelope, composite Gauss-Legendre with
/// panel doubling until |change| < tol. Throws QuadratureBudgetExhausted.
double integrateKernelDiagonal(const KernelEvaluator& ke, double tol = 1e-7);

/// (1/n) K_n(x,x) at the given abscissas.
std::vector<double> meanDensityCurve(const KernelEvaluator& ke, const std::vector<double>& xs);

/// One bundle of n non-intersecting bridges sampled on a uniform time grid.
struct PathBundle {
    std::vector<double> times;         // size steps+1
    Eigen::MatrixXd positions;         // n x (steps+1), row r = path of rank r (top first)
    std::vector<int> edgeOfPath;       // edge index per row
};

struct SampleStats {
    std::int64_t accepted = 0;
    std::int64_t rejected = 0;
    std::uint64_t seed = 0;
};

struct SampleResult {
    std::vector<PathBundle> bundles;
    SampleStats stats;
};

enum class SamplerMode {
    /// Independent bridges, accept iff strictly ordered at every interior
    /// grid time. Simple but biased: crossings between grid points are
    /// accepted, which at coarse grids visibly under-weights the path
    /// repulsion near the coincident endpoints.
    GridRejection,
    /// Removes the grid bias. The first and last interior slices are drawn
    /// from the exact confluent law of each coincident-endpoint cluster
    /// (non-crossing weight = Vandermonde of the slice values, by
    /// Karlin-McGregor); each interior segment is then accepted with the
    /// exact Karlin-McGregor determinant probability of staying ordered
    /// between the grid points. Clusters larger than 4 paths are not
    /// supported and the time grid needs at least 4 steps.
    Corrected,
};

/// Bundle sampler with the variance parameter sigma^2 per path.
/// Deterministic for a fixed seed, including under OpenMP. Throws
/// RejectionBudgetExhausted when a single bundle slot burns through
/// maxRejects attempts.
SampleResult samplePaths(const EnsembleSpec& spec, int timeSteps, std::uint64_t seed,
                         std::int64_t bundles, std::int64_t maxRejectsPerBundle = 100000000,
                         SamplerMode mode = SamplerMode::GridRejection);

/// One-point correlation by direct integration of the squared-determinant
/// joint density over the remaining n-1 variables (n <= 3). This is the
/// oracle the determinantal route is checked against.
double bruteForceOnePoint(const EnsembleSpec& spec, double x, int panels = 96);

/// Two-point correlation for n = 2 (no integration needed).
double bruteForceTwoPoint(const EnsembleSpec& spec, double x1, double x2);

} // namespace nibm
