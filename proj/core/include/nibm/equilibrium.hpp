#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nibm/graph.hpp"

namespace nibm {

/// Quadratic external fields V_i(x) = (x - x_i(t))^2 / (2 t (1-t)), one per
/// edge, with centers x_i(t) = (1-t) a_{k(i)} + t b_{l(i)}.
struct ExternalFieldSet {
    std::vector<double> centers;
    double curvature = 0.0; // 1 / (2 t (1-t))
    double T = 1.0;

    static ExternalFieldSet fromProblem(const ProblemConfig& cfg, const PathTree& tree);

    double value(int i, double x) const {
        const double d = x - centers[static_cast<std::size_t>(i)];
        return curvature * d * d;
    }
    double derivative(int i, double x) const {
        return 2.0 * curvature * (x - centers[static_cast<std::size_t>(i)]);
    }
    int components() const { return static_cast<int>(centers.size()); }
};

/// Uniform cell grid for one measure component.
struct ComponentGrid {
    double lo = 0.0;
    double hi = 1.0;
    int cells = 0;

    double width() const { return (hi - lo) / cells; }
    double left(int c) const { return lo + c * width(); }
    double right(int c) const { return lo + (c + 1) * width(); }
    double mid(int c) const { return lo + (c + 0.5) * width(); }
};

/// Vector of discretized positive measures; weights are cell masses.
struct MeasureVector {
    std::vector<ComponentGrid> grids;
    std::vector<Eigen::VectorXd> weights;
    std::vector<double> masses; // target mass per component

    int components() const { return static_cast<int>(grids.size()); }
    double density(int i, int c) const {
        return weights[static_cast<std::size_t>(i)][c] / grids[static_cast<std::size_t>(i)].width();
    }
};

struct SupportInterval {
    double alpha = 0.0;
    double beta = 0.0;
};

struct EquilibriumSolution {
    MeasureVector measures;
    std::vector<SupportInterval> supports;
    std::vector<double> constants; // Lagrange constants L_i
    double residual = 0.0;         // max Euler-Lagrange violation at convergence
    double energy = 0.0;
    bool converged = false;
    bool supportsDisjoint = false;
    int iterations = 0;
};

/// Discrete energy E(w) = w^T Q w + c^T w over concatenated cell masses.
/// Q folds the interaction matrix into exact cell-averaged log-kernel
/// integrals; c carries the external fields including the 1/T factor.
struct DiscreteEnergy {
    Eigen::MatrixXd Q;
    Eigen::VectorXd c;
    std::vector<int> offsets; // start index of each component block
    std::vector<ComponentGrid> grids;

    double value(const Eigen::VectorXd& w) const { return w.dot(Q * w) + c.dot(w); }
    Eigen::VectorXd gradient(const Eigen::VectorXd& w) const { return 2.0 * (Q * w) + c; }
    int size() const { return static_cast<int>(Q.rows()); }
};

struct SolverSettings {
    int gridCells = 512;
    double tol = 1e-6;
    int maxIterations = 100000;
    bool refine = true;          // run the one-cut endpoint refiner after the QP
    double refineTol = 1e-10;    // endpoint movement threshold
    int chebyshevNodes = 256;    // quadrature size inside the refiner
};

/// Exact double integral of log|x-y| over [a1,b1] x [a2,b2].
double logKernelCellIntegral(double a1, double b1, double a2, double b2);

DiscreteEnergy assembleEnergy(const ExternalFieldSet& fields, const Eigen::MatrixXd& A,
                              const std::vector<ComponentGrid>& grids);

/// Projected-gradient (Barzilai-Borwein with monotone backtracking) solve of
/// the discrete problem under per-component simplex constraints.
EquilibriumSolution solveGridQP(const DiscreteEnergy& energy, const std::vector<double>& masses,
                                double tol, int maxIterations);

/// Cyclic one-interval refinement: re-solves each component's scalar
/// equilibrium problem in its effective field with square-root edge
/// behavior resolved exactly. Throws SupportSplitDetected when the
/// effective density turns negative on the candidate interval.
EquilibriumSolution refineOneCut(const EquilibriumSolution& sol, const ExternalFieldSet& fields,
                                 const Eigen::MatrixXd& A, const SolverSettings& settings);

/// Full pipeline: initial grids from the field centers, grid QP, adaptive
/// re-grid to the detected support, second QP, optional one-cut refinement.
EquilibriumSolution solveEquilibrium(const ProblemConfig& cfg, const PathTree& tree,
                                     const Eigen::MatrixXd& A, const SolverSettings& settings);

struct ComponentElReport {
    double L = 0.0;              // median of U_i over the support
    double maxOnSupport = 0.0;   // max |U_i - L_i| on the support
    double minOffSupport = 0.0;  // min (U_i - L_i) off the support
    double gapMidpointSlack = 0.0; // min over adjacent gap midpoints of U_i - L_i
};

struct ElReport {
    std::vector<ComponentElReport> components;
    double maxResidual = 0.0;
};

/// Effective potential U_i(x) = 2 sum_j a_ij \int log|x-y|^{-1} dmu_j + V_i(x)/T.
double effectivePotential(const MeasureVector& mv, const ExternalFieldSet& fields,
                          const Eigen::MatrixXd& A, int i, double x);

ElReport elResidual(const EquilibriumSolution& sol, const ExternalFieldSet& fields,
                    const Eigen::MatrixXd& A, int verificationCellsPerComponent = 0);

enum class SupportSide { Left, Right };

struct EdgeFit {
    double exponent = 0.0;
    double coefficient = 0.0;
};

/// Log-log least-squares fit of the density over the inner 10% of the
/// support next to the chosen endpoint.
EdgeFit edgeExponentFit(const EquilibriumSolution& sol, int i, SupportSide side);

std::vector<bool> supportContainmentCheck(const EquilibriumSolution& sol,
                                          const ExternalFieldSet& fields, double eps);

/// Euclidean projection onto { w >= 0, sum w = mass }.
Eigen::VectorXd projectSimplex(const Eigen::VectorXd& v, double mass);

} // namespace nibm
