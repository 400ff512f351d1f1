#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "nibm/equilibrium.hpp"
#include "nibm/graph.hpp"

namespace nibm {

using Complex = std::complex<double>;

/// Which side of a branch cut a real evaluation point approaches from.
enum class Side { Above, Below };

/// Everything needed to evaluate the sheeted spectral functions built from
/// an equilibrium solution: per-sheet index maps (sheet k <-> a_k for
/// k < p, sheet p+l <-> b_l), the measures, and the additive constants of
/// the lambda-functions fixed by the edge matching conditions.
struct SpectralContext {
    ProblemConfig cfg;
    PathTree tree;
    EquilibriumSolution solution;
    ExternalFieldSet fields;
    std::vector<double> tildeC; // one per sheet (vertex), size p+q

    int sheets() const { return cfg.p + cfg.q; }
};

/// Cauchy transform F_i(z) of measure component i, cell-exact:
/// sum_c density_c * log((z-left_c)/(z-right_c)).
/// Throws OnCutWithoutSide when z is real inside the support.
Complex cauchyTransform(const EquilibriumSolution& sol, int i, Complex z);

/// Boundary value on the cut: principal value -/+ i*pi*rho(x) for
/// Side::Above / Side::Below.
Complex cauchyTransform(const EquilibriumSolution& sol, int i, double x, Side side);

/// xi_k(z) = -sum_{i:k(i)=k} F_i(z) + (z-a_k)/(T t) for sheets j < p;
/// xi_{p+l}(z) = sum_{i:l(i)=l} F_i(z) - (z-b_l)/(T(1-t)) for j >= p.
Complex xi(const SpectralContext& ctx, int j, Complex z);
Complex xi(const SpectralContext& ctx, int j, double x, Side side);

/// Counterclockwise rectangle-contour integral of xi_j around support i,
/// composite Gauss-Legendre on each side. Throws ContourIntersectsSupport
/// if no rectangle around support i avoids the other supports.
Complex contourIntegralXi(const SpectralContext& ctx, int j, int i);

/// Re(lambda_j(z)) via the closed potential forms; globally well defined.
double lambdaRe(const SpectralContext& ctx, int j, Complex z);

/// Full lambda via principal-branch logs. The imaginary part is only
/// meaningful modulo 2*pi*(rational mass) jumps across the cuts; the real
/// part agrees with lambdaRe.
Complex lambda(const SpectralContext& ctx, int j, Complex z);

/// Builds a context and solves the sheet constants: the peel-order root
/// gets 0 and the rest follow by back-substitution along the reversed
/// leaf-peel order, one endpoint equality per tree edge.
SpectralContext makeSpectralContext(const ProblemConfig& cfg, const PathTree& tree,
                                    const EquilibriumSolution& sol);

/// Re-solves the constants in place (root constant = 0 at rootVertex).
/// Throws SingularTreeSystem if an edge condition cannot be ordered
/// (cannot happen for a valid tree; defensive).
void solveLambdaConstants(SpectralContext& ctx, int rootVertex = -1);

/// Residual of the per-edge matching condition
/// Re(lambda_{k(i)}(beta_i)) - Re(lambda_{p+l(i)}(beta_i)) for each edge.
std::vector<double> edgeConditionResiduals(const SpectralContext& ctx);

/// Real scalar field sampled on a rectangular complex grid, with a
/// connected-component labeling of its sign regions.
struct ComplexGridField {
    double reLo = 0.0, reHi = 0.0;
    double imLo = 0.0, imHi = 0.0;
    int nRe = 0, nIm = 0;
    Eigen::MatrixXd values;               // nIm x nRe
    Eigen::MatrixXi componentId;          // same shape; ids partition the grid
    std::vector<int> componentSign;       // sign per id (+1 / -1)
    std::vector<bool> componentUnbounded; // touches the grid boundary

    double reAt(int c) const { return reLo + (reHi - reLo) * c / (nRe - 1); }
    double imAt(int r) const { return imLo + (imHi - imLo) * r / (nIm - 1); }
};

struct LensReport {
    bool verticalStep = false;   // consecutive edges share the b-vertex
    bool alphaInPositive = false;
    bool betaInNegative = false;
    bool uniquePositive = false; // exactly one unbounded positive component
    bool uniqueNegative = false;
    double fieldAtAlpha = 0.0;
    double fieldAtBeta = 0.0;
    ComplexGridField field;

    bool feasible() const {
        return alphaInPositive && betaInNegative && uniquePositive && uniqueNegative;
    }
};

/// Sign-geometry check for the step between consecutive edges i and i+1:
/// samples Re(lambda_{k+1}-lambda_k) (vertical step, shared l) or
/// Re(lambda_{p+l}-lambda_{p+l+1}) (horizontal step, shared k) on a grid,
/// labels sign components by 4-neighbor flood fill, and tests whether
/// alpha_i lies in the unbounded positive component and beta_{i+1} in the
/// unbounded negative one. Throws ResolutionTooCoarse when either test
/// point sits within one grid cell of a sign change.
LensReport lensFeasibility(const SpectralContext& ctx, int i, int nRe = 600, int nIm = 400);

} // namespace nibm
