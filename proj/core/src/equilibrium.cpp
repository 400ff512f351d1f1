#include "nibm/equilibrium.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

namespace nibm {

namespace {

// f(t) = \int log|t| dt, continuous with f(0) = 0.
double logPrimitive(double t) {
    if (t == 0.0) return 0.0;
    return t * std::log(std::abs(t)) - t;
}

// G(t) = \int f(t) dt, G(0) = 0; G is even.
double logSecondPrimitive(double t) {
    if (t == 0.0) return 0.0;
    return 0.5 * t * t * std::log(std::abs(t)) - 0.75 * t * t;
}

// Potential of one cell with unit density: \int_l^r log(1/|x-y|) dy.
double cellLogPotential(double x, double l, double r) {
    return -(logPrimitive(x - l) - logPrimitive(x - r));
}

// F(x) = \int_l^r dy/(x-y) for unit density, principal value when x is
// inside the cell.
double cellCauchyReal(double x, double l, double r) {
    if (x == l || x == r) {
        // Nudge off the node; the PV across the cell boundary is shared by
        // neighbours and this only happens on artificial test grids.
        x += 1e-300;
    }
    return std::log(std::abs((x - l) / (x - r)));
}

} // namespace

double logKernelCellIntegral(double a1, double b1, double a2, double b2) {
    return logSecondPrimitive(b1 - a2) + logSecondPrimitive(a1 - b2) -
           logSecondPrimitive(a1 - a2) - logSecondPrimitive(b1 - b2);
}

ExternalFieldSet ExternalFieldSet::fromProblem(const ProblemConfig& cfg, const PathTree& tree) {
    ExternalFieldSet out;
    out.T = cfg.T;
    out.curvature = 1.0 / (2.0 * cfg.t * (1.0 - cfg.t));
    out.centers.reserve(static_cast<std::size_t>(tree.edgeCount()));
    for (const auto& e : tree.edges)
        out.centers.push_back((1.0 - cfg.t) * cfg.a[static_cast<std::size_t>(e.k)] +
                              cfg.t * cfg.b[static_cast<std::size_t>(e.l)]);
    return out;
}

DiscreteEnergy assembleEnergy(const ExternalFieldSet& fields, const Eigen::MatrixXd& A,
                              const std::vector<ComponentGrid>& grids) {
    const int nComp = static_cast<int>(grids.size());
    assert(A.rows() == nComp && A.cols() == nComp);

    DiscreteEnergy e;
    e.grids = grids;
    e.offsets.resize(static_cast<std::size_t>(nComp) + 1);
    e.offsets[0] = 0;
    for (int i = 0; i < nComp; ++i)
        e.offsets[static_cast<std::size_t>(i) + 1] = e.offsets[static_cast<std::size_t>(i)] + grids[static_cast<std::size_t>(i)].cells;
    const int n = e.offsets.back();
    e.Q.setZero(n, n);
    e.c.setZero(n);

    for (int i = 0; i < nComp; ++i) {
        const auto& gi = grids[static_cast<std::size_t>(i)];
        const double hi = gi.width();
        for (int ci = 0; ci < gi.cells; ++ci) {
            const double m = gi.mid(ci);
            const double d = m - fields.centers[static_cast<std::size_t>(i)];
            e.c[e.offsets[static_cast<std::size_t>(i)] + ci] =
                fields.curvature * (d * d + hi * hi / 12.0) / fields.T;
        }
        for (int j = i; j < nComp; ++j) {
            const double aij = A(i, j);
            if (aij == 0.0) continue;
            const auto& gj = grids[static_cast<std::size_t>(j)];
            const double hj = gj.width();
            const double scale = -aij / (hi * hj);
            for (int ci = 0; ci < gi.cells; ++ci) {
                const double l1 = gi.left(ci), r1 = gi.right(ci);
                const int djStart = (i == j) ? ci : 0;
                for (int cj = djStart; cj < gj.cells; ++cj) {
                    const double v = scale * logKernelCellIntegral(l1, r1, gj.left(cj), gj.right(cj));
                    e.Q(e.offsets[static_cast<std::size_t>(i)] + ci, e.offsets[static_cast<std::size_t>(j)] + cj) = v;
                    e.Q(e.offsets[static_cast<std::size_t>(j)] + cj, e.offsets[static_cast<std::size_t>(i)] + ci) = v;
                }
            }
        }
    }
    return e;
}

Eigen::VectorXd projectSimplex(const Eigen::VectorXd& v, double mass) {
    const int n = static_cast<int>(v.size());
    if (mass <= 0.0) return Eigen::VectorXd::Zero(n);
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    int rho = 0;
    for (int k = 0; k < n; ++k) {
        cum += u[static_cast<std::size_t>(k)];
        const double th = (cum - mass) / (k + 1);
        if (u[static_cast<std::size_t>(k)] - th > 0.0) {
            rho = k + 1;
            theta = th;
        }
    }
    (void)rho;
    Eigen::VectorXd w = (v.array() - theta).cwiseMax(0.0);
    // One multiplicative correction keeps the mass exact to rounding.
    const double s = w.sum();
    if (s > 0.0) w *= mass / s;
    return w;
}

namespace {

struct KktResidual {
    double value = 0.0;
    std::vector<double> L;
};

KktResidual kktResidual(const DiscreteEnergy& e, const Eigen::VectorXd& w, const Eigen::VectorXd& g,
                        const std::vector<double>& masses) {
    KktResidual out;
    const int nComp = static_cast<int>(e.grids.size());
    out.L.assign(static_cast<std::size_t>(nComp), 0.0);
    for (int i = 0; i < nComp; ++i) {
        const int o = e.offsets[static_cast<std::size_t>(i)];
        const int n = e.grids[static_cast<std::size_t>(i)].cells;
        const double m = masses[static_cast<std::size_t>(i)];
        if (m <= 0.0) continue;
        const double wTol = 1e-12 * m / n;
        std::vector<double> onSupp;
        onSupp.reserve(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c)
            if (w[o + c] > wTol) onSupp.push_back(g[o + c]);
        if (onSupp.empty()) continue;
        auto midIt = onSupp.begin() + static_cast<std::ptrdiff_t>(onSupp.size() / 2);
        std::nth_element(onSupp.begin(), midIt, onSupp.end());
        const double L = *midIt;
        out.L[static_cast<std::size_t>(i)] = L;
        for (int c = 0; c < n; ++c) {
            if (w[o + c] > wTol)
                out.value = std::max(out.value, std::abs(g[o + c] - L));
            else
                out.value = std::max(out.value, L - g[o + c]);
        }
    }
    return out;
}

std::vector<SupportInterval> detectSupports(const MeasureVector& mv) {
    std::vector<SupportInterval> out;
    for (int i = 0; i < mv.components(); ++i) {
        const auto& grid = mv.grids[static_cast<std::size_t>(i)];
        const auto& w = mv.weights[static_cast<std::size_t>(i)];
        const double h = grid.width();
        double maxDensity = 0.0;
        for (int c = 0; c < grid.cells; ++c) maxDensity = std::max(maxDensity, w[c] / h);
        SupportInterval s{0.0, 0.0};
        if (maxDensity > 0.0) {
            const double thr = 1e-6 * maxDensity;
            int cmin = -1, cmax = -1;
            for (int c = 0; c < grid.cells; ++c) {
                if (w[c] / h > thr) {
                    if (cmin < 0) cmin = c;
                    cmax = c;
                }
            }
            s.alpha = grid.left(cmin);
            s.beta = grid.right(cmax);
            // Square-root model through the two innermost cells sharpens the
            // endpoint estimate below cell resolution.
            auto sqrtEdge = [&](int c0, int c1, double fallback) {
                if (c1 < 0 || c1 >= grid.cells || c0 == c1) return fallback;
                const double r0 = w[c0] / h, r1 = w[c1] / h;
                if (!(r1 > r0 && r0 > 0.0)) return fallback;
                const double m0 = grid.mid(c0), m1 = grid.mid(c1);
                const double est = (m1 * r0 * r0 - m0 * r1 * r1) / (r0 * r0 - r1 * r1);
                return std::isfinite(est) ? est : fallback;
            };
            if (cmax > cmin + 4) {
                const double aEst = sqrtEdge(cmin, cmin + 1, s.alpha);
                if (aEst > s.alpha - h && aEst < grid.mid(cmin)) s.alpha = aEst;
                const double bEst = sqrtEdge(cmax, cmax - 1, s.beta);
                if (bEst < s.beta + h && bEst > grid.mid(cmax)) s.beta = bEst;
            }
        }
        out.push_back(s);
    }
    return out;
}

bool supportsDisjointOrdered(const std::vector<SupportInterval>& s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
        if (!(s[i + 1].beta < s[i].alpha)) return false;
    return true;
}

} // namespace

EquilibriumSolution solveGridQP(const DiscreteEnergy& energy, const std::vector<double>& masses,
                                double tol, int maxIterations) {
    const int nComp = static_cast<int>(energy.grids.size());
    const int n = energy.size();
    Eigen::VectorXd w(n);
    for (int i = 0; i < nComp; ++i) {
        const int o = energy.offsets[static_cast<std::size_t>(i)];
        const int nc = energy.grids[static_cast<std::size_t>(i)].cells;
        w.segment(o, nc).setConstant(masses[static_cast<std::size_t>(i)] / nc);
    }

    auto projectAll = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out(n);
        for (int i = 0; i < nComp; ++i) {
            const int o = energy.offsets[static_cast<std::size_t>(i)];
            const int nc = energy.grids[static_cast<std::size_t>(i)].cells;
            out.segment(o, nc) = projectSimplex(v.segment(o, nc), masses[static_cast<std::size_t>(i)]);
        }
        return out;
    };

    // Spectral-norm estimate of 2Q for the initial step length.
    Eigen::VectorXd v = Eigen::VectorXd::Random(n).cwiseAbs();
    double lmax = 1.0;
    for (int it = 0; it < 12; ++it) {
        v = energy.Q * v;
        lmax = v.norm();
        if (lmax == 0.0) { lmax = 1.0; break; }
        v /= lmax;
    }
    double step = 1.0 / (2.0 * std::max(lmax, 1e-12));

    Eigen::VectorXd g = energy.gradient(w);
    double fw = energy.value(w);
    double residual = std::numeric_limits<double>::infinity();
    std::vector<double> L(static_cast<std::size_t>(nComp), 0.0);
    int iter = 0;
    bool converged = false;
    const double stepMin = step * 1e-10, stepMax = step * 1e10;

    while (iter < maxIterations) {
        ++iter;
        double s = std::clamp(step, stepMin, stepMax);
        Eigen::VectorXd wNew, gNew;
        double fNew = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            wNew = projectAll(w - s * g);
            fNew = energy.value(wNew);
            if (fNew <= fw) break; // monotone energy contract
            s *= 0.5;
        }
        gNew = energy.gradient(wNew);
        const Eigen::VectorXd dw = wNew - w;
        const Eigen::VectorXd dg = gNew - g;
        const double dwdg = dw.dot(dg);
        if (dwdg > 0.0) step = dw.squaredNorm() / dwdg; // Barzilai-Borwein
        const double progress = dw.lpNorm<Eigen::Infinity>();
        w.swap(wNew);
        g.swap(gNew);
        fw = fNew;
        if (iter % 25 == 0 || progress == 0.0) {
            auto r = kktResidual(energy, w, g, masses);
            residual = r.value;
            L = r.L;
            if (residual <= tol) { converged = true; break; }
            if (progress == 0.0) break; // stationary under projection
        }
    }
    if (!converged) {
        auto r = kktResidual(energy, w, g, masses);
        residual = r.value;
        L = r.L;
        converged = residual <= tol;
    }

    EquilibriumSolution sol;
    sol.measures.grids = energy.grids;
    sol.measures.masses = masses;
    sol.measures.weights.resize(static_cast<std::size_t>(nComp));
    for (int i = 0; i < nComp; ++i) {
        const int o = energy.offsets[static_cast<std::size_t>(i)];
        const int nc = energy.grids[static_cast<std::size_t>(i)].cells;
        sol.measures.weights[static_cast<std::size_t>(i)] = w.segment(o, nc);
    }
    sol.supports = detectSupports(sol.measures);
    sol.constants = L;
    sol.residual = residual;
    sol.energy = fw;
    sol.converged = converged;
    sol.supportsDisjoint = supportsDisjointOrdered(sol.supports);
    sol.iterations = iter;
    return sol;
}

double effectivePotential(const MeasureVector& mv, const ExternalFieldSet& fields,
                          const Eigen::MatrixXd& A, int i, double x) {
    double u = fields.value(i, x) / fields.T;
    for (int j = 0; j < mv.components(); ++j) {
        const double aij = A(i, j);
        if (aij == 0.0) continue;
        const auto& grid = mv.grids[static_cast<std::size_t>(j)];
        const auto& w = mv.weights[static_cast<std::size_t>(j)];
        const double h = grid.width();
        double pot = 0.0;
        for (int c = 0; c < grid.cells; ++c) {
            if (w[c] == 0.0) continue;
            pot += (w[c] / h) * cellLogPotential(x, grid.left(c), grid.right(c));
        }
        u += 2.0 * aij * pot;
    }
    return u;
}

namespace {

// Real Cauchy transform of component j at x (principal value inside cells).
double measureCauchyReal(const MeasureVector& mv, int j, double x) {
    const auto& grid = mv.grids[static_cast<std::size_t>(j)];
    const auto& w = mv.weights[static_cast<std::size_t>(j)];
    const double h = grid.width();
    double f = 0.0;
    for (int c = 0; c < grid.cells; ++c) {
        if (w[c] == 0.0) continue;
        f += (w[c] / h) * cellCauchyReal(x, grid.left(c), grid.right(c));
    }
    return f;
}

// Scalar one-interval equilibrium solve in the effective field of
// component i, other components held fixed. Gauss-Chebyshev quadrature
// absorbs the edge weight exactly.
struct OneCutResult {
    double alpha = 0.0, beta = 0.0;
    std::vector<double> chebNodes;   // for diagnostics
    bool splitDetected = false;
};

class OneCutProblem {
public:
    OneCutProblem(const MeasureVector& mv, const ExternalFieldSet& fields, const Eigen::MatrixXd& A,
                  int comp, int nodes)
        : mv_(mv), fields_(fields), A_(A), comp_(comp), nodes_(nodes) {}

    double fieldDerivative(double x) const {
        double wp = fields_.derivative(comp_, x) / fields_.T;
        for (int j = 0; j < mv_.components(); ++j) {
            if (j == comp_) continue;
            const double aij = A_(comp_, j);
            if (aij == 0.0) continue;
            wp -= 2.0 * aij * measureCauchyReal(mv_, j, x);
        }
        return wp;
    }

    // Endpoint residuals: r1 = moment-0 condition, r2 = moment-1 minus mass.
    std::pair<double, double> endpointResiduals(double alpha, double beta, double mass) const {
        const double c = 0.5 * (alpha + beta), r = 0.5 * (beta - alpha);
        double s0 = 0.0, s1 = 0.0;
        for (int j = 0; j < nodes_; ++j) {
            const double th = (2.0 * j + 1.0) * M_PI / (2.0 * nodes_);
            const double s = c + r * std::cos(th);
            const double wp = fieldDerivative(s);
            s0 += wp;
            s1 += s * wp;
        }
        const double w = M_PI / nodes_;
        return {w * s0, w * s1 / (2.0 * M_PI) - mass};
    }

    bool solveEndpoints(double& alpha, double& beta, double mass) const {
        for (int it = 0; it < 80; ++it) {
            const auto [r1, r2] = endpointResiduals(alpha, beta, mass);
            const double scale = std::max(beta - alpha, 1e-8);
            const double d = 1e-7 * scale;
            const auto [r1a, r2a] = endpointResiduals(alpha + d, beta, mass);
            const auto [r1b, r2b] = endpointResiduals(alpha, beta + d, mass);
            const double j11 = (r1a - r1) / d, j12 = (r1b - r1) / d;
            const double j21 = (r2a - r2) / d, j22 = (r2b - r2) / d;
            const double det = j11 * j22 - j12 * j21;
            if (!(std::abs(det) > 1e-300)) return false;
            double da = (-r1 * j22 + r2 * j12) / det;
            double db = (-j11 * r2 + j21 * r1) / det;
            // Keep the interval sane during the first steps.
            const double cap = 0.25 * scale;
            da = std::clamp(da, -cap, cap);
            db = std::clamp(db, -cap, cap);
            alpha += da;
            beta += db;
            if (beta - alpha < 1e-12) return false;
            if (std::max(std::abs(da), std::abs(db)) < 1e-14 * std::max(1.0, scale)) return true;
        }
        return true; // converged enough for the outer sweep to judge
    }

    // Caches the node field derivatives for repeated density evaluations
    // at fixed endpoints.
    void prepare(double alpha, double beta) const {
        nodeS_.resize(static_cast<std::size_t>(nodes_));
        nodeWp_.resize(static_cast<std::size_t>(nodes_));
        const double c = 0.5 * (alpha + beta), r = 0.5 * (beta - alpha);
        for (int j = 0; j < nodes_; ++j) {
            const double th = (2.0 * j + 1.0) * M_PI / (2.0 * nodes_);
            nodeS_[static_cast<std::size_t>(j)] = c + r * std::cos(th);
            nodeWp_[static_cast<std::size_t>(j)] = fieldDerivative(nodeS_[static_cast<std::size_t>(j)]);
        }
        cachedAlpha_ = alpha;
        cachedBeta_ = beta;
    }

    double density(double alpha, double beta, double x) const {
        if (alpha != cachedAlpha_ || beta != cachedBeta_ ||
            nodeS_.size() != static_cast<std::size_t>(nodes_))
            prepare(alpha, beta);
        const double r = 0.5 * (beta - alpha);
        const double wx = fieldDerivative(x);
        double sum = 0.0;
        for (int j = 0; j < nodes_; ++j) {
            double ds = nodeS_[static_cast<std::size_t>(j)] - x;
            if (std::abs(ds) < 1e-14 * r) ds = std::copysign(1e-14 * r, ds == 0.0 ? 1.0 : ds);
            sum += (nodeWp_[static_cast<std::size_t>(j)] - wx) / ds;
        }
        const double pv = (M_PI / nodes_) * sum;
        const double root = std::sqrt(std::max((x - alpha) * (beta - x), 0.0));
        return root * pv / (2.0 * M_PI * M_PI);
    }

private:
    mutable std::vector<double> nodeS_, nodeWp_;
    mutable double cachedAlpha_ = std::numeric_limits<double>::quiet_NaN();
    mutable double cachedBeta_ = std::numeric_limits<double>::quiet_NaN();
    const MeasureVector& mv_;
    const ExternalFieldSet& fields_;
    const Eigen::MatrixXd& A_;
    int comp_;
    int nodes_;
};

// 8-point Gauss-Legendre on [0,1].
constexpr int kGlPoints = 8;
constexpr double kGlX[kGlPoints] = {0.01985507175123188, 0.10166676129318664, 0.2372337950418355,
                                    0.40828267875217505, 0.591717321247825,   0.7627662049581645,
                                    0.8983332387068134,  0.9801449282487681};
constexpr double kGlW[kGlPoints] = {0.05061426814518813, 0.11119051722668723, 0.15685332293894363,
                                    0.18134189168918097, 0.18134189168918097, 0.15685332293894363,
                                    0.11119051722668723, 0.05061426814518813};

} // namespace

EquilibriumSolution refineOneCut(const EquilibriumSolution& sol, const ExternalFieldSet& fields,
                                 const Eigen::MatrixXd& A, const SolverSettings& settings) {
    EquilibriumSolution cur = sol;
    const int nComp = cur.measures.components();
    bool anySplit = false;

    for (int sweep = 0; sweep < 200; ++sweep) {
        double movement = 0.0;
        for (int i = 0; i < nComp; ++i) {
            const double mass = cur.measures.masses[static_cast<std::size_t>(i)];
            if (mass <= 0.0) continue;
            OneCutProblem prob(cur.measures, fields, A, i, settings.chebyshevNodes);
            double alpha = cur.supports[static_cast<std::size_t>(i)].alpha;
            double beta = cur.supports[static_cast<std::size_t>(i)].beta;
            const double a0 = alpha, b0 = beta;
            if (!prob.solveEndpoints(alpha, beta, mass))
                throw SupportSplitDetected("endpoint solve failed for component " + std::to_string(i + 1));

            // The inversion formula must keep the density positive; a
            // negative dip means the one-interval ansatz is wrong here.
            const int probe = 33;
            double minRho = 0.0, maxRho = 0.0;
            for (int pIdx = 1; pIdx < probe; ++pIdx) {
                const double x = alpha + (beta - alpha) * pIdx / probe;
                const double rho = prob.density(alpha, beta, x);
                minRho = std::min(minRho, rho);
                maxRho = std::max(maxRho, rho);
            }
            if (minRho < -1e-8 * std::max(maxRho, 1e-300))
                throw SupportSplitDetected("negative density on component " + std::to_string(i + 1));

            // Resample onto a fresh grid spanning the refined support.
            ComponentGrid grid{alpha, beta, settings.gridCells};
            Eigen::VectorXd w(grid.cells);
            const double h = grid.width();
            for (int c = 0; c < grid.cells; ++c) {
                double cellMass = 0.0;
                if (c == 0) {
                    // substitute u = sqrt(x - alpha) to absorb the edge
                    const double uMax = std::sqrt(h);
                    for (int k = 0; k < kGlPoints; ++k) {
                        const double u = uMax * kGlX[k];
                        const double x = alpha + u * u;
                        cellMass += kGlW[k] * uMax * 2.0 * u * prob.density(alpha, beta, x);
                    }
                } else if (c == grid.cells - 1) {
                    const double uMax = std::sqrt(h);
                    for (int k = 0; k < kGlPoints; ++k) {
                        const double u = uMax * kGlX[k];
                        const double x = beta - u * u;
                        cellMass += kGlW[k] * uMax * 2.0 * u * prob.density(alpha, beta, x);
                    }
                } else {
                    for (int k = 0; k < kGlPoints; ++k) {
                        const double x = grid.left(c) + h * kGlX[k];
                        cellMass += kGlW[k] * h * prob.density(alpha, beta, x);
                    }
                }
                w[c] = std::max(cellMass, 0.0);
            }
            const double total = w.sum();
            if (total > 0.0) w *= mass / total;
            cur.measures.grids[static_cast<std::size_t>(i)] = grid;
            cur.measures.weights[static_cast<std::size_t>(i)] = w;
            cur.supports[static_cast<std::size_t>(i)] = SupportInterval{alpha, beta};
            movement = std::max(movement, std::max(std::abs(alpha - a0), std::abs(beta - b0)));
        }
        if (movement < settings.refineTol) break;
    }
    (void)anySplit;
    cur.supportsDisjoint = supportsDisjointOrdered(cur.supports);
    return cur;
}

ElReport elResidual(const EquilibriumSolution& sol, const ExternalFieldSet& fields,
                    const Eigen::MatrixXd& A, int verificationCellsPerComponent) {
    const int nComp = sol.measures.components();
    const int nPts = verificationCellsPerComponent > 0 ? verificationCellsPerComponent : 256;
    ElReport report;
    report.components.resize(static_cast<std::size_t>(nComp));

    // Window covering all supports, for the off-support scan.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : sol.supports) {
        if (s.beta > s.alpha) {
            lo = std::min(lo, s.alpha);
            hi = std::max(hi, s.beta);
        }
    }
    const double span = std::max(hi - lo, 1e-6);
    lo -= 0.5 * span;
    hi += 0.5 * span;

    for (int i = 0; i < nComp; ++i) {
        auto& rep = report.components[static_cast<std::size_t>(i)];
        const auto& s = sol.supports[static_cast<std::size_t>(i)];
        if (sol.measures.masses[static_cast<std::size_t>(i)] <= 0.0 || !(s.beta > s.alpha)) {
            rep.L = -std::numeric_limits<double>::infinity();
            rep.minOffSupport = std::numeric_limits<double>::infinity();
            rep.gapMidpointSlack = std::numeric_limits<double>::infinity();
            continue;
        }
        std::vector<double> onVals;
        onVals.reserve(static_cast<std::size_t>(nPts));
        // Slight inset keeps the first/last sample off the exact endpoint
        // where the cell discretization kinks.
        const double inset = 0.5 * (s.beta - s.alpha) / nPts;
        for (int k = 0; k < nPts; ++k) {
            const double x = s.alpha + inset + (s.beta - s.alpha - 2 * inset) * k / (nPts - 1);
            onVals.push_back(effectivePotential(sol.measures, fields, A, i, x));
        }
        std::vector<double> sorted = onVals;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        rep.L = sorted[sorted.size() / 2];
        for (double u : onVals) rep.maxOnSupport = std::max(rep.maxOnSupport, std::abs(u - rep.L));

        rep.minOffSupport = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 2 * nPts; ++k) {
            const double x = lo + (hi - lo) * k / (2 * nPts);
            bool inside = x >= s.alpha && x <= s.beta;
            if (inside) continue;
            const double u = effectivePotential(sol.measures, fields, A, i, x);
            rep.minOffSupport = std::min(rep.minOffSupport, u - rep.L);
        }
        // Gap midpoints adjacent to component i (supports are ordered
        // right-to-left: component i+1 lies left of component i).
        rep.gapMidpointSlack = std::numeric_limits<double>::infinity();
        if (i + 1 < nComp) {
            const auto& sNext = sol.supports[static_cast<std::size_t>(i) + 1];
            if (sNext.beta < s.alpha) {
                const double x = 0.5 * (sNext.beta + s.alpha);
                rep.gapMidpointSlack = std::min(rep.gapMidpointSlack,
                                                effectivePotential(sol.measures, fields, A, i, x) - rep.L);
            }
        }
        if (i > 0) {
            const auto& sPrev = sol.supports[static_cast<std::size_t>(i) - 1];
            if (s.beta < sPrev.alpha) {
                const double x = 0.5 * (s.beta + sPrev.alpha);
                rep.gapMidpointSlack = std::min(rep.gapMidpointSlack,
                                                effectivePotential(sol.measures, fields, A, i, x) - rep.L);
            }
        }
        report.maxResidual = std::max(report.maxResidual, rep.maxOnSupport);
        if (rep.minOffSupport < 0.0)
            report.maxResidual = std::max(report.maxResidual, -rep.minOffSupport);
    }
    return report;
}

EdgeFit edgeExponentFit(const EquilibriumSolution& sol, int i, SupportSide side) {
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const auto& s = sol.supports[static_cast<std::size_t>(i)];
    const double span = s.beta - s.alpha;
    const double h = grid.width();
    if (span <= 0.0 || span / h < 32) throw InsufficientResolution("support has fewer than 32 cells");

    const double endpoint = side == SupportSide::Left ? s.alpha : s.beta;
    std::vector<double> lx, ly;
    for (int c = 0; c < grid.cells; ++c) {
        const double x = grid.mid(c);
        const double d = side == SupportSide::Left ? x - endpoint : endpoint - x;
        if (d < 0.75 * h || d > 0.1 * span) continue;
        const double rho = w[c] / h;
        if (rho <= 0.0) continue;
        lx.push_back(std::log(d));
        ly.push_back(std::log(rho));
    }
    if (lx.size() < 4) throw InsufficientResolution("not enough cells near the endpoint");
    const double n = static_cast<double>(lx.size());
    const double sx = std::accumulate(lx.begin(), lx.end(), 0.0);
    const double sy = std::accumulate(ly.begin(), ly.end(), 0.0);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxx += lx[k] * lx[k];
        sxy += lx[k] * ly[k];
    }
    EdgeFit fit;
    fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.coefficient = std::exp((sy - fit.exponent * sx) / n);
    return fit;
}

std::vector<bool> supportContainmentCheck(const EquilibriumSolution& sol,
                                          const ExternalFieldSet& fields, double eps) {
    std::vector<bool> out;
    for (int i = 0; i < sol.measures.components(); ++i) {
        const auto& s = sol.supports[static_cast<std::size_t>(i)];
        const double c = fields.centers[static_cast<std::size_t>(i)];
        out.push_back(s.alpha >= c - eps && s.beta <= c + eps);
    }
    return out;
}

EquilibriumSolution solveEquilibrium(const ProblemConfig& cfg, const PathTree& tree,
                                     const Eigen::MatrixXd& A, const SolverSettings& settings) {
    cfg.validate();
    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(cfg, tree);
    const int nComp = tree.edgeCount();

    std::vector<double> masses;
    masses.reserve(static_cast<std::size_t>(nComp));
    for (int i = 0; i < nComp; ++i) masses.push_back(tree.mass(i));

    const double halfWidth = 3.0 * std::sqrt(cfg.T * cfg.t * (1.0 - cfg.t));
    std::vector<ComponentGrid> grids;
    grids.reserve(static_cast<std::size_t>(nComp));
    for (int i = 0; i < nComp; ++i)
        grids.push_back(ComponentGrid{fields.centers[static_cast<std::size_t>(i)] - halfWidth,
                                      fields.centers[static_cast<std::size_t>(i)] + halfWidth,
                                      settings.gridCells});

    const double qpTol = std::max(settings.tol, 1e-8);
    DiscreteEnergy energy = assembleEnergy(fields, A, grids);
    EquilibriumSolution sol = solveGridQP(energy, masses, qpTol, settings.maxIterations);

    // One adaptive re-grid to 1.5x the detected support.
    bool regridded = false;
    for (int i = 0; i < nComp; ++i) {
        const auto& s = sol.supports[static_cast<std::size_t>(i)];
        if (!(s.beta > s.alpha)) continue;
        const double c = 0.5 * (s.alpha + s.beta);
        const double half = 0.75 * (s.beta - s.alpha); // 1.5x span
        grids[static_cast<std::size_t>(i)] = ComponentGrid{c - half, c + half, settings.gridCells};
        regridded = true;
    }
    if (regridded) {
        energy = assembleEnergy(fields, A, grids);
        EquilibriumSolution sol2 = solveGridQP(energy, masses, qpTol, settings.maxIterations);
        sol2.iterations += sol.iterations;
        sol = std::move(sol2);
    }

    if (settings.refine && sol.supportsDisjoint) {
        try {
            EquilibriumSolution refined = refineOneCut(sol, fields, A, settings);
            refined.iterations = sol.iterations;
            refined.converged = sol.converged;
            sol = std::move(refined);
        } catch (const SupportSplitDetected&) {
            // fall back to the grid-QP result
        }
    }

    ElReport rep = elResidual(sol, fields, A);
    sol.constants.assign(static_cast<std::size_t>(nComp), 0.0);
    for (int i = 0; i < nComp; ++i)
        sol.constants[static_cast<std::size_t>(i)] = rep.components[static_cast<std::size_t>(i)].L;
    sol.residual = rep.maxResidual;
    // Final discrete energy on the (possibly refined) grids.
    DiscreteEnergy finalEnergy = assembleEnergy(fields, A, sol.measures.grids);
    Eigen::VectorXd w(finalEnergy.size());
    for (int i = 0; i < nComp; ++i)
        w.segment(finalEnergy.offsets[static_cast<std::size_t>(i)],
                  sol.measures.grids[static_cast<std::size_t>(i)].cells) = sol.measures.weights[static_cast<std::size_t>(i)];
    sol.energy = finalEnergy.value(w);
    return sol;
}

} // namespace nibm
