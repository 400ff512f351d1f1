#include "nibm/spectral.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <queue>

namespace nibm {

namespace {

double logPrimitive(double t) {
    if (t == 0.0) return 0.0;
    return t * std::log(std::abs(t)) - t;
}

// Primitive of (1/2) log(t^2 + v^2) in t, continuous, P(0) = 0.
double halfLogPrimitive(double t, double v) {
    if (v == 0.0) return logPrimitive(t);
    return 0.5 * t * std::log(t * t + v * v) - t + v * std::atan(t / v);
}

// \int_l^r log|z - x| dx for unit density.
double cellAbsLogPotential(Complex z, double l, double r) {
    const double u = z.real(), v = z.imag();
    return halfLogPrimitive(u - l, v) - halfLogPrimitive(u - r, v);
}

// \int_l^r log(z - x) dx, principal branch.
Complex cellLogPotential(Complex z, double l, double r) {
    auto prim = [](Complex w) { return w == Complex{} ? Complex{} : w * std::log(w) - w; };
    return prim(z - Complex(l, 0.0)) - prim(z - Complex(r, 0.0));
}

double cellCauchyRealPV(double x, double l, double r) {
    if (x == l || x == r) x += 1e-300;
    return std::log(std::abs((x - l) / (x - r)));
}

// \int log|x - s| dmu_i(s) for real x (finite on the cut).
double measureAbsLogPotential(const EquilibriumSolution& sol, int i, Complex z) {
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    double out = 0.0;
    for (int c = 0; c < grid.cells; ++c) {
        if (w[c] == 0.0) continue;
        out += (w[c] / h) * cellAbsLogPotential(z, grid.left(c), grid.right(c));
    }
    return out;
}

Complex measureLogPotential(const EquilibriumSolution& sol, int i, Complex z) {
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    Complex out{};
    for (int c = 0; c < grid.cells; ++c) {
        if (w[c] == 0.0) continue;
        out += (w[c] / h) * cellLogPotential(z, grid.left(c), grid.right(c));
    }
    return out;
}

bool onCut(const EquilibriumSolution& sol, int i, Complex z) {
    if (z.imag() != 0.0) return false;
    const auto& s = sol.supports[static_cast<std::size_t>(i)];
    return z.real() >= s.alpha && z.real() <= s.beta;
}

double densityAt(const EquilibriumSolution& sol, int i, double x) {
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    if (x < grid.lo || x > grid.hi) return 0.0;
    int c = static_cast<int>((x - grid.lo) / h);
    c = std::clamp(c, 0, grid.cells - 1);
    return w[c] / h;
}

// Antiderivative of sqrt(1-u^2) U_k(u) in u = cos(theta):
// -(S_k - S_{k+2})/2 with S_0 = theta, S_m = sin(m theta)/m.
double sqrtChebPrimitive(int k, double theta) {
    const double sk = k == 0 ? theta : std::sin(k * theta) / k;
    const double sk2 = std::sin((k + 2) * theta) / (k + 2);
    return -0.5 * (sk - sk2);
}

// Square-root-weighted Chebyshev representation of one measure component
// on its support mapped to u in [-1,1]:
//   rho(u) = sqrt(1-u^2) sum_k coef_k U_k(u).
// Fitted by least squares against the stored cell averages; the one-cut
// refiner produces densities of exactly this form, so the fit recovers
// them to roundoff. The principal value on the cut then follows from the
// finite Hilbert transform identity
//   PV int_{-1}^{1} sqrt(1-t^2) U_k(t) / (x-t) dt = pi T_{k+1}(x).
struct AirfoilFit {
    double alpha = 0.0;
    double beta = 0.0;
    Eigen::VectorXd coef;
};

AirfoilFit airfoilFit(const EquilibriumSolution& sol, int i) {
    AirfoilFit fit;
    fit.alpha = sol.supports[static_cast<std::size_t>(i)].alpha;
    fit.beta = sol.supports[static_cast<std::size_t>(i)].beta;
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    const auto uOf = [&](double y) {
        return std::clamp(2.0 * (y - fit.alpha) / (fit.beta - fit.alpha) - 1.0, -1.0, 1.0);
    };
    std::vector<int> cells;
    for (int c = 0; c < grid.cells; ++c)
        if (uOf(grid.right(c)) > uOf(grid.left(c))) cells.push_back(c);
    const int m = static_cast<int>(cells.size());
    const int modes = std::min(48, std::max(8, m / 4));
    if (m < modes) return fit; // empty coefficient vector: caller falls back
    Eigen::MatrixXd phi(m, modes);
    Eigen::VectorXd y(m);
    for (int j = 0; j < m; ++j) {
        const double u0 = uOf(grid.left(cells[static_cast<std::size_t>(j)]));
        const double u1 = uOf(grid.right(cells[static_cast<std::size_t>(j)]));
        const double th0 = std::acos(u0), th1 = std::acos(u1);
        for (int k = 0; k < modes; ++k)
            phi(j, k) = (sqrtChebPrimitive(k, th1) - sqrtChebPrimitive(k, th0)) / (u1 - u0);
        y(j) = w[cells[static_cast<std::size_t>(j)]] / h;
    }
    fit.coef = (phi.transpose() * phi).ldlt().solve(phi.transpose() * y);
    return fit;
}

double airfoilPV(const AirfoilFit& fit, double x) {
    const double u = 2.0 * (x - fit.alpha) / (fit.beta - fit.alpha) - 1.0;
    double tPrev = 1.0, tCur = u, s = 0.0; // T_{k+1} recurrence
    for (int k = 0; k < fit.coef.size(); ++k) {
        s += fit.coef(k) * tCur;
        const double tNext = 2.0 * u * tCur - tPrev;
        tPrev = tCur;
        tCur = tNext;
    }
    return M_PI * s;
}

double airfoilDensity(const AirfoilFit& fit, double x) {
    const double u = 2.0 * (x - fit.alpha) / (fit.beta - fit.alpha) - 1.0;
    double uPrev = 1.0, uCur = 2.0 * u, s = 0.0; // U_k recurrence
    for (int k = 0; k < fit.coef.size(); ++k) {
        s += fit.coef(k) * uPrev;
        const double uNext = 2.0 * u * uCur - uPrev;
        uPrev = uCur;
        uCur = uNext;
    }
    return std::sqrt(std::max(0.0, 1.0 - u * u)) * s;
}

} // namespace

Complex cauchyTransform(const EquilibriumSolution& sol, int i, Complex z) {
    if (onCut(sol, i, z))
        throw OnCutWithoutSide("cauchyTransform at x = " + std::to_string(z.real()) +
                               " inside support " + std::to_string(i + 1));
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    Complex f{};
    for (int c = 0; c < grid.cells; ++c) {
        if (w[c] == 0.0) continue;
        f += (w[c] / h) * std::log((z - Complex(grid.left(c), 0.0)) / (z - Complex(grid.right(c), 0.0)));
    }
    return f;
}

Complex cauchyTransform(const EquilibriumSolution& sol, int i, double x, Side side) {
    const auto& s = sol.supports[static_cast<std::size_t>(i)];
    if (x > s.alpha && x < s.beta) {
        const AirfoilFit fit = airfoilFit(sol, i);
        if (fit.coef.size() > 0) {
            const double rho = airfoilDensity(fit, x);
            const double im = side == Side::Above ? -M_PI * rho : M_PI * rho;
            return {airfoilPV(fit, x), im};
        }
    }
    const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
    const auto& w = sol.measures.weights[static_cast<std::size_t>(i)];
    const double h = grid.width();
    double pv = 0.0;
    for (int c = 0; c < grid.cells; ++c) {
        if (w[c] == 0.0) continue;
        pv += (w[c] / h) * cellCauchyRealPV(x, grid.left(c), grid.right(c));
    }
    const double rho = densityAt(sol, i, x);
    const double im = side == Side::Above ? -M_PI * rho : M_PI * rho;
    return {pv, im};
}

namespace {

template <typename F>
Complex xiImpl(const SpectralContext& ctx, int j, F&& transform) {
    const int p = ctx.cfg.p;
    Complex sum{};
    for (int i = 0; i < ctx.tree.edgeCount(); ++i) {
        const auto& e = ctx.tree.edges[static_cast<std::size_t>(i)];
        if (j < p ? e.k == j : e.l == j - p) sum += transform(i);
    }
    if (j < p) return -sum; // linear part added by callers
    return sum;
}

Complex xiLinearPart(const SpectralContext& ctx, int j, Complex z) {
    const int p = ctx.cfg.p;
    if (j < p)
        return (z - Complex(ctx.cfg.a[static_cast<std::size_t>(j)], 0.0)) / (ctx.cfg.T * ctx.cfg.t);
    return -(z - Complex(ctx.cfg.b[static_cast<std::size_t>(j - p)], 0.0)) /
           (ctx.cfg.T * (1.0 - ctx.cfg.t));
}

} // namespace

Complex xi(const SpectralContext& ctx, int j, Complex z) {
    Complex s = xiImpl(ctx, j, [&](int i) { return cauchyTransform(ctx.solution, i, z); });
    return s + xiLinearPart(ctx, j, z);
}

Complex xi(const SpectralContext& ctx, int j, double x, Side side) {
    Complex s = xiImpl(ctx, j, [&](int i) { return cauchyTransform(ctx.solution, i, x, side); });
    return s + xiLinearPart(ctx, j, Complex(x, 0.0));
}

namespace {

constexpr int kGlPoints = 8;
constexpr double kGlX[kGlPoints] = {0.01985507175123188, 0.10166676129318664, 0.2372337950418355,
                                    0.40828267875217505, 0.591717321247825,   0.7627662049581645,
                                    0.8983332387068134,  0.9801449282487681};
constexpr double kGlW[kGlPoints] = {0.05061426814518813, 0.11119051722668723, 0.15685332293894363,
                                    0.18134189168918097, 0.18134189168918097, 0.15685332293894363,
                                    0.11119051722668723, 0.05061426814518813};

} // namespace

Complex contourIntegralXi(const SpectralContext& ctx, int j, int i) {
    const auto& s = ctx.solution.supports[static_cast<std::size_t>(i)];
    double margin = std::numeric_limits<double>::infinity();
    for (int o = 0; o < ctx.solution.measures.components(); ++o) {
        if (o == i || ctx.solution.measures.masses[static_cast<std::size_t>(o)] <= 0.0) continue;
        const auto& so = ctx.solution.supports[static_cast<std::size_t>(o)];
        const double gap = so.alpha > s.beta ? so.alpha - s.beta : s.alpha - so.beta;
        if (gap <= 0.0) throw ContourIntersectsSupport("supports " + std::to_string(i + 1) + " and " +
                                                       std::to_string(o + 1) + " overlap");
        margin = std::min(margin, 0.5 * gap);
    }
    if (!std::isfinite(margin)) margin = std::max(s.beta - s.alpha, 1.0);

    const double x0 = s.alpha - margin, x1 = s.beta + margin;
    const double y0 = -margin, y1 = margin;
    const int segs = 96;

    auto lineIntegral = [&](Complex from, Complex to) {
        Complex sum{};
        for (int sIdx = 0; sIdx < segs; ++sIdx) {
            const Complex a = from + (to - from) * (static_cast<double>(sIdx) / segs);
            const Complex b = from + (to - from) * (static_cast<double>(sIdx + 1) / segs);
            for (int k = 0; k < kGlPoints; ++k) {
                const Complex z = a + (b - a) * kGlX[k];
                sum += kGlW[k] * (b - a) * xi(ctx, j, z);
            }
        }
        return sum;
    };

    // counterclockwise: bottom, right, top, left
    return lineIntegral({x0, y0}, {x1, y0}) + lineIntegral({x1, y0}, {x1, y1}) +
           lineIntegral({x1, y1}, {x0, y1}) + lineIntegral({x0, y1}, {x0, y0});
}

double lambdaRe(const SpectralContext& ctx, int j, Complex z) {
    const int p = ctx.cfg.p;
    double pot = 0.0;
    for (int i = 0; i < ctx.tree.edgeCount(); ++i) {
        const auto& e = ctx.tree.edges[static_cast<std::size_t>(i)];
        if (j < p ? e.k == j : e.l == j - p) pot += measureAbsLogPotential(ctx.solution, i, z);
    }
    const double c = ctx.tildeC.empty() ? 0.0 : ctx.tildeC[static_cast<std::size_t>(j)];
    if (j < p) {
        const Complex d = z - Complex(ctx.cfg.a[static_cast<std::size_t>(j)], 0.0);
        return -pot + (d * d).real() / (2.0 * ctx.cfg.T * ctx.cfg.t) + c;
    }
    const Complex d = z - Complex(ctx.cfg.b[static_cast<std::size_t>(j - p)], 0.0);
    return pot - (d * d).real() / (2.0 * ctx.cfg.T * (1.0 - ctx.cfg.t)) + c;
}

Complex lambda(const SpectralContext& ctx, int j, Complex z) {
    const int p = ctx.cfg.p;
    Complex pot{};
    for (int i = 0; i < ctx.tree.edgeCount(); ++i) {
        const auto& e = ctx.tree.edges[static_cast<std::size_t>(i)];
        if (j < p ? e.k == j : e.l == j - p) pot += measureLogPotential(ctx.solution, i, z);
    }
    const double c = ctx.tildeC.empty() ? 0.0 : ctx.tildeC[static_cast<std::size_t>(j)];
    if (j < p) {
        const Complex d = z - Complex(ctx.cfg.a[static_cast<std::size_t>(j)], 0.0);
        return -pot + d * d / (2.0 * ctx.cfg.T * ctx.cfg.t) + c;
    }
    const Complex d = z - Complex(ctx.cfg.b[static_cast<std::size_t>(j - p)], 0.0);
    return pot - d * d / (2.0 * ctx.cfg.T * (1.0 - ctx.cfg.t)) + c;
}

namespace {

// Re(lambda) of a sheet with the constant left out.
double lambdaReNoConst(const SpectralContext& ctx, int j, double x) {
    const int p = ctx.cfg.p;
    double pot = 0.0;
    for (int i = 0; i < ctx.tree.edgeCount(); ++i) {
        const auto& e = ctx.tree.edges[static_cast<std::size_t>(i)];
        if (j < p ? e.k == j : e.l == j - p)
            pot += measureAbsLogPotential(ctx.solution, i, Complex(x, 0.0));
    }
    if (j < p) {
        const double d = x - ctx.cfg.a[static_cast<std::size_t>(j)];
        return -pot + d * d / (2.0 * ctx.cfg.T * ctx.cfg.t);
    }
    const double d = x - ctx.cfg.b[static_cast<std::size_t>(j - p)];
    return pot - d * d / (2.0 * ctx.cfg.T * (1.0 - ctx.cfg.t));
}

} // namespace

void solveLambdaConstants(SpectralContext& ctx, int rootVertex) {
    const int nv = ctx.tree.vertexCount();
    const int ne = ctx.tree.edgeCount();
    std::vector<int> degree(static_cast<std::size_t>(nv), 0);
    std::vector<bool> edgeAlive(static_cast<std::size_t>(ne), true);
    std::vector<bool> vertexAlive(static_cast<std::size_t>(nv), true);
    for (int i = 0; i < ne; ++i) {
        ++degree[static_cast<std::size_t>(ctx.tree.aVertex(i))];
        ++degree[static_cast<std::size_t>(ctx.tree.bVertex(i))];
    }

    // Peel leaves, recording (peeled vertex, its incident edge).
    std::vector<std::pair<int, int>> peel;
    peel.reserve(static_cast<std::size_t>(ne));
    for (int round = 0; round < ne; ++round) {
        int leaf = -1;
        for (int v = 0; v < nv; ++v) {
            if (vertexAlive[static_cast<std::size_t>(v)] && degree[static_cast<std::size_t>(v)] == 1) {
                leaf = v;
                break;
            }
        }
        if (leaf < 0) throw SingularTreeSystem("no leaf remains while edges are left");
        int edge = -1;
        for (int i = 0; i < ne; ++i) {
            if (!edgeAlive[static_cast<std::size_t>(i)]) continue;
            if (ctx.tree.aVertex(i) == leaf || ctx.tree.bVertex(i) == leaf) {
                edge = i;
                break;
            }
        }
        if (edge < 0) throw SingularTreeSystem("leaf without incident edge");
        peel.emplace_back(leaf, edge);
        edgeAlive[static_cast<std::size_t>(edge)] = false;
        vertexAlive[static_cast<std::size_t>(leaf)] = false;
        --degree[static_cast<std::size_t>(leaf)];
        const int other = ctx.tree.aVertex(edge) == leaf ? ctx.tree.bVertex(edge) : ctx.tree.aVertex(edge);
        --degree[static_cast<std::size_t>(other)];
    }
    int root = -1;
    for (int v = 0; v < nv; ++v)
        if (vertexAlive[static_cast<std::size_t>(v)]) root = v;
    if (root < 0) throw SingularTreeSystem("tree has no surviving root");

    ctx.tildeC.assign(static_cast<std::size_t>(nv), 0.0);
    std::vector<bool> assigned(static_cast<std::size_t>(nv), false);
    assigned[static_cast<std::size_t>(root)] = true;

    // The edge condition Re(lambda_k(beta_i)) = Re(lambda_{p+l}(beta_i))
    // determines the constant difference across each edge.
    for (auto it = peel.rbegin(); it != peel.rend(); ++it) {
        const auto [v, i] = *it;
        const int ka = ctx.tree.aVertex(i);
        const int vb = ctx.tree.bVertex(i);
        const int other = ka == v ? vb : ka;
        if (!assigned[static_cast<std::size_t>(other)])
            throw SingularTreeSystem("back-substitution order broken");
        const double beta = ctx.solution.supports[static_cast<std::size_t>(i)].beta;
        // c_a - c_b = (b-side value) - (a-side value), constants excluded
        const double diff = lambdaReNoConst(ctx, vb, beta) - lambdaReNoConst(ctx, ka, beta);
        if (v == ka)
            ctx.tildeC[static_cast<std::size_t>(ka)] = ctx.tildeC[static_cast<std::size_t>(vb)] + diff;
        else
            ctx.tildeC[static_cast<std::size_t>(vb)] = ctx.tildeC[static_cast<std::size_t>(ka)] - diff;
        assigned[static_cast<std::size_t>(v)] = true;
    }

    if (rootVertex >= 0 && rootVertex < nv) {
        const double shift = ctx.tildeC[static_cast<std::size_t>(rootVertex)];
        for (double& c : ctx.tildeC) c -= shift;
    }
}

SpectralContext makeSpectralContext(const ProblemConfig& cfg, const PathTree& tree,
                                    const EquilibriumSolution& sol) {
    SpectralContext ctx;
    ctx.cfg = cfg;
    ctx.tree = tree;
    ctx.solution = sol;
    ctx.fields = ExternalFieldSet::fromProblem(cfg, tree);
    solveLambdaConstants(ctx);
    return ctx;
}

std::vector<double> edgeConditionResiduals(const SpectralContext& ctx) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(ctx.tree.edgeCount()));
    for (int i = 0; i < ctx.tree.edgeCount(); ++i) {
        const double beta = ctx.solution.supports[static_cast<std::size_t>(i)].beta;
        out.push_back(lambdaRe(ctx, ctx.tree.aVertex(i), Complex(beta, 0.0)) -
                      lambdaRe(ctx, ctx.tree.bVertex(i), Complex(beta, 0.0)));
    }
    return out;
}

namespace {

// Coarsened copy of the measures for the lens grid field: sign geometry
// needs far fewer cells than density accuracy.
SpectralContext coarsened(const SpectralContext& ctx, int maxCells) {
    SpectralContext out = ctx;
    for (int i = 0; i < out.solution.measures.components(); ++i) {
        auto& grid = out.solution.measures.grids[static_cast<std::size_t>(i)];
        auto& w = out.solution.measures.weights[static_cast<std::size_t>(i)];
        if (grid.cells <= maxCells) continue;
        const int factor = (grid.cells + maxCells - 1) / maxCells;
        const int nc = (grid.cells + factor - 1) / factor;
        Eigen::VectorXd cw = Eigen::VectorXd::Zero(nc);
        for (int c = 0; c < grid.cells; ++c) cw[c / factor] += w[c];
        // keep the exact outer endpoints; the last coarse cell may be short,
        // so rebuild a uniform grid over the same interval
        grid = ComponentGrid{grid.lo, grid.hi, nc};
        w = cw;
    }
    return out;
}

void floodFill(ComplexGridField& f) {
    const int nr = f.nIm, nc = f.nRe;
    f.componentId = Eigen::MatrixXi::Constant(nr, nc, -1);
    f.componentSign.clear();
    f.componentUnbounded.clear();
    int nextId = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < nr; ++r) {
        for (int c = 0; c < nc; ++c) {
            if (f.componentId(r, c) >= 0) continue;
            const int sign = f.values(r, c) > 0.0 ? 1 : -1;
            bool unbounded = false;
            stack.assign(1, {r, c});
            f.componentId(r, c) = nextId;
            while (!stack.empty()) {
                auto [rr, cc] = stack.back();
                stack.pop_back();
                if (rr == 0 || rr == nr - 1 || cc == 0 || cc == nc - 1) unbounded = true;
                constexpr int dr[4] = {1, -1, 0, 0};
                constexpr int dc[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int r2 = rr + dr[d], c2 = cc + dc[d];
                    if (r2 < 0 || r2 >= nr || c2 < 0 || c2 >= nc) continue;
                    if (f.componentId(r2, c2) >= 0) continue;
                    if ((f.values(r2, c2) > 0.0 ? 1 : -1) != sign) continue;
                    f.componentId(r2, c2) = nextId;
                    stack.push_back({r2, c2});
                }
            }
            f.componentSign.push_back(sign);
            f.componentUnbounded.push_back(unbounded);
            ++nextId;
        }
    }
}

} // namespace

LensReport lensFeasibility(const SpectralContext& ctx, int i, int nRe, int nIm) {
    if (i < 0 || i + 1 >= ctx.tree.edgeCount())
        throw InvalidConfig("lens step needs consecutive edges i, i+1");
    const auto& e0 = ctx.tree.edges[static_cast<std::size_t>(i)];
    const auto& e1 = ctx.tree.edges[static_cast<std::size_t>(i) + 1];

    LensReport rep;
    rep.verticalStep = e1.l == e0.l; // k increments, shared ending point
    int jPlus, jMinus;
    if (rep.verticalStep) {
        jPlus = e1.k;       // lambda_{k+1}
        jMinus = e0.k;      // lambda_k
    } else {
        jPlus = ctx.cfg.p + e0.l;  // lambda_{p+l}
        jMinus = ctx.cfg.p + e1.l; // lambda_{p+l+1}
    }

    double aMin = std::numeric_limits<double>::infinity(), bMax = -aMin;
    for (const auto& s : ctx.solution.supports) {
        if (!(s.beta > s.alpha)) continue;
        aMin = std::min(aMin, s.alpha);
        bMax = std::max(bMax, s.beta);
    }
    const double span = std::max(bMax - aMin, 1e-6);

    ComplexGridField f;
    f.reLo = aMin - span;
    f.reHi = bMax + span;
    f.imLo = -span;
    f.imHi = span;
    f.nRe = nRe;
    f.nIm = nIm;
    f.values.resize(nIm, nRe);

    const SpectralContext coarse = coarsened(ctx, 96);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < nIm; ++r) {
        for (int c = 0; c < nRe; ++c) {
            const Complex z(f.reAt(c), f.imAt(r));
            f.values(r, c) = lambdaRe(coarse, jPlus, z) - lambdaRe(coarse, jMinus, z);
        }
    }
    floodFill(f);

    const double alpha = ctx.solution.supports[static_cast<std::size_t>(i)].alpha;
    const double beta = ctx.solution.supports[static_cast<std::size_t>(i) + 1].beta;
    rep.fieldAtAlpha = lambdaRe(ctx, jPlus, Complex(alpha, 0.0)) - lambdaRe(ctx, jMinus, Complex(alpha, 0.0));
    rep.fieldAtBeta = lambdaRe(ctx, jPlus, Complex(beta, 0.0)) - lambdaRe(ctx, jMinus, Complex(beta, 0.0));

    auto nodeOf = [&](double x) {
        int c = static_cast<int>(std::lround((x - f.reLo) / (f.reHi - f.reLo) * (nRe - 1)));
        int r = static_cast<int>(std::lround((0.0 - f.imLo) / (f.imHi - f.imLo) * (nIm - 1)));
        return std::pair<int, int>{std::clamp(r, 0, nIm - 1), std::clamp(c, 0, nRe - 1)};
    };
    auto checkResolution = [&](std::pair<int, int> node, const char* what) {
        const int sign = f.values(node.first, node.second) > 0.0 ? 1 : -1;
        constexpr int dr[4] = {1, -1, 0, 0};
        constexpr int dc[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            const int r2 = node.first + dr[d], c2 = node.second + dc[d];
            if (r2 < 0 || r2 >= nIm || c2 < 0 || c2 >= nRe) continue;
            if ((f.values(r2, c2) > 0.0 ? 1 : -1) != sign)
                throw ResolutionTooCoarse(std::string(what) + " sits within one grid cell of a sign change");
        }
    };

    const auto nodeAlpha = nodeOf(alpha);
    const auto nodeBeta = nodeOf(beta);
    checkResolution(nodeAlpha, "alpha_i");
    checkResolution(nodeBeta, "beta_{i+1}");

    int posUnbounded = 0, negUnbounded = 0, posId = -1, negId = -1;
    for (std::size_t id = 0; id < f.componentSign.size(); ++id) {
        if (!f.componentUnbounded[id]) continue;
        if (f.componentSign[id] > 0) {
            ++posUnbounded;
            posId = static_cast<int>(id);
        } else {
            ++negUnbounded;
            negId = static_cast<int>(id);
        }
    }
    rep.uniquePositive = posUnbounded == 1;
    rep.uniqueNegative = negUnbounded == 1;
    rep.alphaInPositive = f.componentId(nodeAlpha.first, nodeAlpha.second) == posId && posId >= 0;
    rep.betaInNegative = f.componentId(nodeBeta.first, nodeBeta.second) == negId && negId >= 0;
    rep.field = std::move(f);
    return rep;
}

} // namespace nibm
