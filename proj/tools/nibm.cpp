#include <algorithm>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nibm/config.hpp"
#include "nibm/csv.hpp"
#include "nibm/ensemble.hpp"
#include "nibm/equilibrium.hpp"
#include "nibm/errors.hpp"
#include "nibm/graph.hpp"
#include "nibm/spectral.hpp"

namespace {

using namespace nibm;

// exit-code taxonomy: 0 ok, 2 validation/parse, 3 supports touch,
// 4 iteration budget, 5 missing artifacts, 6 conditioning, 7 rejection
// budget, 8 quadrature budget, 9 spectral-geometry errors, 1 anything else
constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitSupportsTouch = 3;
constexpr int kExitMaxIterations = 4;
constexpr int kExitMissingArtifact = 5;
constexpr int kExitIllConditioned = 6;
constexpr int kExitRejectionBudget = 7;
constexpr int kExitQuadratureBudget = 8;
constexpr int kExitSpectral = 9;

struct CliOverrides {
    std::string configPath;
    std::optional<std::string> outDir;
    std::optional<double> tol;
    std::optional<int> grid;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> n;
};

RunConfig loadConfig(const CliOverrides& o) {
    RunConfig cfg = parseRunConfigFile(o.configPath);
    if (o.outDir) cfg.outDir = *o.outDir;
    if (o.tol) cfg.solver.tol = *o.tol;
    if (o.grid) cfg.solver.gridCells = *o.grid;
    if (o.seed) cfg.ensemble.seed = static_cast<std::uint64_t>(*o.seed);
    if (o.n) cfg.ensemble.n = *o.n;
    std::filesystem::create_directories(cfg.outDir);
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

double totalDensity(const EquilibriumSolution& sol, double x) {
    double rho = 0.0;
    for (int i = 0; i < sol.measures.components(); ++i) {
        const auto& grid = sol.measures.grids[static_cast<std::size_t>(i)];
        if (x < grid.lo || x >= grid.hi) continue;
        const int c = std::clamp(static_cast<int>((x - grid.lo) / grid.width()), 0, grid.cells - 1);
        rho += sol.measures.density(i, c);
    }
    return rho;
}

int cmdValidate(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    const auto peel = leafPeelOrder(tree);

    std::cout << "edges (" << tree.edgeCount() << "):\n";
    for (int i = 0; i < tree.edgeCount(); ++i) {
        const auto& e = tree.edges[static_cast<std::size_t>(i)];
        std::cout << "  edge " << i + 1 << ": a" << e.k + 1 << " -> b" << e.l + 1 << "  weight "
                  << e.weight.numerator() << "/" << e.weight.denominator() << "\n";
    }
    std::cout << "interaction matrix:\n" << im.A << "\n";
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(im.A);
    std::cout << "smallest eigenvalue: " << es.eigenvalues().minCoeff() << "\n";
    std::cout << "leaf-peel order:";
    for (int v : peel) std::cout << " " << (v < tree.p ? "a" + std::to_string(v + 1)
                                                       : "b" + std::to_string(v - tree.p + 1));
    std::cout << "\n";
    return kExitOk;
}

int cmdSolve(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    const EquilibriumSolution sol = solveEquilibrium(cfg.problem, tree, im.A, cfg.solver);
    if (!sol.converged) throw MaxIterationsExceeded("equilibrium solve did not converge");

    writeDensities(join(cfg.outDir, "densities.csv"), sol);
    writeSupports(join(cfg.outDir, "supports.csv"), sol);

    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(cfg.problem, tree);
    const ElReport rep = elResidual(sol, fields, im.A);
    CsvTable el;
    el.header = {"component", "L", "max_on_support", "min_off_support", "gap_midpoint_slack"};
    for (int i = 0; i < sol.measures.components(); ++i) {
        const auto& r = rep.components[static_cast<std::size_t>(i)];
        el.addRow({std::to_string(i + 1), formatDouble(r.L), formatDouble(r.maxOnSupport),
                   formatDouble(r.minOffSupport), formatDouble(r.gapMidpointSlack)});
    }
    writeCsv(join(cfg.outDir, "el_report.csv"), el);

    CsvTable edges;
    edges.header = {"component", "side", "exponent", "coefficient"};
    for (int i = 0; i < sol.measures.components(); ++i) {
        for (auto side : {SupportSide::Left, SupportSide::Right}) {
            try {
                const EdgeFit fit = edgeExponentFit(sol, i, side);
                edges.addRow({std::to_string(i + 1), side == SupportSide::Left ? "left" : "right",
                              formatDouble(fit.exponent), formatDouble(fit.coefficient)});
            } catch (const InsufficientResolution&) {
                edges.addRow({std::to_string(i + 1), side == SupportSide::Left ? "left" : "right",
                              "nan", "nan"});
            }
        }
    }
    writeCsv(join(cfg.outDir, "edge_exponents.csv"), edges);

    std::cout << "converged in " << sol.iterations << " iterations, residual " << sol.residual
              << ", energy " << sol.energy << "\n";
    for (int i = 0; i < sol.measures.components(); ++i)
        std::cout << "  support " << i + 1 << ": [" << sol.supports[static_cast<std::size_t>(i)].alpha
                  << ", " << sol.supports[static_cast<std::size_t>(i)].beta << "]\n";
    if (!sol.supportsDisjoint) {
        std::cout << "supports touch: outside the small-T regime\n";
        return kExitSupportsTouch;
    }
    return kExitOk;
}

int cmdSpectral(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const PathTree tree = buildTree(cfg.transition);
    const EquilibriumSolution sol =
        readSolution(join(cfg.outDir, "densities.csv"), join(cfg.outDir, "supports.csv"));
    const SpectralContext ctx = makeSpectralContext(cfg.problem, tree, sol);

    bool allPass = true;
    CsvTable contour;
    contour.header = {"sheet", "cut", "re", "im", "expected_im", "pass"};
    for (int j = 0; j < ctx.sheets(); ++j) {
        for (int i = 0; i < tree.edgeCount(); ++i) {
            const Complex v = contourIntegralXi(ctx, j, i);
            double expected = 0.0;
            if (j == tree.aVertex(i)) expected = -2.0 * M_PI * tree.mass(i);
            if (j == tree.bVertex(i)) expected = 2.0 * M_PI * tree.mass(i);
            const bool pass = std::abs(v.real()) < 1e-6 && std::abs(v.imag() - expected) < 1e-6;
            allPass = allPass && pass;
            contour.addRow({std::to_string(j + 1), std::to_string(i + 1), formatDouble(v.real()),
                            formatDouble(v.imag()), formatDouble(expected), pass ? "1" : "0"});
        }
    }
    writeCsv(join(cfg.outDir, "contour_report.csv"), contour);

    CsvTable lam;
    lam.header = {"sheet", "tilde_c"};
    for (int j = 0; j < ctx.sheets(); ++j)
        lam.addRow({std::to_string(j + 1), formatDouble(ctx.tildeC[static_cast<std::size_t>(j)])});
    writeCsv(join(cfg.outDir, "lambda_constants.csv"), lam);

    const auto residuals = edgeConditionResiduals(ctx);
    CsvTable lamRes;
    lamRes.header = {"edge", "residual"};
    for (std::size_t i = 0; i < residuals.size(); ++i)
        lamRes.addRow({std::to_string(i + 1), formatDouble(residuals[i])});
    writeCsv(join(cfg.outDir, "lambda_report.csv"), lamRes);

    CsvTable gluing;
    gluing.header = {"edge", "max_gluing_residual"};
    CsvTable xiCsv;
    xiCsv.header = {"sheet", "x", "re", "im"};
    for (int i = 0; i < tree.edgeCount(); ++i) {
        const auto& s = sol.supports[static_cast<std::size_t>(i)];
        double maxResid = 0.0;
        for (int k = 1; k < 64; ++k) {
            const double x = s.alpha + (s.beta - s.alpha) * k / 64.0;
            const Complex above = xi(ctx, tree.aVertex(i), x, Side::Above);
            const Complex below = xi(ctx, tree.bVertex(i), x, Side::Below);
            maxResid = std::max(maxResid, std::abs(above - below));
            xiCsv.addRow({std::to_string(tree.aVertex(i) + 1), formatDouble(x),
                          formatDouble(above.real()), formatDouble(above.imag())});
            xiCsv.addRow({std::to_string(tree.bVertex(i) + 1), formatDouble(x),
                          formatDouble(below.real()), formatDouble(below.imag())});
        }
        gluing.addRow({std::to_string(i + 1), formatDouble(maxResid)});
    }
    writeCsv(join(cfg.outDir, "gluing_report.csv"), gluing);
    writeCsv(join(cfg.outDir, "xi_boundary.csv"), xiCsv);

    CsvTable lens;
    lens.header = {"step",   "vertical", "alpha_in_positive", "beta_in_negative",
                   "unique_positive", "unique_negative", "feasible"};
    for (int i = 0; i + 1 < tree.edgeCount(); ++i) {
        const LensReport rep = lensFeasibility(ctx, i);
        lens.addRow({std::to_string(i + 1), rep.verticalStep ? "1" : "0",
                     rep.alphaInPositive ? "1" : "0", rep.betaInNegative ? "1" : "0",
                     rep.uniquePositive ? "1" : "0", rep.uniqueNegative ? "1" : "0",
                     rep.feasible() ? "1" : "0"});
        CsvTable field;
        field.header = {"re_z", "im_z", "sign", "component_id"};
        for (int r = 0; r < rep.field.nIm; ++r)
            for (int c = 0; c < rep.field.nRe; ++c)
                field.addRow({formatDouble(rep.field.reAt(c)), formatDouble(rep.field.imAt(r)),
                              rep.field.values(r, c) > 0.0 ? "1" : "-1",
                              std::to_string(rep.field.componentId(r, c))});
        writeCsv(join(cfg.outDir, "lens_step_" + std::to_string(i + 1) + ".csv"), field);
        allPass = allPass && rep.feasible();
    }
    writeCsv(join(cfg.outDir, "lens_report.csv"), lens);

    std::cout << (allPass ? "all spectral checks pass\n" : "spectral checks FAILED\n");
    return allPass ? kExitOk : kExitOther;
}

int cmdKernel(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const EnsembleSpec spec =
        EnsembleSpec::make(cfg.problem, cfg.transition, cfg.ensemble.n, cfg.ensemble.rounding);
    const KernelEvaluator ke(spec, cfg.ensemble.basis);
    const auto [lo, hi] = ke.envelope();
    const int points = cfg.solver.gridCells;
    std::vector<double> xs(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
        xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
    const auto rho = meanDensityCurve(ke, xs);

    CsvTable t;
    t.header = {"x", "kxx_over_n"};
    for (std::size_t i = 0; i < xs.size(); ++i)
        t.addRow({formatDouble(xs[i]), formatDouble(rho[i])});
    writeCsv(join(cfg.outDir, "kernel_diag.csv"), t);

    const double total = integrateKernelDiagonal(ke);
    std::cout << "n = " << spec.n() << ", integral of K(x,x) = " << total
              << ", log10 cond = " << ke.log10Condition() << "\n";
    return kExitOk;
}

int cmdSample(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const EnsembleSpec spec =
        EnsembleSpec::make(cfg.problem, cfg.transition, cfg.ensemble.n, cfg.ensemble.rounding);
    const SampleResult res = samplePaths(spec, cfg.ensemble.timeSteps, cfg.ensemble.seed,
                                         cfg.ensemble.bundles, 100000000, cfg.ensemble.sampler);

    // first bundle as trajectory data
    CsvTable paths;
    paths.header = {"path_id", "time", "x"};
    const PathBundle& pb = res.bundles.front();
    for (int pi = 0; pi < pb.positions.rows(); ++pi)
        for (std::size_t s = 0; s < pb.times.size(); ++s)
            paths.addRow({std::to_string(pi + 1), formatDouble(pb.times[s]),
                          formatDouble(pb.positions(pi, static_cast<int>(s)))});
    writeCsv(join(cfg.outDir, "paths.csv"), paths);

    CsvTable stats;
    stats.header = {"accepted", "rejected", "seed"};
    stats.addRow({std::to_string(res.stats.accepted), std::to_string(res.stats.rejected),
                  std::to_string(res.stats.seed)});
    writeCsv(join(cfg.outDir, "sampler_stats.csv"), stats);

    std::cout << "accepted " << res.stats.accepted << " bundles, rejected " << res.stats.rejected
              << " attempts\n";
    return kExitOk;
}

int cmdCompare(const CliOverrides& o) {
    const RunConfig cfg = loadConfig(o);
    const EquilibriumSolution sol =
        readSolution(join(cfg.outDir, "densities.csv"), join(cfg.outDir, "supports.csv"));

    std::vector<std::int64_t> ns = {4, 8, 16};
    if (o.n) ns = {*o.n / 4, *o.n / 2, *o.n};

    CsvTable t;
    t.header = {"n", "l1_distance"};
    for (const std::int64_t n : ns) {
        const EnsembleSpec spec =
            EnsembleSpec::make(cfg.problem, cfg.transition, n, RoundingMode::LargestRemainder);
        const KernelEvaluator ke(spec, cfg.ensemble.basis);
        auto [lo, hi] = ke.envelope();
        for (const auto& s : sol.supports) {
            lo = std::min(lo, s.alpha);
            hi = std::max(hi, s.beta);
        }
        const int points = 2000;
        double l1 = 0.0;
        const double h = (hi - lo) / points;
        for (int i = 0; i < points; ++i) {
            const double x = lo + (i + 0.5) * h;
            l1 += std::abs(ke(x, x) / static_cast<double>(n) - totalDensity(sol, x)) * h;
        }
        t.addRow({std::to_string(n), formatDouble(l1)});
        std::cout << "n = " << n << ": L1 distance " << l1 << "\n";
    }
    writeCsv(join(cfg.outDir, "compare.csv"), t);
    return kExitOk;
}

int dispatch(const std::string& cmd, const CliOverrides& o) {
    try {
        if (cmd == "validate") return cmdValidate(o);
        if (cmd == "solve") return cmdSolve(o);
        if (cmd == "spectral") return cmdSpectral(o);
        if (cmd == "kernel") return cmdKernel(o);
        if (cmd == "sample") return cmdSample(o);
        if (cmd == "compare") return cmdCompare(o);
        std::cerr << "unknown command " << cmd << "\n";
        return kExitOther;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const MaxIterationsExceeded& e) {
        std::cerr << "iteration budget: " << e.what() << "\n";
        return kExitMaxIterations;
    } catch (const IllConditioned& e) {
        std::cerr << "conditioning: " << e.what() << "\n";
        return kExitIllConditioned;
    } catch (const RejectionBudgetExhausted& e) {
        std::cerr << "rejection budget: " << e.what() << "\n";
        return kExitRejectionBudget;
    } catch (const QuadratureBudgetExhausted& e) {
        std::cerr << "quadrature budget: " << e.what() << "\n";
        return kExitQuadratureBudget;
    } catch (const OnCutWithoutSide& e) {
        std::cerr << "spectral: " << e.what() << "\n";
        return kExitSpectral;
    } catch (const ContourIntersectsSupport& e) {
        std::cerr << "spectral: " << e.what() << "\n";
        return kExitSpectral;
    } catch (const ResolutionTooCoarse& e) {
        std::cerr << "spectral: " << e.what() << "\n";
        return kExitSpectral;
    } catch (const SingularTreeSystem& e) {
        std::cerr << "spectral: " << e.what() << "\n";
        return kExitSpectral;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitOther;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-intersecting Brownian motions: equilibrium, spectral, and finite-n tools"};
    app.require_subcommand(1);

    CliOverrides o;
    app.add_option("--config", o.configPath, "run configuration file")->required();
    std::string outDir;
    double tol = 0.0;
    int grid = 0;
    std::int64_t seed = 0, n = 0;
    auto* optOut = app.add_option("--out", outDir, "output directory (overrides config)");
    auto* optTol = app.add_option("--tol", tol, "solver tolerance override");
    auto* optGrid = app.add_option("--grid", grid, "grid cells override");
    auto* optSeed = app.add_option("--seed", seed, "RNG seed override");
    auto* optN = app.add_option("--n", n, "ensemble size override");

    std::string cmd;
    for (const char* name : {"validate", "solve", "spectral", "kernel", "sample", "compare"}) {
        auto* sub = app.add_subcommand(name, name);
        sub->callback([&cmd, name] { cmd = name; });
    }

    CLI11_PARSE(app, argc, argv);
    if (*optOut) o.outDir = outDir;
    if (*optTol) o.tol = tol;
    if (*optGrid) o.grid = grid;
    if (*optSeed) o.seed = seed;
    if (*optN) o.n = n;

    return dispatch(cmd, o);
}
