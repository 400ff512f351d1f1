#include <benchmark/benchmark.h>

#include <nibm/config.hpp>
#include <nibm/ensemble.hpp>
#include <nibm/equilibrium.hpp>
#include <nibm/graph.hpp>
#include <nibm/spectral.hpp>

using namespace nibm;

namespace {

RunConfig semicircleConfig() {
    return parseRunConfigString(
        "[problem]\np = 1\nq = 1\na = 0\nb = 0\nt = 0.5\nT = 1\n"
        "[transition]\nrow = 1\n");
}

RunConfig threeBumpConfig() {
    return parseRunConfigString(
        "[problem]\np = 2\nq = 2\na = 1, -1\nb = 1, -1\nt = 0.5\nT = 0.05\n"
        "[transition]\nrow = 1/4, 1/4\nrow = 0, 1/2\n");
}

struct Solved {
    RunConfig cfg;
    PathTree tree;
    InteractionMatrix im;
    EquilibriumSolution sol;
};

const Solved& solvedSemicircle(int gridCells) {
    static Solved s = [gridCells] {
        Solved r{semicircleConfig(), {}, {}, {}};
        r.tree = buildTree(r.cfg.transition);
        r.im = interactionMatrix(r.tree);
        SolverSettings settings = r.cfg.solver;
        settings.gridCells = gridCells;
        r.sol = solveEquilibrium(r.cfg.problem, r.tree, r.im.A, settings);
        return r;
    }();
    return s;
}

void BM_EnergyAssembly(benchmark::State& state) {
    const RunConfig cfg = threeBumpConfig();
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    const ExternalFieldSet fields = ExternalFieldSet::fromProblem(cfg.problem, tree);
    const int cells = static_cast<int>(state.range(0));
    std::vector<ComponentGrid> grids;
    for (const double c : fields.centers) grids.push_back({c - 0.5, c + 0.5, cells});
    for (auto _ : state) {
        DiscreteEnergy e = assembleEnergy(fields, im.A, grids);
        benchmark::DoNotOptimize(e.Q.data());
    }
    state.SetComplexityN(cells);
}
BENCHMARK(BM_EnergyAssembly)->Arg(64)->Arg(128)->Arg(256)->Complexity(benchmark::oNSquared);

void BM_EquilibriumSolve(benchmark::State& state) {
    const RunConfig cfg = semicircleConfig();
    const PathTree tree = buildTree(cfg.transition);
    const InteractionMatrix im = interactionMatrix(tree);
    SolverSettings settings = cfg.solver;
    settings.gridCells = static_cast<int>(state.range(0));
    for (auto _ : state) {
        EquilibriumSolution sol = solveEquilibrium(cfg.problem, tree, im.A, settings);
        benchmark::DoNotOptimize(sol.energy);
    }
}
BENCHMARK(BM_EquilibriumSolve)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_CauchyTransformOnCut(benchmark::State& state) {
    const Solved& s = solvedSemicircle(512);
    double x = -0.7;
    for (auto _ : state) {
        const Complex v = cauchyTransform(s.sol, 0, x, Side::Above);
        benchmark::DoNotOptimize(v);
        x += 1e-4;
        if (x > 0.7) x = -0.7;
    }
}
BENCHMARK(BM_CauchyTransformOnCut);

void BM_CauchyTransformComplex(benchmark::State& state) {
    const Solved& s = solvedSemicircle(512);
    const Complex z(0.3, 0.4);
    for (auto _ : state) {
        const Complex v = cauchyTransform(s.sol, 0, z);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_CauchyTransformComplex);

void BM_KernelDiagonal(benchmark::State& state) {
    const RunConfig cfg = semicircleConfig();
    const EnsembleSpec spec = EnsembleSpec::make(cfg.problem, cfg.transition, state.range(0));
    const KernelEvaluator ke(spec);
    double x = -0.9;
    for (auto _ : state) {
        benchmark::DoNotOptimize(ke(x, x));
        x += 1e-3;
        if (x > 0.9) x = -0.9;
    }
}
BENCHMARK(BM_KernelDiagonal)->Arg(4)->Arg(8)->Arg(16);

void BM_SampleBundle(benchmark::State& state) {
    const RunConfig cfg = semicircleConfig();
    const EnsembleSpec spec = EnsembleSpec::make(cfg.problem, cfg.transition, 4);
    std::uint64_t seed = 1;
    for (auto _ : state) {
        SampleResult r = samplePaths(spec, 16, seed++, 10, 100000000, SamplerMode::Corrected);
        benchmark::DoNotOptimize(r.stats.accepted);
    }
}
BENCHMARK(BM_SampleBundle)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
