#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "nibm/ensemble.hpp"
#include "nibm/equilibrium.hpp"
#include "nibm/graph.hpp"

namespace nibm {

struct EnsembleSettings {
    std::int64_t n = 8;
    std::uint64_t seed = 1;
    int timeSteps = 256;
    std::int64_t bundles = 1000;
    BasisMode basis = BasisMode::Hermite;
    RoundingMode rounding = RoundingMode::Strict;
    SamplerMode sampler = SamplerMode::Corrected;
};

/// Parsed run configuration: sectioned key-value text, exact rationals for
/// the transition weights, unknown keys rejected.
struct RunConfig {
    ProblemConfig problem;
    TransitionMatrix transition;
    SolverSettings solver;
    EnsembleSettings ensemble;
    std::string outDir = "out";
};

/// Parses the text config format:
///
///   [problem]
///   p = 2
///   q = 2
///   a = 1, -1
///   b = 1, -1
///   t = 0.5
///   T = 0.05
///   [transition]
///   row = 1/3, 1/3
///   row = 0, 1/3
///   [solver] / [ensemble] / [output] sections optional.
///
/// Throws ParseError on malformed input or unknown keys, InvalidConfig on
/// value-level violations.
RunConfig parseRunConfig(std::istream& in);
RunConfig parseRunConfigFile(const std::string& path);
RunConfig parseRunConfigString(const std::string& text);

/// Exact rational from "num/den" or a plain integer string.
Rational parseRational(const std::string& text);

} // namespace nibm
