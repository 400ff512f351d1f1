#pragma once

#include <stdexcept>
#include <string>

namespace nibm {

// Error taxonomy shared by the library and the CLI exit-code mapping.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// transition-graph
struct InvalidConfig : Error { using Error::Error; };
struct NotConnected : Error { using Error::Error; };
struct AntiDiagonalClash : Error { using Error::Error; };
struct ZeroRowOrColumn : Error { using Error::Error; };
struct NonIntegerCounts : Error { using Error::Error; };

// equilibrium
struct MaxIterationsExceeded : Error { using Error::Error; };
struct SupportSplitDetected : Error { using Error::Error; };
struct InsufficientResolution : Error { using Error::Error; };

// spectral
struct OnCutWithoutSide : Error { using Error::Error; };
struct ContourIntersectsSupport : Error { using Error::Error; };
struct SingularTreeSystem : Error { using Error::Error; };
struct ResolutionTooCoarse : Error { using Error::Error; };

// ensemble
struct IllConditioned : Error { using Error::Error; };
struct RejectionBudgetExhausted : Error { using Error::Error; };
struct QuadratureBudgetExhausted : Error { using Error::Error; };

// cli / io
struct ParseError : Error { using Error::Error; };
struct MissingArtifact : Error { using Error::Error; };

} // namespace nibm
