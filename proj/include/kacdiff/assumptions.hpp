#pragma once

#include <optional>

namespace kacdiff {

/// Lower control of the restoring force for |x| > M0:
///     sigma0 |x|^gamma <= |sigma(x)|   and   -x beta(x) / sigma(x)^2 >= r.
/// Guarantees hitting-time moments up to order (2r + 1) / (2 (1 - gamma)).
struct RestoringFloor {
    double sigma0 = 1.0;
    double gamma = 0.0;
    double r = 1.0;
};

/// Upper control of the restoring force for |x| > M0:
///     0 < |sigma(x)| <= sigma1 |x|^delta   and   0 < -x beta(x) / sigma(x)^2 <= R.
/// Forces infinite hitting-time moments beyond order (2R + 1) / (2 (1 - delta)).
struct RestoringCeiling {
    double sigma1 = 1.0;
    double delta = 0.0;
    double R = 1.0;
};

struct AssumptionParams {
    double M0 = 1.0;
    std::optional<RestoringFloor> floor;
    std::optional<RestoringCeiling> ceiling;

    /// Throws DomainError on nonpositive scales or exponents >= 1.
    void validate() const;
};

/// Bracket [2r + 2 gamma - 1, 2R + 2 delta - 1] for the critical tail
/// exponent p* of the speed measure.
struct PStarBracket {
    double lo = 0.0;
    double hi = 0.0;
};

}  // namespace kacdiff
