#pragma once

// Adaptive one-dimensional quadrature: Gauss-Kronrod 7/15 panels with
// worst-panel bisection on finite intervals, and dyadic block marching with
// geometric tail extrapolation on rays.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "kacdiff/errors.hpp"

namespace kacdiff {

using RealFunction = std::function<double(double)>;

struct QuadratureConfig {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int max_subdivisions = 2000;
    /// A ray integral whose partial sum exceeds this while still growing is
    /// declared divergent.
    double divergence_cap = 1e12;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
            throw DomainError("quadrature tolerances must be positive");
        if (max_subdivisions < 1) throw DomainError("max_subdivisions must be >= 1");
        if (!(divergence_cap > 0.0)) throw DomainError("divergence_cap must be positive");
    }
};

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    int subdivisions_used = 0;
    bool converged = true;
};

/// Subdivision budget exhausted before the error estimate met the tolerance.
class NonConvergence : public QuadratureFailure {
public:
    using QuadratureFailure::QuadratureFailure;
};

/// The integrand returned a non-finite value.
class EvaluationError : public QuadratureFailure {
public:
    using QuadratureFailure::QuadratureFailure;
};

enum class Direction { PositiveInfinity, NegativeInfinity };

enum class RayVerdict { Converged, Divergent };

struct RayResult {
    RayVerdict verdict = RayVerdict::Converged;
    QuadratureResult result;
    /// Distance from the anchor that was integrated before the verdict.
    double reach = 0.0;
    int blocks = 0;

    bool divergent() const noexcept { return verdict == RayVerdict::Divergent; }
};

namespace gk {

inline constexpr std::array<double, 8> kNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace gk

/// Single 15-point Kronrod panel with the embedded 7-point Gauss estimate;
/// the error estimate is |K15 - G7|.
template <class F>
QuadratureResult gauss_kronrod15(F&& f, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * gk::kKronrodWeights[7];
    double gauss = fc * gk::kGaussWeights[3];
    bool finite = std::isfinite(fc);
    for (int j = 0; j < 7; ++j) {
        const double dx = half * gk::kNodes[j];
        const double f1 = f(center - dx);
        const double f2 = f(center + dx);
        finite = finite && std::isfinite(f1) && std::isfinite(f2);
        kronrod += gk::kKronrodWeights[j] * (f1 + f2);
        if (j % 2 == 1) gauss += gk::kGaussWeights[j / 2] * (f1 + f2);
    }
    if (!finite)
        throw EvaluationError("integrand is not finite on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "]");
    QuadratureResult r;
    r.value = kronrod * half;
    r.error_estimate = std::abs((kronrod - gauss) * half);
    r.subdivisions_used = 1;
    return r;
}

/// Adaptive integration on [a, b]. Never throws on budget exhaustion; the
/// `converged` flag reports it.
template <class F>
QuadratureResult adaptive_integrate(F&& f, double a, double b, const QuadratureConfig& cfg) {
    QuadratureResult total;
    if (a == b) return total;
    if (!(a < b)) throw DomainError("integration bounds must satisfy a <= b");

    struct Panel {
        double lo, hi, value, error;
        bool operator<(const Panel& other) const { return error < other.error; }
    };
    std::priority_queue<Panel> heap;
    auto first = gauss_kronrod15(f, a, b);
    heap.push({a, b, first.value, first.error_estimate});
    double value = first.value;
    double error = first.error_estimate;
    int panels = 1;

    auto target = [&] { return std::max(cfg.abs_tol, cfg.rel_tol * std::abs(value)); };
    while (error > target() && panels < cfg.max_subdivisions) {
        Panel worst = heap.top();
        const double mid = 0.5 * (worst.lo + worst.hi);
        // Panel can no longer be split in floating point.
        if (!(mid > worst.lo && mid < worst.hi)) break;
        heap.pop();
        auto left = gauss_kronrod15(f, worst.lo, mid);
        auto right = gauss_kronrod15(f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error_estimate + right.error_estimate - worst.error;
        heap.push({worst.lo, mid, left.value, left.error_estimate});
        heap.push({mid, worst.hi, right.value, right.error_estimate});
        ++panels;
    }
    // Re-sum to shed the drift of the running updates.
    value = 0.0;
    error = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        heap.pop();
    }
    total.value = value;
    total.error_estimate = error;
    total.subdivisions_used = panels;
    total.converged = error <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(value));
    return total;
}

/// Integral over [a, b] (a <= b). Throws NonConvergence when the subdivision
/// budget runs out.
template <class F>
QuadratureResult integrate_finite(F&& f, double a, double b, const QuadratureConfig& cfg) {
    auto r = adaptive_integrate(f, a, b, cfg);
    if (!r.converged)
        throw NonConvergence("quadrature on [" + std::to_string(a) + ", " + std::to_string(b) +
                             "] did not converge: error estimate " +
                             std::to_string(r.error_estimate) + " after " +
                             std::to_string(r.subdivisions_used) + " panels");
    return r;
}

struct RayOptions {
    /// Maximum distance from the anchor that may be probed.
    double reach = std::numeric_limits<double>::infinity();
    int max_blocks = 160;
    /// Divergence by stalled decay is only declared after this many blocks.
    int min_blocks_for_divergence = 12;
    /// Block-to-block ratio at or above 1 - stall_margin counts as stalled.
    double stall_margin = 1e-2;
};

/// Integral of f over [a, +inf) or (-inf, a].
///
/// Under u = a + w t/(1-t) the ray becomes t in [0, 1); the integration runs
/// over the dyadic t-panels [1 - 2^-k, 1 - 2^-(k+1)], i.e. x-blocks of doubling
/// length w 2^k, each integrated adaptively. Once successive block integrals
/// decay geometrically the remaining tail is extrapolated. The ray is declared
/// Divergent when the partial sum passes `divergence_cap` while still growing,
/// or when block integrals stop decaying (ratio >= 1 - stall_margin on three
/// consecutive blocks past `min_blocks_for_divergence`). Any other failure to
/// settle throws NonConvergence. An integrand value of +-inf is read as a
/// divergent block.
template <class F>
RayResult integrate_semi_infinite(F&& f, double a, Direction direction, const QuadratureConfig& cfg,
                                  const RayOptions& options = {}) {
    const double sign = direction == Direction::PositiveInfinity ? 1.0 : -1.0;
    const double width = std::max(1.0, std::abs(a));
    // An integrand that overflows to +-inf makes the block integral infinite.
    int overflow = 0;
    auto oriented = [&](double x) {
        const double v = f(x);
        if (std::isinf(v)) {
            overflow = v > 0 ? 1 : -1;
            return 0.0;
        }
        return v;
    };

    RayResult out;
    double partial = 0.0;
    double error = 0.0;
    double previous_block = 0.0;
    double previous_estimate = std::numeric_limits<double>::quiet_NaN();
    int stalled = 0;
    int panels = 0;
    double previous_ratio = std::numeric_limits<double>::quiet_NaN();

    for (int k = 0; k < options.max_blocks; ++k) {
        const double d0 = width * (std::ldexp(1.0, k) - 1.0);
        const double d1 = width * (std::ldexp(1.0, k + 1) - 1.0);
        if (d0 > options.reach || !std::isfinite(d1)) break;
        const double lo = sign > 0 ? a + d0 : a - d1;
        const double hi = sign > 0 ? a + d1 : a - d0;
        auto block = adaptive_integrate(oriented, lo, hi, cfg);
        panels += block.subdivisions_used;
        if (overflow != 0) {
            out.verdict = RayVerdict::Divergent;
            out.reach = d1;
            out.blocks = k + 1;
            out.result = {overflow * std::numeric_limits<double>::infinity(), error, panels, false};
            return out;
        }
        if (!block.converged)
            throw NonConvergence("ray quadrature block [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + "] did not converge");
        const double d = block.value;
        partial += d;
        error += block.error_estimate;
        out.reach = d1;
        out.blocks = k + 1;

        const bool growing = k > 0 && std::abs(d) > 0.0 && (d > 0) == (partial > 0);
        if (!std::isfinite(partial) || (std::abs(partial) > cfg.divergence_cap && growing)) {
            out.verdict = RayVerdict::Divergent;
            out.result = {partial, error, panels, false};
            return out;
        }

        double ratio = 0.0;
        if (k > 0) {
            if (previous_block == 0.0)
                ratio = d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
            else
                ratio = std::abs(d / previous_block);
        }
        const bool same_sign = k > 0 && (d >= 0) == (previous_block >= 0);
        if (k > 0 && same_sign && ratio >= 1.0 - options.stall_margin)
            ++stalled;
        else
            stalled = 0;
        if (stalled >= 3 && k + 1 >= options.min_blocks_for_divergence) {
            out.verdict = RayVerdict::Divergent;
            out.result = {partial, error, panels, false};
            return out;
        }

        double tail = 0.0;
        const bool geometric = k >= 2 && same_sign && ratio < 1.0 - options.stall_margin &&
                               std::abs(ratio - previous_ratio) <= 0.25 * (1.0 - ratio);
        if (geometric) tail = d * ratio / (1.0 - ratio);
        const double estimate = partial + tail;
        const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(estimate));
        if (k >= 3 && ratio < 1.0 - options.stall_margin &&
            std::abs(estimate - previous_estimate) <= tol && std::abs(tail) <= std::abs(partial) + tol) {
            out.verdict = RayVerdict::Converged;
            out.result = {estimate, error + std::abs(estimate - previous_estimate), panels, true};
            return out;
        }
        previous_estimate = estimate;
        previous_block = d;
        previous_ratio = ratio;
    }
    throw NonConvergence("ray integral from " + std::to_string(a) +
                         " neither converged nor diverged within distance " +
                         std::to_string(out.reach));
}

/// Integral over the whole line as the sum of the two rays anchored at
/// `center`; Divergent if either ray is.
template <class F>
RayResult integrate_real_line(F&& f, const QuadratureConfig& cfg, const RayOptions& options = {},
                              double center = 0.0) {
    auto right = integrate_semi_infinite(f, center, Direction::PositiveInfinity, cfg, options);
    auto left = integrate_semi_infinite(f, center, Direction::NegativeInfinity, cfg, options);
    RayResult out;
    out.verdict = right.divergent() || left.divergent() ? RayVerdict::Divergent : RayVerdict::Converged;
    out.result.value = right.result.value + left.result.value;
    out.result.error_estimate = right.result.error_estimate + left.result.error_estimate;
    out.result.subdivisions_used = right.result.subdivisions_used + left.result.subdivisions_used;
    out.result.converged = !out.divergent();
    out.reach = std::max(right.reach, left.reach);
    out.blocks = right.blocks + left.blocks;
    return out;
}

}  // namespace kacdiff
