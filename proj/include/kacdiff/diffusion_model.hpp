#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kacdiff/assumptions.hpp"
#include "kacdiff/grid_function.hpp"
#include "kacdiff/quadrature.hpp"

namespace kacdiff {

/// Coefficients of dX = beta(X) dt + sigma(X) dW.
struct DiffusionSpec {
    RealFunction drift;
    RealFunction diffusion;
    /// Canonical text used for hashing and report headers.
    std::string description;
    /// Free-text note that local Lipschitz continuity and linear growth hold.
    /// Not checked.
    std::string lipschitz_note;

    static DiffusionSpec brownian();
    static DiffusionSpec ornstein_uhlenbeck(double theta);
    /// beta(x) = -theta x / (1 + x^2), sigma = 1.
    static DiffusionSpec bounded_drift(double theta);

    /// Spec of Y = -X.
    DiffusionSpec reflected() const;
};

/// Scale/speed machinery for one diffusion. Immutable after construction and
/// safe to share across threads.
///
///     s(x) = exp(-2 int_0^x beta / sigma^2),   S(x) = int_0^x s (signed),
///     m(x) = 2 / (sigma^2(x) s(x)).
///
/// log s is evaluated from precomputed anchors at +-2^k so that points far
/// out on the line cost one short quadrature.
class DiffusionModel {
public:
    explicit DiffusionModel(DiffusionSpec spec, QuadratureConfig quadrature = {});

    const DiffusionSpec& spec() const noexcept { return spec_; }
    const QuadratureConfig& quadrature() const noexcept { return quadrature_; }

    double drift(double x) const { return spec_.drift(x); }
    double diffusion(double x) const { return spec_.diffusion(x); }
    /// sigma(x)^2; throws DomainError if it is not strictly positive.
    double sigma_squared(double x) const;
    /// d/dx log s(x) = -2 beta(x) / sigma(x)^2.
    double log_scale_slope(double x) const;

    double log_scale_density(double x) const;
    double scale_density(double x) const;
    double scale_function(double x) const;
    double speed_density(double x) const;

    DiffusionModel reflected() const;

private:
    double integrate_slope(double lo, double hi) const;

    DiffusionSpec spec_;
    QuadratureConfig quadrature_;
    QuadratureConfig tight_;
    std::vector<double> right_anchors_;  // log s(2^k)
    std::vector<double> left_anchors_;   // log s(-2^k)
    std::string right_failure_;
    std::string left_failure_;
};

/// Hermite-cubic cache of log s on [lo, hi] with exact node slopes, plus the
/// scale function at the nodes. Points outside the cache fall back to the
/// model. Holds a reference to `model`, which must outlive it.
class ScaleCache {
public:
    static constexpr std::size_t kDefaultNodes = 2048;

    ScaleCache(const DiffusionModel& model, double lo, double hi, std::size_t nodes = kDefaultNodes);
    ScaleCache(const DiffusionModel& model, std::vector<double> nodes);

    double log_scale_density(double x) const;
    double scale_density(double x) const;
    double scale_function(double x) const;
    double speed_density(double x) const;

    double lo() const { return log_s_.front(); }
    double hi() const { return log_s_.back(); }
    const DiffusionModel& model() const { return *model_; }
    const GridFunction& log_scale() const { return log_s_; }

private:
    void build(std::vector<double> nodes);
    bool inside(double x) const { return x >= lo() && x <= hi(); }

    const DiffusionModel* model_;
    GridFunction log_s_;
    std::vector<double> scale_at_nodes_;
};

enum class Recurrence { Transient, NullRecurrent, PositiveRecurrent };

std::string to_string(Recurrence r);

struct RecurrenceReport {
    Recurrence kind = Recurrence::Transient;
    /// Total speed mass M; +inf unless positive recurrent.
    double speed_mass = 0.0;
    double speed_mass_error = 0.0;
    bool scale_divergent_right = false;
    bool scale_divergent_left = false;
    /// The verdict is numerical: tails were probed up to this distance.
    double probe_limit = 0.0;
    double anchor = 0.0;

    std::string summary() const;
};

/// Classifies by the divergence of S at +-inf and finiteness of M. Ray
/// integrals are anchored at `anchor` (the scale function itself is always
/// anchored at 0). Throws Inconclusive when a tail cannot be decided within
/// probe_limit.
RecurrenceReport classify_recurrence(const DiffusionModel& model, double probe_limit = 1e6,
                                     double anchor = 0.0);

/// Normalized speed measure mu(dx) = m(x) dx / M.
class InvariantMeasure {
public:
    InvariantMeasure(const DiffusionModel& model, const RecurrenceReport& report);

    double density(double x) const { return model_->speed_density(x) / mass_; }
    double mass() const noexcept { return mass_; }
    /// mu([lo, hi]).
    double probability(double lo, double hi) const;
    const DiffusionModel& model() const { return *model_; }

private:
    const DiffusionModel* model_;
    double mass_;
};

/// m(x)/M; throws NotPositiveRecurrent unless the report says so.
double invariant_density(const DiffusionModel& model, const RecurrenceReport& report, double x);

struct InequalityCheck {
    std::string name;
    bool passed = true;
    /// Probe point with the smallest margin, and that margin (negative when
    /// violated).
    double worst_x = 0.0;
    double worst_margin = 0.0;
    int probes = 0;
};

struct AssumptionReport {
    std::vector<InequalityCheck> checks;
    std::optional<PStarBracket> p_star;
    bool floor_holds = false;
    bool ceiling_holds = false;

    bool all_passed() const;
    std::string summary() const;
};

/// Evaluates the floor/ceiling inequalities at every probe point with
/// |x| > M0. Never throws for failing inequalities; the report carries them.
AssumptionReport check_assumptions(const DiffusionModel& model, const AssumptionParams& params,
                                   const std::vector<double>& probe_grid);

/// Symmetric geometric probe grid on M0 < |x| <= limit.
std::vector<double> default_probe_grid(double M0, double limit, int per_side = 200);

}  // namespace kacdiff
