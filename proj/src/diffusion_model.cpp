#include "kacdiff/diffusion_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kacdiff/errors.hpp"

namespace kacdiff {

namespace {

constexpr int kAnchorLevels = 200;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

void AssumptionParams::validate() const {
    if (!(M0 > 0.0)) throw DomainError("M0 must be positive");
    if (floor) {
        if (!(floor->sigma0 > 0.0)) throw DomainError("sigma0 must be positive");
        if (!(floor->r > 0.0)) throw DomainError("r must be positive");
        if (!(floor->gamma < 1.0)) throw DomainError("gamma must be < 1");
    }
    if (ceiling) {
        if (!(ceiling->sigma1 > 0.0)) throw DomainError("sigma1 must be positive");
        if (!(ceiling->R > 0.0)) throw DomainError("R must be positive");
        if (!(ceiling->delta < 1.0)) throw DomainError("delta must be < 1");
    }
}

DiffusionSpec DiffusionSpec::brownian() {
    return {[](double) { return 0.0; }, [](double) { return 1.0; }, "brownian", ""};
}

DiffusionSpec DiffusionSpec::ornstein_uhlenbeck(double theta) {
    return {[theta](double x) { return -theta * x; }, [](double) { return 1.0; },
            "ou(" + fmt(theta) + ")", ""};
}

DiffusionSpec DiffusionSpec::bounded_drift(double theta) {
    return {[theta](double x) { return -theta * x / (1.0 + x * x); }, [](double) { return 1.0; },
            "bounded_drift(" + fmt(theta) + ")", ""};
}

DiffusionSpec DiffusionSpec::reflected() const {
    DiffusionSpec out;
    out.drift = [b = drift](double x) { return -b(-x); };
    out.diffusion = [s = diffusion](double x) { return s(-x); };
    out.description = "reflect(" + description + ")";
    out.lipschitz_note = lipschitz_note;
    return out;
}

DiffusionModel::DiffusionModel(DiffusionSpec spec, QuadratureConfig quadrature)
    : spec_(std::move(spec)), quadrature_(quadrature) {
    if (!spec_.drift || !spec_.diffusion) throw DomainError("diffusion spec needs both coefficients");
    quadrature_.validate();
    tight_ = quadrature_;
    tight_.rel_tol = std::min(quadrature_.rel_tol, 1e-12);
    tight_.abs_tol = std::min(quadrature_.abs_tol, 1e-14);

    auto extend = [&](std::vector<double>& anchors, std::string& failure, double sign) {
        try {
            double value = integrate_slope(0.0, sign);
            anchors.push_back(value);
            for (int k = 0; k < kAnchorLevels; ++k) {
                const double lo = std::ldexp(1.0, k), hi = std::ldexp(1.0, k + 1);
                value += sign > 0 ? integrate_slope(lo, hi) : -integrate_slope(-hi, -lo);
                if (!std::isfinite(value)) {
                    failure = "log scale density overflows beyond |x| = " + fmt(lo);
                    return;
                }
                anchors.push_back(value);
            }
        } catch (const Error& e) {
            failure = e.what();
        }
    };
    extend(right_anchors_, right_failure_, 1.0);
    extend(left_anchors_, left_failure_, -1.0);
}

double DiffusionModel::sigma_squared(double x) const {
    const double s = spec_.diffusion(x);
    const double s2 = s * s;
    if (!(s2 > 0.0) || !std::isfinite(s2))
        throw DomainError("diffusion coefficient vanishes or is not finite at x = " + fmt(x));
    return s2;
}

double DiffusionModel::log_scale_slope(double x) const { return -2.0 * spec_.drift(x) / sigma_squared(x); }

double DiffusionModel::integrate_slope(double lo, double hi) const {
    auto g = [this](double u) { return log_scale_slope(u); };
    if (lo <= hi) return integrate_finite(g, lo, hi, tight_).value;
    return -integrate_finite(g, hi, lo, tight_).value;
}

double DiffusionModel::log_scale_density(double x) const {
    if (std::isnan(x)) throw DomainError("log_scale_density: x is NaN");
    const double ax = std::abs(x);
    if (ax <= 1.0) return integrate_slope(0.0, x);
    const bool right = x > 0;
    const auto& anchors = right ? right_anchors_ : left_anchors_;
    const int k = std::ilogb(ax);
    if (k < 0 || static_cast<std::size_t>(k) >= anchors.size()) {
        const auto& failure = right ? right_failure_ : left_failure_;
        throw DomainError("x = " + fmt(x) + " is beyond the numerical range of the scale function" +
                          (failure.empty() ? std::string() : ": " + failure));
    }
    const double base = std::ldexp(1.0, k);
    return anchors[static_cast<std::size_t>(k)] + (right ? integrate_slope(base, x) : -integrate_slope(x, -base));
}

double DiffusionModel::scale_density(double x) const { return std::exp(log_scale_density(x)); }

double DiffusionModel::scale_function(double x) const {
    auto s = [this](double u) { return scale_density(u); };
    if (x >= 0.0) return integrate_finite(s, 0.0, x, quadrature_).value;
    return -integrate_finite(s, x, 0.0, quadrature_).value;
}

double DiffusionModel::speed_density(double x) const {
    const double s2 = sigma_squared(x);
    return 2.0 * std::exp(-log_scale_density(x)) / s2;
}

DiffusionModel DiffusionModel::reflected() const { return DiffusionModel(spec_.reflected(), quadrature_); }

// ---------------------------------------------------------------------------

ScaleCache::ScaleCache(const DiffusionModel& model, double lo, double hi, std::size_t nodes)
    : model_(&model) {
    if (!(hi > lo)) throw DomainError("ScaleCache: need lo < hi");
    if (nodes < 2) throw DomainError("ScaleCache: need at least two nodes");
    std::vector<double> xs(nodes);
    for (std::size_t i = 0; i < nodes; ++i)
        xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nodes - 1);
    xs.back() = hi;
    build(std::move(xs));
}

ScaleCache::ScaleCache(const DiffusionModel& model, std::vector<double> nodes) : model_(&model) {
    build(std::move(nodes));
}

void ScaleCache::build(std::vector<double> xs) {
    const std::size_t n = xs.size();
    if (n < 2) throw DomainError("ScaleCache: need at least two nodes");
    QuadratureConfig tight = model_->quadrature();
    tight.rel_tol = std::min(tight.rel_tol, 1e-12);
    tight.abs_tol = std::min(tight.abs_tol, 1e-14);

    std::vector<double> logs(n), slopes(n);
    logs[0] = model_->log_scale_density(xs[0]);
    auto g = [this](double u) { return model_->log_scale_slope(u); };
    for (std::size_t i = 0; i < n; ++i) {
        slopes[i] = g(xs[i]);
        if (i > 0) {
            if (!(xs[i] > xs[i - 1])) throw DomainError("ScaleCache: nodes must be increasing");
            logs[i] = logs[i - 1] + integrate_finite(g, xs[i - 1], xs[i], tight).value;
        }
    }
    log_s_ = GridFunction(xs, std::move(logs), std::move(slopes));

    scale_at_nodes_.resize(n);
    scale_at_nodes_[0] = model_->scale_function(xs[0]);
    auto s = [this](double u) { return std::exp(log_s_(u)); };
    for (std::size_t i = 1; i < n; ++i)
        scale_at_nodes_[i] = scale_at_nodes_[i - 1] + integrate_finite(s, xs[i - 1], xs[i], tight).value;
}

double ScaleCache::log_scale_density(double x) const {
    return inside(x) ? log_s_(x) : model_->log_scale_density(x);
}

double ScaleCache::scale_density(double x) const { return std::exp(log_scale_density(x)); }

double ScaleCache::scale_function(double x) const {
    if (!inside(x)) return model_->scale_function(x);
    const std::size_t i = log_s_.locate(x);
    const double x0 = log_s_.xs()[i];
    if (x == x0) return scale_at_nodes_[i];
    auto s = [this](double u) { return std::exp(log_s_(u)); };
    return scale_at_nodes_[i] + gauss_kronrod15(s, x0, x).value;
}

double ScaleCache::speed_density(double x) const {
    return 2.0 * std::exp(-log_scale_density(x)) / model_->sigma_squared(x);
}

// ---------------------------------------------------------------------------

std::string to_string(Recurrence r) {
    switch (r) {
        case Recurrence::Transient: return "Transient";
        case Recurrence::NullRecurrent: return "NullRecurrent";
        case Recurrence::PositiveRecurrent: return "PositiveRecurrent";
    }
    return "?";
}

std::string RecurrenceReport::summary() const {
    std::ostringstream os;
    os.precision(10);
    os << to_string(kind);
    if (kind == Recurrence::PositiveRecurrent) os << ", M=" << speed_mass;
    os << " (numerical, probed up to " << probe_limit << ")";
    return os.str();
}

RecurrenceReport classify_recurrence(const DiffusionModel& model, double probe_limit, double anchor) {
    if (!(probe_limit > 0.0)) throw DomainError("probe_limit must be positive");
    RecurrenceReport report;
    report.probe_limit = probe_limit;
    report.anchor = anchor;
    RayOptions options;
    options.reach = probe_limit;
    const auto& cfg = model.quadrature();

    auto ray = [&](auto&& f, Direction dir, const char* what) {
        try {
            return integrate_semi_infinite(f, anchor, dir, cfg, options);
        } catch (const QuadratureFailure& e) {
            throw Inconclusive(std::string(what) + " not resolved at probe limit " + fmt(probe_limit) +
                               ": " + e.what());
        }
    };

    auto s = [&](double x) { return model.scale_density(x); };
    report.scale_divergent_right = ray(s, Direction::PositiveInfinity, "scale function tail at +inf").divergent();
    report.scale_divergent_left = ray(s, Direction::NegativeInfinity, "scale function tail at -inf").divergent();
    if (!report.scale_divergent_right || !report.scale_divergent_left) {
        report.kind = Recurrence::Transient;
        report.speed_mass = std::numeric_limits<double>::infinity();
        return report;
    }

    auto m = [&](double x) { return model.speed_density(x); };
    auto right = ray(m, Direction::PositiveInfinity, "speed measure tail at +inf");
    auto left = ray(m, Direction::NegativeInfinity, "speed measure tail at -inf");
    if (right.divergent() || left.divergent()) {
        report.kind = Recurrence::NullRecurrent;
        report.speed_mass = std::numeric_limits<double>::infinity();
        return report;
    }
    report.kind = Recurrence::PositiveRecurrent;
    report.speed_mass = right.result.value + left.result.value;
    report.speed_mass_error = right.result.error_estimate + left.result.error_estimate;
    return report;
}

InvariantMeasure::InvariantMeasure(const DiffusionModel& model, const RecurrenceReport& report)
    : model_(&model), mass_(report.speed_mass) {
    if (report.kind != Recurrence::PositiveRecurrent || !std::isfinite(mass_) || !(mass_ > 0.0))
        throw NotPositiveRecurrent("invariant measure requires a positive recurrent diffusion (got " +
                                   to_string(report.kind) + ")");
}

double InvariantMeasure::probability(double lo, double hi) const {
    auto f = [this](double x) { return density(x); };
    if (lo > hi) std::swap(lo, hi);
    return integrate_finite(f, lo, hi, model_->quadrature()).value;
}

double invariant_density(const DiffusionModel& model, const RecurrenceReport& report, double x) {
    return InvariantMeasure(model, report).density(x);
}

// ---------------------------------------------------------------------------

bool AssumptionReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

std::string AssumptionReport::summary() const {
    std::ostringstream os;
    os.precision(8);
    for (const auto& c : checks) {
        os << c.name << ": " << (c.passed ? "pass" : "FAIL") << " (worst x=" << c.worst_x
           << ", margin=" << c.worst_margin << ", probes=" << c.probes << ")\n";
    }
    if (p_star) os << "p* bracket: [" << p_star->lo << ", " << p_star->hi << "]\n";
    return os.str();
}

AssumptionReport check_assumptions(const DiffusionModel& model, const AssumptionParams& params,
                                   const std::vector<double>& probe_grid) {
    params.validate();
    AssumptionReport report;

    auto scan = [&](const std::string& name, auto&& margin_of, bool strict) {
        InequalityCheck check;
        check.name = name;
        check.worst_margin = std::numeric_limits<double>::infinity();
        for (double x : probe_grid) {
            if (!(std::abs(x) > params.M0)) continue;
            double margin;
            try {
                margin = margin_of(x);
            } catch (const DomainError&) {
                margin = -std::numeric_limits<double>::infinity();
            }
            if (std::isnan(margin)) margin = -std::numeric_limits<double>::infinity();
            ++check.probes;
            if (margin < check.worst_margin) {
                check.worst_margin = margin;
                check.worst_x = x;
            }
        }
        check.passed = check.probes > 0 && (strict ? check.worst_margin > 0.0 : check.worst_margin >= 0.0);
        report.checks.push_back(check);
        return check.passed;
    };

    auto restoring = [&](double x) { return -x * model.drift(x) / model.sigma_squared(x); };

    if (params.floor) {
        const auto& f = *params.floor;
        const bool a = scan("floor: sigma0 |x|^gamma <= |sigma(x)|", [&](double x) {
            return std::abs(model.diffusion(x)) - f.sigma0 * std::pow(std::abs(x), f.gamma);
        }, false);
        const bool b = scan("floor: -x beta / sigma^2 >= r", [&](double x) { return restoring(x) - f.r; }, false);
        report.floor_holds = a && b;
    }
    if (params.ceiling) {
        const auto& c = *params.ceiling;
        const bool a = scan("ceiling: 0 < |sigma(x)| <= sigma1 |x|^delta", [&](double x) {
            const double s = std::abs(model.diffusion(x));
            if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
            return c.sigma1 * std::pow(std::abs(x), c.delta) - s;
        }, false);
        const bool b = scan("ceiling: 0 < -x beta / sigma^2 <= R", [&](double x) {
            const double v = restoring(x);
            if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
            return c.R - v;
        }, false);
        report.ceiling_holds = a && b;
    }
    if (params.floor && params.ceiling) {
        report.p_star = PStarBracket{2.0 * params.floor->r + 2.0 * params.floor->gamma - 1.0,
                                     2.0 * params.ceiling->R + 2.0 * params.ceiling->delta - 1.0};
    }
    return report;
}

std::vector<double> default_probe_grid(double M0, double limit, int per_side) {
    if (!(limit > M0) || per_side < 1) throw DomainError("probe grid needs limit > M0 and points");
    std::vector<double> out;
    const double lo = std::log(M0), hi = std::log(limit);
    for (int i = 1; i <= per_side; ++i) {
        const double x = std::exp(lo + (hi - lo) * i / per_side);
        out.push_back(-x);
        out.push_back(x);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace kacdiff
