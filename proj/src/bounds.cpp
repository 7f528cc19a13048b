#include "kacdiff/bounds.hpp"

#include <cmath>
#include <sstream>

#include "kacdiff/errors.hpp"
#include "kacdiff/io.hpp"

namespace kacdiff {

namespace {

std::string num(double v) { return format_number(v); }

void check_bracket(const char* name, const IntegralBracket& b, double error) {
    const double slack = error + 1e-9 * std::max(std::abs(b.upper), std::abs(b.value));
    if (b.value < b.lower - slack || b.value > b.upper + slack)
        throw QuadratureFailure(std::string(name) + " = " + num(b.value) + " outside its bracket [" + num(b.lower) +
                                ", " + num(b.upper) + "]");
}

double require(const std::optional<double>& v, const char* what) {
    if (!v) throw MissingMoments(std::string("deviation bound needs ") + what);
    return *v;
}

double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

}  // namespace

IntegralBracket power_integral_I(double p, double q, double x, double a, const QuadratureConfig& cfg) {
    if (!(a > 0.0) || !(x >= a)) throw DomainError("I_{p,q}(x, a) needs 0 < a <= x");
    if (!(p >= 0.0)) throw DomainError("I_{p,q} needs p >= 0");
    if (!(p < q - 1.0)) throw DomainError("I_{p,q} diverges unless p < q - 1 (p = " + num(p) + ", q = " + num(q) + ")");
    IntegralBracket out;
    const double gap = q - p - 1.0;
    out.lower = std::pow(x - a, p + 1.0) / (gap * std::pow(x, q));
    out.upper = std::pow(x, p + 1.0) / (gap * std::pow(x, q));
    auto f = [&](double xi) { return std::pow(xi - a, p) * std::pow(xi, -q); };
    auto ray = integrate_semi_infinite(f, x, Direction::PositiveInfinity, cfg);
    if (ray.divergent()) throw QuadratureFailure("I_{p,q} ray reported divergent for an admissible (p, q)");
    out.value = ray.result.value;
    check_bracket("I_{p,q}", out, ray.result.error_estimate);
    return out;
}

IntegralBracket power_integral_J(double p, double q, double x, double a, const QuadratureConfig& cfg) {
    if (!(a > 0.0) || !(x >= a)) throw DomainError("J_{p,q}(x, a) needs 0 < a <= x");
    if (!(p >= 0.0)) throw DomainError("J_{p,q} needs p >= 0");
    if (!(q < p + 1.0)) throw DomainError("J_{p,q} bound needs q < p + 1 (p = " + num(p) + ", q = " + num(q) + ")");
    IntegralBracket out;
    const double kappa = q > 0.0 ? p + 1.0 : p + 1.0 - q;
    out.lower = std::pow(x - a, p + 1.0) / (kappa * std::pow(x, q));
    out.upper = std::pow(x, p + 1.0) / ((p + 1.0 - q) * std::pow(x, q));
    auto f = [&](double xi) { return std::pow(xi - a, p) * std::pow(xi, -q); };
    auto r = integrate_finite(f, a, x, cfg);
    out.value = r.value;
    check_bracket("J_{p,q}", out, r.error_estimate);
    return out;
}

MomentBoundParams MomentBoundParams::from(const AssumptionParams& a, double order) {
    MomentBoundParams p;
    p.floor = a.floor;
    p.ceiling = a.ceiling;
    p.order = order;
    return p;
}

double upper_bound_order_limit(const RestoringFloor& floor) {
    return (2.0 * floor.r + 1.0) / (2.0 * (1.0 - floor.gamma));
}

double upper_bound_constant(const RestoringFloor& f, double m) {
    if (!(f.gamma < 1.0) || !(f.sigma0 > 0.0) || !(f.r > 0.0)) throw DomainError("invalid restoring floor");
    if (!(2.0 * f.r + 2.0 * f.gamma > 1.0))
        throw RangeError("upper moment bound needs 2r + 2 gamma > 1 (got " + num(2.0 * f.r + 2.0 * f.gamma) + ")");
    const double limit = upper_bound_order_limit(f);
    if (!(m >= 1.0 && m < limit))
        throw RangeError("upper moment bound needs 1 <= m < " + num(limit) + " (got m = " + num(m) + ")");
    const double whole = std::floor(m);
    const double alpha = m - whole;
    double r_m = std::pow(2.0 * f.r + 2.0 * f.gamma - 1.0, alpha);
    for (int k = 1; k <= static_cast<int>(whole); ++k) r_m *= 2.0 * f.r - 2.0 * (k + alpha) * (1.0 - f.gamma) + 1.0;
    if (!(r_m > 0.0)) throw RangeError("r_m = " + num(r_m) + " is not positive for m = " + num(m));
    return r_m;
}

double moment_upper_bound(const MomentBoundParams& params, double x) {
    if (!params.floor) throw DomainError("upper moment bound needs the restoring floor parameters");
    const auto& f = *params.floor;
    const double m = params.order;
    const double r_m = upper_bound_constant(f, m);
    if (!(x > 0.0)) throw DomainError("upper moment bound needs x > 0");
    return std::pow(x, 2.0 * m * (1.0 - f.gamma)) /
           (r_m * std::pow(f.sigma0, 2.0 * m) * std::pow(1.0 - f.gamma, m));
}

double lower_bound_order_limit(const RestoringCeiling& c, std::optional<double> p_star) {
    const double ps = p_star ? *p_star : 2.0 * c.R + 2.0 * c.delta - 1.0;
    return ps / (2.0 * (1.0 - c.delta)) + 1.0;
}

double lower_bound_constant(const RestoringCeiling& c, int n) {
    double R_n = 1.0;
    for (int k = 1; k <= n; ++k) R_n *= 2.0 * c.R - 2.0 * k * (1.0 - c.delta) + 1.0;
    return R_n;
}

LowerBound moment_lower_bound(const MomentBoundParams& params, double x, double a) {
    if (!params.ceiling) throw DomainError("lower moment bound needs the restoring ceiling parameters");
    const auto& c = *params.ceiling;
    if (!(c.delta < 1.0) || !(c.sigma1 > 0.0) || !(c.R > 0.0)) throw DomainError("invalid restoring ceiling");
    const double m = params.order;
    if (!(m >= 1.0) || m != std::floor(m)) throw RangeError("lower moment bound needs an integer order n >= 1");
    if (!(a > 0.0) || !(x >= a)) throw DomainError("lower moment bound needs 0 < a <= x");
    const int n = static_cast<int>(m);
    LowerBound out;
    if (n > lower_bound_order_limit(c, params.p_star)) {
        out.infinite = true;
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }
    const double R_n = lower_bound_constant(c, n);
    if (!(R_n > 0.0))
        throw RangeError("R_n = " + num(R_n) + " is not positive for n = " + std::to_string(n) +
                         "; the parameters are inconsistent");
    if (x == a) return out;
    const double kappa = std::max(1.0, 1.0 - c.delta);
    out.value = std::pow(x - a, 2.0 * n) * std::pow(x, -2.0 * c.delta * n) /
                (R_n * std::pow(c.sigma1, 2.0 * n) * std::pow(kappa, n));
    return out;
}

PStarBracket p_star_bracket(const AssumptionParams& params) {
    if (!params.floor || !params.ceiling) throw DomainError("p* bracket needs both assumption blocks");
    PStarBracket b{2.0 * params.floor->r + 2.0 * params.floor->gamma - 1.0,
                   2.0 * params.ceiling->R + 2.0 * params.ceiling->delta - 1.0};
    if (b.lo > b.hi)
        throw InconsistentParams("p* bracket is empty: " + num(b.lo) + " > " + num(b.hi));
    return b;
}

// ---------------------------------------------------------------------------

double default_bdg_constant(double p) {
    if (!(p > 1.0)) throw DomainError("BDG constant needs p > 1");
    const double q = p / (p - 1.0);
    return q * (std::max(p, q) - 1.0);
}

void DeviationConstants::validate() const {
    if (!(l > 0.0) || !std::isfinite(l)) throw DomainError("deviation constants need l > 0");
    if (!(p > 1.0)) throw DomainError("deviation constants need p > 1");
    if (!(bdg_constant() > 0.0)) throw DomainError("BDG constant must be positive");
    for (const auto* v : {&e_abs_r1_minus_inv_l, &e_r1_half, &e_abs_eta, &e_a_r1_p, &e_abs_r2_minus_r1})
        if (*v && !(**v >= 0.0)) throw DomainError("moment inputs must be nonnegative");
}

std::string to_string(Regime r) { return r == Regime::Quadratic ? "p>=2" : "1<p<2"; }

Regime regime_of(double p) {
    if (!(p > 1.0)) throw DomainError("deviation bounds need p > 1");
    return p >= 2.0 ? Regime::Quadratic : Regime::Subquadratic;
}

double time_exponent(double p) { return regime_of(p) == Regime::Quadratic ? 0.5 * p : 0.5 * (p - 1.0); }

double nt_constant(const DeviationConstants& c) {
    c.validate();
    const double p = c.p;
    const double first = std::pow(2.0, 0.5 * p) * require(c.e_abs_r1_minus_inv_l, "E|R_1 - 1/l|^{p/2}");
    const double Cp = std::pow(c.bdg_constant(), p) * require(c.e_abs_eta, "E|R_2 - R_1 - 1/l|^p");
    if (regime_of(p) == Regime::Quadratic) return first + std::pow(2.0, 1.5 * p) * Cp * std::pow(c.l, 0.5 * p);
    return first + std::pow(2.0, 0.5 * (3.0 * p + 1.0)) * Cp * std::pow(c.l, 0.5 * (p + 1.0));
}

double nt_deviation_bound(const DeviationConstants& c, double t, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw RangeError("N_t deviation bound needs 0 < eps < 1");
    if (!(t > 0.0)) throw DomainError("t must be positive");
    if (regime_of(c.p) == Regime::Subquadratic && t < 1.0) throw RangeError("1 < p < 2 needs t >= 1");
    return nt_constant(c) * std::pow(eps, -c.p) * std::pow(t, -time_exponent(c.p));
}

DeviationBound ergodic_bound_sup(const DeviationConstants& c, double t, double eps, double f_sup) {
    if (!(eps > 0.0 && eps < f_sup))
        throw RangeError("sup-norm bound needs 0 < eps < ||f|| (eps = " + num(eps) + ", ||f|| = " + num(f_sup) + ")");
    if (!(t >= 1.0)) throw RangeError("deviation bounds need t >= 1");
    c.validate();
    const double p = c.p;
    DeviationBound out;
    out.regime = regime_of(p);
    const double scale = std::pow(f_sup / eps, p) * std::pow(t, -time_exponent(p));
    const double Cp = std::pow(c.bdg_constant(), p);
    double KB = Cp * std::pow(12.0, p) * std::pow(c.l, 0.5 * p) * require(c.e_abs_r2_minus_r1, "E|R_2 - R_1|^p");
    if (out.regime == Regime::Subquadratic) KB *= std::sqrt(2.0 * c.l);
    out.A = std::pow(6.0, 0.5 * p) * require(c.e_r1_half, "E R_1^{p/2}") * scale;
    out.B = KB * scale;
    out.C = std::pow(2.0, p + 1.0) * c.l * std::pow(3.0, p) * require(c.e_a_r1_p, "E_a R_1^p") * scale;
    out.D = nt_constant(c) * scale;
    out.value = out.A + out.B + out.C + out.D + out.E;
    return out;
}

DeviationBound ergodic_bound_l1(const DeviationConstants& c, double t, double eps, double mu_abs_f, double C_f,
                                std::optional<double> mu_f) {
    if (!(eps > 0.0 && eps < mu_abs_f))
        throw RangeError("L1 bound needs 0 < eps < mu(|f|) (eps = " + num(eps) + ", mu(|f|) = " + num(mu_abs_f) + ")");
    if (!(t >= 1.0)) throw RangeError("deviation bounds need t >= 1");
    if (!(C_f >= 0.0)) throw DomainError("C_f must be nonnegative");
    c.validate();
    const double p = c.p;
    if (p != std::floor(p) || p < 2.0) throw RangeError("L1 bound needs an integer p >= 2");
    const double signed_mu = mu_f ? *mu_f : mu_abs_f;
    if (std::abs(signed_mu) > mu_abs_f * (1.0 + 1e-12)) throw DomainError("|mu(f)| cannot exceed mu(|f|)");
    const int n = static_cast<int>(p);
    DeviationBound out;
    out.regime = Regime::Quadratic;
    const double scale = std::pow(mu_abs_f / eps, p) * std::pow(t, -0.5 * p);
    const double ratio = std::pow(C_f / mu_abs_f, p);
    const double pf = factorial(n);
    const double Cp = std::pow(c.bdg_constant(), p);
    out.A = pf * std::pow(4.0, p) * ratio * scale;
    out.B = Cp * std::pow(8.0, p) * std::pow(1.25 * c.l, 0.5 * p) *
            (pf * ratio + std::pow(std::abs(signed_mu) / (c.l * mu_abs_f), p)) * scale;
    out.C = 1.25 * c.l * pf * std::pow(4.0, p) * ratio * scale;
    out.D = std::pow(4.0, p) * nt_constant(c) * scale;
    out.E = 0.0;
    out.value = out.A + out.B + out.C + out.D + out.E;
    return out;
}

std::string HypothesisReport::summary() const {
    std::ostringstream os;
    os << "sup-norm bound hypotheses: " << (sup_norm_admissible ? "hold" : "fail");
    if (!sup_norm_admissible) {
        if (!p_above_one) os << " [p <= 1]";
        if (!floor_present) os << " [no restoring floor]";
        if (floor_present && !recurrence_condition) os << " [2r + 2 gamma <= 1]";
        if (floor_present && !p_in_range) os << " [p >= " << num(p_limit) << "]";
        if (!nu_moment_finite) os << " [initial-law moment not finite]";
    }
    os << "\nL1 bound hypotheses: " << (l1_admissible ? "hold" : "fail");
    if (!l1_admissible) {
        if (floor_present && !l1_condition) os << " [2r + 4 gamma <= 3]";
        if (!p_integer) os << " [p not an integer >= 2]";
    }
    os << "\n";
    return os.str();
}

HypothesisReport deviation_hypotheses(const AssumptionParams& params, double p, double nu_moment) {
    HypothesisReport r;
    r.p_above_one = p > 1.0;
    r.nu_moment_finite = std::isfinite(nu_moment) && nu_moment >= 0.0;
    r.floor_present = params.floor.has_value();
    if (r.floor_present) {
        const auto& f = *params.floor;
        r.recurrence_condition = 2.0 * f.r + 2.0 * f.gamma > 1.0;
        r.p_limit = upper_bound_order_limit(f);
        r.p_in_range = p < r.p_limit;
        r.l1_condition = 2.0 * f.r + 4.0 * f.gamma > 3.0;
    }
    r.p_integer = p >= 2.0 && p == std::floor(p);
    r.sup_norm_admissible =
        r.p_above_one && r.floor_present && r.recurrence_condition && r.p_in_range && r.nu_moment_finite;
    r.l1_admissible = r.floor_present && r.l1_condition && r.p_integer && r.p_in_range && r.nu_moment_finite;
    return r;
}

}  // namespace kacdiff
