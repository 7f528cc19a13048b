#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kacdiff/assumptions.hpp"
#include "kacdiff/diffusion_model.hpp"
#include "kacdiff/quadrature.hpp"

namespace kacdiff {

// ---------------------------------------------------------------------------
// Power integrals and their closed-form brackets.

struct IntegralBracket {
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// I_{p,q}(x, a) = int_x^inf (xi - a)^p / xi^q dxi, for 0 < a <= x and
/// 0 <= p < q - 1, bracketed by
///     (x-a)^{p+1} / ((q-p-1) x^q)  <=  I  <=  x^{p+1} / ((q-p-1) x^q).
IntegralBracket power_integral_I(double p, double q, double x, double a, const QuadratureConfig& cfg = {});

/// J_{p,q}(x, a) = int_a^x (xi - a)^p / xi^q dxi, for 0 < a <= x and
/// q < p + 1, bracketed by
///     (x-a)^{p+1} / (kappa x^q)  <=  J  <=  x^{p+1} / ((p+1-q) x^q)
/// with kappa = p + 1 if q > 0 and p + 1 - q otherwise.
IntegralBracket power_integral_J(double p, double q, double x, double a, const QuadratureConfig& cfg = {});

// ---------------------------------------------------------------------------
// Polynomial moment bounds for hitting times from above.

struct MomentBoundParams {
    std::optional<RestoringFloor> floor;
    std::optional<RestoringCeiling> ceiling;
    /// Moment order m (real >= 1 for the upper bound, integer for the lower).
    double order = 1.0;
    /// Critical tail exponent when known; defaults to 2R + 2 delta - 1.
    std::optional<double> p_star;

    static MomentBoundParams from(const AssumptionParams& a, double order);
};

/// Orders m with 1 <= m < (2r + 1) / (2 (1 - gamma)) admit the upper bound.
double upper_bound_order_limit(const RestoringFloor& floor);

/// r_m = (2r + 2 gamma - 1)^alpha prod_{k=1}^{[m]} (2r - 2(k + alpha)(1 - gamma) + 1),
/// alpha = m - [m]. Throws RangeError outside the admissible orders.
double upper_bound_constant(const RestoringFloor& floor, double m);

/// E_x T_a^m <= x^{2m(1-gamma)} / (r_m sigma0^{2m} (1-gamma)^m), for M0 < a < x.
double moment_upper_bound(const MomentBoundParams& params, double x);

/// Orders n > p*/(2 (1 - delta)) + 1 have E_x T_a^n = inf.
double lower_bound_order_limit(const RestoringCeiling& ceiling, std::optional<double> p_star = std::nullopt);

/// R_n = prod_{k=1}^{n} (2R - 2k(1 - delta) + 1).
double lower_bound_constant(const RestoringCeiling& ceiling, int n);

struct LowerBound {
    bool infinite = false;
    double value = 0.0;
};

/// E_x T_a^n >= (x-a)^{2n} x^{-2 delta n} / (R_n sigma1^{2n} kappa^n),
/// kappa = max(1, 1 - delta), for M0 < a <= x; `infinite` once n exceeds
/// lower_bound_order_limit. Throws RangeError if R_n is not positive.
LowerBound moment_lower_bound(const MomentBoundParams& params, double x, double a);

/// [2r + 2 gamma - 1, 2R + 2 delta - 1]; InconsistentParams if empty.
PStarBracket p_star_bracket(const AssumptionParams& params);

// ---------------------------------------------------------------------------
// Deviation inequalities for N_t / t and for time averages.

/// Default BDG constant: C_p = (p/(p-1)) (max(p, p/(p-1)) - 1). C_2 = 2.
double default_bdg_constant(double p);

struct DeviationConstants {
    /// l = E_mu N_1 = 1 / E_a R_1.
    double l = 0.0;
    double p = 2.0;
    /// Burkholder-Davis-Gundy constant; default_bdg_constant(p) when unset.
    std::optional<double> bdg;
    std::optional<double> e_abs_r1_minus_inv_l;  // E_nu |R_1 - 1/l|^{p/2}
    std::optional<double> e_r1_half;             // E_nu R_1^{p/2}
    std::optional<double> e_abs_eta;             // E_nu |R_2 - R_1 - 1/l|^p
    std::optional<double> e_a_r1_p;              // E_a R_1^p
    std::optional<double> e_abs_r2_minus_r1;     // E_nu |R_2 - R_1|^p

    double bdg_constant() const { return bdg ? *bdg : default_bdg_constant(p); }
    /// Throws DomainError for l <= 0, p <= 1 or negative moment inputs.
    void validate() const;
};

enum class Regime { Quadratic, Subquadratic };  // p >= 2, 1 < p < 2

std::string to_string(Regime r);
Regime regime_of(double p);
/// t-exponent: p/2 for p >= 2, (p-1)/2 for 1 < p < 2.
double time_exponent(double p);

/// C(l, p, nu): constant of the N_t/t deviation inequality.
double nt_constant(const DeviationConstants& c);

/// P(|N_t/t - l| > l eps) <= C(l,p,nu) eps^{-p} t^{-alpha}.
double nt_deviation_bound(const DeviationConstants& c, double t, double eps);

/// Bound with its proof-term breakdown. Each term already carries the
/// eps- and t-factors, so value == A + B + C + D + E.
struct DeviationBound {
    double value = 0.0;
    double A = 0.0, B = 0.0, C = 0.0, D = 0.0, E = 0.0;
    Regime regime = Regime::Quadratic;
};

/// Sup-norm version: (K_A + K_B + K_C + K_D) (||f|| / eps)^p t^{-alpha} with
///     K_A = 6^{p/2} E_nu R_1^{p/2}
///     K_B = C_p^p 12^p l^{p/2} E_nu|R_2 - R_1|^p       (times (2l)^{1/2} if p < 2)
///     K_C = 2^{p+1} l 3^p E_a R_1^p
///     K_D = C(l, p, nu).
/// Throws RangeError unless 0 < eps < f_sup, MissingMoments for absent inputs.
DeviationBound ergodic_bound_sup(const DeviationConstants& c, double t, double eps, double f_sup);

/// L1 version for integer p >= 2, in units of (mu|f| / eps)^p t^{-p/2}:
///     K_A = p! 4^p (C_f / mu|f|)^p
///     K_B = C_p^p 8^p (5l/4)^{p/2} (p! (C_f/mu|f|)^p + (|mu(f)| / (l mu|f|))^p)
///     K_C = (5/4) l p! 4^p (C_f / mu|f|)^p
///     K_D = 4^p C(l, p, nu),   E = 0.
/// `mu_f` defaults to mu_abs_f (f >= 0).
DeviationBound ergodic_bound_l1(const DeviationConstants& c, double t, double eps, double mu_abs_f, double C_f,
                                std::optional<double> mu_f = std::nullopt);

struct HypothesisReport {
    bool p_above_one = false;
    bool floor_present = false;
    bool recurrence_condition = false;  // 2r + 2 gamma > 1
    bool p_in_range = false;            // p < (2r + 1) / (2 (1 - gamma))
    bool nu_moment_finite = false;
    bool sup_norm_admissible = false;   // all of the above
    bool l1_condition = false;          // 2r + 4 gamma > 3
    bool p_integer = false;             // integer p >= 2
    bool l1_admissible = false;
    double p_limit = 0.0;

    std::string summary() const;
};

/// Hypotheses of the coefficient-level sufficient conditions for the
/// sup-norm and L1 deviation bounds; `nu_moment` is int |x|^{p(1-gamma)} dnu.
HypothesisReport deviation_hypotheses(const AssumptionParams& params, double p, double nu_moment);

}  // namespace kacdiff
