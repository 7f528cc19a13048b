#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "kacdiff/diffusion_model.hpp"

namespace kacdiff {

/// Engine for replica `replica` of stream `stream`: a function of
/// (seed, stream, replica) only.
std::mt19937_64 replica_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t replica);

/// Initial law nu.
class InitialLaw {
public:
    enum class Kind { Point, Uniform, Normal, Tabulated };

    static InitialLaw point(double x0);
    static InitialLaw uniform(double lo, double hi);
    static InitialLaw normal(double mean, double sd);
    /// Inverse-CDF sampler for the invariant law, tabulated on the region
    /// holding all but ~1e-12 of its mass.
    static InitialLaw invariant(const InvariantMeasure& mu, std::size_t nodes = 4097);

    double sample(std::mt19937_64& rng) const;
    Kind kind() const noexcept { return kind_; }
    const std::string& description() const noexcept { return description_; }
    /// E|X|^q: exact for point and uniform laws, quadrature otherwise.
    double absolute_moment(double q) const;

private:
    Kind kind_ = Kind::Point;
    double p1_ = 0.0, p2_ = 0.0;
    std::vector<double> xs_, cdf_;
    std::string description_ = "point(0)";
};

struct SimConfig {
    double h = 1e-3;
    double horizon = 100.0;
    std::size_t replicas = 1000;
    std::uint64_t seed = 1;
    /// Regeneration pair a < b.
    double a = -0.5;
    double b = 0.5;
    InitialLaw initial = InitialLaw::point(0.0);
    /// 0 = hardware concurrency. Results do not depend on it.
    unsigned threads = 0;
    /// |X| beyond this aborts with NumericalBlowup.
    double guard = 1e8;
    /// Brownian-bridge test for level crossings inside a step.
    bool bridge = true;
    /// Gaussian increments are drawn on this time resolution (0 = h) and
    /// summed into each step, so runs with h and h/2 sharing the same
    /// resolution follow the same Brownian path.
    double noise_resolution = 0.0;

    void validate() const;
    std::size_t draws_per_step() const;
};

/// Regeneration record of one path on [0, T].
///
///     S_{n+1} = inf{t > R_n : X_t = b},   R_{n+1} = inf{t > S_{n+1} : X_t = a},  R_0 = 0
///     xi_n = int_{R_n}^{R_{n+1}} f(X_s) ds  (n >= 1),  xi_0 = int_0^{R_1} f
struct RegenerationSample {
    std::vector<double> S_times;
    std::vector<double> R_times;          // R_1, R_2, ...
    std::vector<double> cycle_integrals;  // xi_1, xi_2, ... (complete cycles)
    std::vector<double> cycle_abs_integrals;
    double first_block_integral = 0.0;  // xi_0; valid when R_1 <= T
    double first_block_abs_integral = 0.0;
    std::size_t N_t = 0;
    double additive_integral = 0.0;  // int_0^T f(X_s) ds
    double horizon = 0.0;
    /// int_0^t f at the requested checkpoints.
    std::vector<double> checkpoints;

    /// #{n : R_n <= t}.
    std::size_t count_until(double t) const;
};

/// {N_t >= n} <=> {R_n <= t} for every n up to N_t + 1 and every t in
/// `times`.
bool inverse_identity_holds(const RegenerationSample& s, const std::vector<double>& times);

/// Euler-Maruyama path on [0, cfg.horizon] from nu, with regeneration
/// bookkeeping. Hits: (X_k - l)(X_{k+1} - l) <= 0 with linear interpolation
/// of the crossing time, plus (if enabled) the bridge test placing the hit at
/// mid-step.
RegenerationSample simulate_path(const DiffusionModel& model, const SimConfig& cfg, const RealFunction& f,
                                 std::size_t replica, const std::vector<double>& checkpoints = {},
                                 std::uint64_t stream = 0);

/// Replicas 0..cfg.replicas-1 in parallel, returned in replica order.
std::vector<RegenerationSample> simulate_regenerations(const DiffusionModel& model, const SimConfig& cfg,
                                                       const RealFunction& f,
                                                       const std::vector<double>& checkpoints = {},
                                                       std::uint64_t stream = 0);

/// Long-format CSV: replica,record,index,value.
void write_regeneration_csv(std::ostream& os, const std::vector<RegenerationSample>& samples);

struct MomentEstimate {
    int order = 1;
    double estimate = 0.0;
    double std_error = 0.0;
    double censored_fraction = 0.0;
    /// Censored replicas were dropped; the estimate may be biased low.
    bool lower_bias_possible = false;
};

/// First passage from x0 out of (lo, hi) (either end may be infinite), up to
/// cfg.horizon; NaN when censored.
double first_passage_time(const DiffusionModel& model, const SimConfig& cfg, double x0, double lo, double hi,
                          std::mt19937_64& rng, std::mt19937_64& bridge_rng);

/// Orders 1..max_order of T_target from x0, from the same replicas.
/// Standard errors by batch means. ExcessCensoring above 50% censoring.
std::vector<MomentEstimate> estimate_hitting_moments(const DiffusionModel& model, const SimConfig& cfg, double x0,
                                                     double target, int max_order);
MomentEstimate estimate_hitting_moment(const DiffusionModel& model, const SimConfig& cfg, double x0, double target,
                                       int order);

std::vector<MomentEstimate> estimate_exit_moments(const DiffusionModel& model, const SimConfig& cfg, double x0,
                                                  double a, double b, int max_order);
MomentEstimate estimate_exit_moment(const DiffusionModel& model, const SimConfig& cfg, double x0, double a, double b,
                                    int order);

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo inputs of the deviation bounds.
struct MomentEstimates {
    double p = 2.0;
    Estimate l_hat;              // (N_T - N_{T/10}) / (0.9 T) averaged over replicas
    Estimate e_a_r1;             // mean cycle length
    Estimate l_times_e_a_r1;     // should be 1
    Estimate e_abs_r1_minus_inv_l;
    Estimate e_r1_half;
    Estimate e_abs_eta;
    Estimate e_a_r1_p;
    Estimate e_abs_r2_minus_r1;
    Estimate mu_f;               // l * mean cycle integral of f
    Estimate mu_abs_f;
    Estimate C_f;                // max over start points of E_x int_0^{R_1} |f|
    double C_f_argmax = 0.0;
    std::size_t cycles = 0;
    std::size_t replicas = 0;
};

struct ConstantsOptions {
    /// Start points for C_f; empty skips it.
    std::vector<double> cf_starts;
    std::size_t cf_replicas = 2000;
};

/// Runs cfg.replicas paths from nu. Cycle averages use the first K complete
/// cycles of each replica, K the smallest count over replicas.
/// InsufficientCycles unless every replica completes at least two cycles.
MomentEstimates estimate_constants(const DiffusionModel& model, const SimConfig& cfg, const RealFunction& f, double p,
                                   const ConstantsOptions& options = {});

struct DeviationCell {
    double t = 0.0;
    double eps = 0.0;
    double empirical = 0.0;
    /// 95% Wilson interval, and half its width.
    double lower = 0.0;
    double upper = 0.0;
    double halfwidth = 0.0;
    std::size_t exceed = 0;
    std::size_t replicas = 0;
};

/// Wilson score interval at z = 1.959964.
void wilson_interval(std::size_t successes, std::size_t n, double& lower, double& upper);

/// For each (t, eps): fraction of replicas with |t^{-1} int_0^t f - mu_f| > eps.
std::vector<DeviationCell> estimate_deviation_prob(const DiffusionModel& model, const SimConfig& cfg,
                                                   const RealFunction& f, double mu_f,
                                                   const std::vector<double>& t_grid,
                                                   const std::vector<double>& eps_grid);

}  // namespace kacdiff
