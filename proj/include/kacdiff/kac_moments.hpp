#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "kacdiff/diffusion_model.hpp"

namespace kacdiff {

/// Green kernel of the exit time from (a, b); at most one end may be infinite.
///
///     G(a,b,x,xi)   = (S(x)-S(a)) (S(b)-S(xi)) / (S(b)-S(a))   a <= x <= xi <= b
///                   = (S(xi)-S(a)) (S(b)-S(x)) / (S(b)-S(a))   a <= xi <= x <= b
///     G(-inf,b,x,xi) = S(b) - max(S(x), S(xi))                  xi <= b
///     G(a,+inf,x,xi) = min(S(x), S(xi)) - S(a)                  xi >= a
///
/// and zero outside [a, b].
class GreenKernel {
public:
    GreenKernel(double a, double b, RealFunction scale_function);
    GreenKernel(double a, double b, const DiffusionModel& model);

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    /// Throws DomainError unless a <= x <= b.
    double operator()(double x, double xi) const;

private:
    double a_, b_;
    RealFunction S_;
    double Sa_ = 0.0, Sb_ = 0.0;
};

double green(const GreenKernel& kernel, double x, double xi);

enum class MomentTarget { Exit, FromBelow, FromAbove };

std::string to_string(MomentTarget t);

/// E_x T^k for k = 0..order on an x-grid. `values[k][i]` may be +inf.
struct MomentTable {
    MomentTarget target = MomentTarget::Exit;
    /// Exit interval (a, b); for a one-sided target both equal the level.
    double a = 0.0;
    double b = 0.0;
    std::vector<double> x_grid;
    std::vector<std::vector<double>> values;
    /// Fitted growth exponent of order k on the last decade below the
    /// horizon (NaN where not fitted).
    std::vector<double> tail_exponent;
    double horizon = 0.0;
    std::size_t nodes = 0;
    std::string spec_hash;

    int order() const { return static_cast<int>(values.size()) - 1; }
    double level() const { return target == MomentTarget::FromBelow ? b : a; }

    /// `# target=... side=... spec=...` then `x,order,value` rows.
    void write_csv(std::ostream& os) const;
};

struct MomentOptions {
    QuadratureConfig quadrature{};
    /// Relative change between successive node doublings that stops the
    /// refinement.
    double rel_tol = 1e-8;
    std::size_t initial_nodes = 64;
    std::size_t max_nodes = 16384;
    /// One-sided tables: outer end L of the tabulated ray. 0 picks
    /// 10 max|x - level| (at least 10), cut where log s would exceed
    /// `log_scale_cap`.
    double horizon = 0.0;
    double log_scale_cap = 600.0;
    std::size_t scale_cache_nodes = 4096;
    unsigned threads = 1;
};

/// E_x T_{a,b}.
double mean_exit_time(const DiffusionModel& model, double a, double b, double x,
                      const QuadratureConfig& cfg = {});

/// Iterated Kac recursion for the exit time from (a, b).
MomentTable exit_moment_table(const DiffusionModel& model, double a, double b,
                              const std::vector<double>& x_grid, int order,
                              const MomentOptions& options = {});

/// Iterated Kac recursion for the hitting time of `target`, started below
/// it (FromBelow) or above it (FromAbove). Orders whose tail integral
/// diverges are +inf, as is every order after them.
MomentTable hitting_moment_table(const DiffusionModel& model, double target, MomentTarget side,
                                 const std::vector<double>& x_grid, int order,
                                 const MomentOptions& options = {});

struct SimultaneityReport {
    struct Row {
        int order = 0;
        std::size_t finite = 0;
        std::size_t infinite = 0;
        bool uniform() const { return finite == 0 || infinite == 0; }
    };
    std::vector<Row> rows;
    bool consistent = true;

    std::string summary() const;
};

/// Checks that each order is finite everywhere or infinite everywhere.
SimultaneityReport simultaneity_check(const MomentTable& table);

}  // namespace kacdiff
