#include "kacdiff/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "kacdiff/errors.hpp"
#include "kacdiff/io.hpp"
#include "kacdiff/parallel.hpp"

namespace kacdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// simulate_path with stream s draws increments from engine 2s and bridge
// uniforms from engine 2s+1.
constexpr std::uint64_t kHittingStream = 1;
constexpr std::uint64_t kExitStream = 2;
constexpr std::uint64_t kDeviationStream = 3;
constexpr std::uint64_t kCfStreamBase = 100;

// Counts before this fraction of the horizon are left out of l-hat: N_T / T
// is biased by O(1/T) while the b/a phase of the path is out of equilibrium.
constexpr double kRateBurnIn = 0.1;

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Neumaier running sum.
struct CompensatedSum {
    double sum = 0.0, c = 0.0;
    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            c += (sum - t) + v;
        else
            c += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

class PathStepper {
public:
    PathStepper(const DiffusionModel& model, const SimConfig& cfg, std::mt19937_64& rng, std::mt19937_64& bridge_rng)
        : model_(model), cfg_(cfg), rng_(rng), bridge_rng_(bridge_rng), draws_(cfg.draws_per_step()) {}

    double advance(double x, double dt) {
        sigma_ = model_.diffusion(x);
        if (!(sigma_ > 0.0) || !std::isfinite(sigma_))
            throw DomainError("diffusion coefficient must be positive and finite, got " + format_number(sigma_) +
                              " at x = " + format_number(x));
        const double beta = model_.drift(x);
        std::size_t k = draws_;
        if (dt < cfg_.h) {
            const double sub = cfg_.h / static_cast<double>(draws_);
            k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / sub - 1e-9)));
        }
        double z = 0.0;
        for (std::size_t i = 0; i < k; ++i) z += normal_(rng_);
        const double x1 = x + beta * dt + sigma_ * std::sqrt(dt / static_cast<double>(k)) * z;
        if (!std::isfinite(x1) || std::abs(x1) > cfg_.guard)
            throw NumericalBlowup("path left the guard interval |x| <= " + format_number(cfg_.guard));
        return x1;
    }

    // Fraction of the segment [x0, x1] (duration dt) at which `level` is first
    // reached, or -1. A sign change or tie is a hit at the linear crossing;
    // otherwise the bridge test hits at mid-segment with probability
    // exp(-2 (x0-l)(x1-l) / (sigma^2 dt)).
    double crossing(double x0, double x1, double level, double dt, bool bridge_allowed) {
        const double d0 = x0 - level;
        const double d1 = x1 - level;
        if (d0 * d1 <= 0.0) {
            if (d0 == 0.0) return 0.0;
            return d0 / (d0 - d1);
        }
        if (bridge_allowed && cfg_.bridge) {
            const double e = 2.0 * d0 * d1 / (sigma_ * sigma_ * dt);
            if (e < 40.0 && uniform_(bridge_rng_) < std::exp(-e)) return 0.5;
        }
        return -1.0;
    }

private:
    const DiffusionModel& model_;
    const SimConfig& cfg_;
    std::mt19937_64& rng_;
    std::mt19937_64& bridge_rng_;
    std::size_t draws_;
    double sigma_ = 1.0;
    std::normal_distribution<double> normal_;
    std::uniform_real_distribution<double> uniform_;
};

std::size_t step_count(const SimConfig& cfg) {
    return static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.h - 1e-9));
}

double step_end(const SimConfig& cfg, std::size_t k, std::size_t n) {
    return k + 1 == n ? cfg.horizon : static_cast<double>(k + 1) * cfg.h;
}

// Path on [0, T] with regeneration bookkeeping; stops right after R_1 when
// `first_block_only`.
RegenerationSample run_path(const DiffusionModel& model, const SimConfig& cfg, const RealFunction& f,
                            std::size_t replica, const std::vector<double>& checkpoints, std::uint64_t stream,
                            bool first_block_only) {
    std::mt19937_64 rng = replica_engine(cfg.seed, 2 * stream, replica);
    std::mt19937_64 bridge_rng = replica_engine(cfg.seed, 2 * stream + 1, replica);
    PathStepper stepper(model, cfg, rng, bridge_rng);

    RegenerationSample out;
    out.horizon = cfg.horizon;
    out.checkpoints.assign(checkpoints.size(), kNaN);

    double x = cfg.initial.sample(rng);
    if (!std::isfinite(x) || std::abs(x) > cfg.guard)
        throw NumericalBlowup("initial point outside the guard interval");

    bool wait_b = true;
    double acc = 0.0, acc_abs = 0.0;
    CompensatedSum total;
    std::size_t ci = 0;
    while (ci < checkpoints.size() && checkpoints[ci] <= 0.0) out.checkpoints[ci++] = 0.0;

    const std::size_t n = step_count(cfg);
    for (std::size_t k = 0; k < n; ++k) {
        const double t0 = static_cast<double>(k) * cfg.h;
        const double t1 = step_end(cfg, k, n);
        const double dt = t1 - t0;
        const double fx = f(x);
        const double fabs_x = std::abs(fx);
        const double x1 = stepper.advance(x, dt);

        double from = 0.0;
        for (int events = 0; events < 4; ++events) {
            const double level = wait_b ? cfg.b : cfg.a;
            const double xs = from == 0.0 ? x : x + (x1 - x) * from;
            const double c = stepper.crossing(xs, x1, level, dt * (1.0 - from), from == 0.0);
            if (c < 0.0) break;
            const double theta = from + (1.0 - from) * c;
            acc += fx * dt * (theta - from);
            acc_abs += fabs_x * dt * (theta - from);
            const double te = t0 + theta * dt;
            if (wait_b) {
                out.S_times.push_back(te);
            } else {
                out.R_times.push_back(te);
                if (out.R_times.size() == 1) {
                    out.first_block_integral = acc;
                    out.first_block_abs_integral = acc_abs;
                } else {
                    out.cycle_integrals.push_back(acc);
                    out.cycle_abs_integrals.push_back(acc_abs);
                }
                acc = acc_abs = 0.0;
            }
            wait_b = !wait_b;
            from = theta;
        }
        acc += fx * dt * (1.0 - from);
        acc_abs += fabs_x * dt * (1.0 - from);
        while (ci < checkpoints.size() && checkpoints[ci] <= t1) {
            out.checkpoints[ci] = total.value() + fx * (checkpoints[ci] - t0);
            ++ci;
        }
        total.add(fx * dt);
        x = x1;
        if (first_block_only && !out.R_times.empty()) break;
    }
    out.N_t = out.R_times.size();
    out.additive_integral = total.value();
    return out;
}

Estimate batch_mean(const std::vector<double>& v) {
    Estimate e;
    const std::size_t n = v.size();
    if (n == 0) return {kNaN, kNaN};
    CompensatedSum s;
    for (double x : v) s.add(x);
    e.value = s.value() / static_cast<double>(n);
    if (n < 2) return e;
    const std::size_t B = std::min<std::size_t>(100, n);
    std::vector<double> means(B);
    for (std::size_t g = 0; g < B; ++g) {
        const std::size_t lo = g * n / B, hi = (g + 1) * n / B;
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i) m += v[i];
        means[g] = m / static_cast<double>(hi - lo);
    }
    double mbar = 0.0;
    for (double m : means) mbar += m;
    mbar /= static_cast<double>(B);
    double ss = 0.0;
    for (double m : means) ss += (m - mbar) * (m - mbar);
    e.std_error = std::sqrt(ss / static_cast<double>(B - 1) / static_cast<double>(B));
    return e;
}

std::vector<double> passage_times(const DiffusionModel& model, const SimConfig& cfg, double x0, double lo, double hi,
                                  std::uint64_t stream) {
    cfg.validate();
    std::vector<double> times(cfg.replicas);
    parallel_for(cfg.replicas, cfg.threads, [&](std::size_t r) {
        std::mt19937_64 rng = replica_engine(cfg.seed, 2 * stream, r);
        std::mt19937_64 bridge_rng = replica_engine(cfg.seed, 2 * stream + 1, r);
        times[r] = first_passage_time(model, cfg, x0, lo, hi, rng, bridge_rng);
    });
    return times;
}

std::vector<MomentEstimate> moments_from_times(const std::vector<double>& times, int max_order) {
    if (max_order < 1) throw DomainError("moment order must be >= 1");
    std::vector<double> kept;
    for (double t : times)
        if (!std::isnan(t)) kept.push_back(t);
    const double censored = 1.0 - static_cast<double>(kept.size()) / static_cast<double>(times.size());
    if (censored > 0.5)
        throw ExcessCensoring("censored fraction " + format_number(censored) + " exceeds 0.5; lengthen the horizon");
    std::vector<MomentEstimate> out;
    std::vector<double> powers(kept.size());
    for (int k = 1; k <= max_order; ++k) {
        for (std::size_t i = 0; i < kept.size(); ++i) powers[i] = std::pow(kept[i], k);
        const Estimate e = batch_mean(powers);
        MomentEstimate m;
        m.order = k;
        m.estimate = e.value;
        m.std_error = e.std_error;
        m.censored_fraction = censored;
        m.lower_bias_possible = censored > 0.0;
        out.push_back(m);
    }
    return out;
}

std::vector<MomentEstimate> zero_moments(int max_order) {
    if (max_order < 1) throw DomainError("moment order must be >= 1");
    std::vector<MomentEstimate> out;
    for (int k = 1; k <= max_order; ++k) out.push_back(MomentEstimate{k, 0.0, 0.0, 0.0, false});
    return out;
}

// Jackknife over groups of replicas for a ratio-type statistic of group sums.
struct GroupSums {
    double rate = 0.0;     // sum of N_T / T
    double replicas = 0.0;
    double cycle_time = 0.0;
    double cycles = 0.0;
    double xi = 0.0;
    double xi_abs = 0.0;
    GroupSums& operator+=(const GroupSums& o) {
        rate += o.rate;
        replicas += o.replicas;
        cycle_time += o.cycle_time;
        cycles += o.cycles;
        xi += o.xi;
        xi_abs += o.xi_abs;
        return *this;
    }
    GroupSums operator-(const GroupSums& o) const {
        GroupSums r = *this;
        r.rate -= o.rate;
        r.replicas -= o.replicas;
        r.cycle_time -= o.cycle_time;
        r.cycles -= o.cycles;
        r.xi -= o.xi;
        r.xi_abs -= o.xi_abs;
        return r;
    }
};

template <class Stat>
Estimate jackknife(const std::vector<GroupSums>& groups, const GroupSums& total, Stat stat) {
    Estimate e{stat(total), 0.0};
    const std::size_t G = groups.size();
    if (G < 2) return e;
    std::vector<double> loo(G);
    double mean = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        loo[g] = stat(total - groups[g]);
        mean += loo[g];
    }
    mean /= static_cast<double>(G);
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    e.std_error = std::sqrt(ss * static_cast<double>(G - 1) / static_cast<double>(G));
    return e;
}

}  // namespace

std::mt19937_64 replica_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t replica) {
    const std::uint64_t k = splitmix64(seed ^ splitmix64(stream ^ splitmix64(replica)));
    const std::uint64_t k2 = splitmix64(k);
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(k2), static_cast<std::uint32_t>(k2 >> 32)};
    return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::point(double x0) {
    if (!std::isfinite(x0)) throw DomainError("point mass location must be finite");
    InitialLaw law;
    law.kind_ = Kind::Point;
    law.p1_ = x0;
    law.description_ = "point(" + format_number(x0) + ")";
    return law;
}

InitialLaw InitialLaw::uniform(double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw DomainError("uniform law needs finite lo < hi");
    InitialLaw law;
    law.kind_ = Kind::Uniform;
    law.p1_ = lo;
    law.p2_ = hi;
    law.description_ = "uniform(" + format_number(lo) + "," + format_number(hi) + ")";
    return law;
}

InitialLaw InitialLaw::normal(double mean, double sd) {
    if (!(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd))
        throw DomainError("normal law needs finite mean and sd > 0");
    InitialLaw law;
    law.kind_ = Kind::Normal;
    law.p1_ = mean;
    law.p2_ = sd;
    law.description_ = "normal(" + format_number(mean) + "," + format_number(sd) + ")";
    return law;
}

InitialLaw InitialLaw::invariant(const InvariantMeasure& mu, std::size_t nodes) {
    if (nodes < 3) throw DomainError("invariant sampler needs at least 3 nodes");
    double L = 1.0;
    while (mu.probability(-L, L) < 1.0 - 1e-12) {
        L *= 2.0;
        if (L > 1e6) throw DomainError("invariant law has too much mass beyond |x| = 1e6 to tabulate");
    }
    InitialLaw law;
    law.kind_ = Kind::Tabulated;
    law.xs_.resize(nodes);
    law.cdf_.resize(nodes);
    const double width = 2.0 * L / static_cast<double>(nodes - 1);
    for (std::size_t i = 0; i < nodes; ++i) law.xs_[i] = -L + width * static_cast<double>(i);
    law.xs_.back() = L;
    law.cdf_[0] = 0.0;
    auto density = [&](double x) { return mu.density(x); };
    for (std::size_t i = 1; i < nodes; ++i)
        law.cdf_[i] = law.cdf_[i - 1] + std::max(0.0, gauss_kronrod15(density, law.xs_[i - 1], law.xs_[i]).value);
    const double total = law.cdf_.back();
    if (!(total > 0.0) || !std::isfinite(total)) throw DomainError("invariant density does not integrate");
    for (double& c : law.cdf_) c /= total;
    law.description_ = "invariant(" + mu.model().spec().description + ")";
    return law;
}

double InitialLaw::sample(std::mt19937_64& rng) const {
    switch (kind_) {
        case Kind::Point:
            return p1_;
        case Kind::Uniform:
            return std::uniform_real_distribution<double>(p1_, p2_)(rng);
        case Kind::Normal:
            return std::normal_distribution<double>(p1_, p2_)(rng);
        case Kind::Tabulated: {
            const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            if (it == cdf_.begin()) return xs_.front();
            if (it == cdf_.end()) return xs_.back();
            const std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
            const double span = cdf_[j] - cdf_[j - 1];
            const double w = span > 0.0 ? (u - cdf_[j - 1]) / span : 0.5;
            return xs_[j - 1] + w * (xs_[j] - xs_[j - 1]);
        }
    }
    return kNaN;
}

double InitialLaw::absolute_moment(double q) const {
    if (q < 0.0) throw DomainError("absolute moment order must be >= 0");
    switch (kind_) {
        case Kind::Point:
            return q == 0.0 ? 1.0 : std::pow(std::abs(p1_), q);
        case Kind::Uniform: {
            auto F = [q](double x) { return std::copysign(std::pow(std::abs(x), q + 1.0) / (q + 1.0), x); };
            return (F(p2_) - F(p1_)) / (p2_ - p1_);
        }
        case Kind::Normal: {
            const double m = p1_, s = p2_;
            auto g = [=](double x) {
                const double z = (x - m) / s;
                return std::pow(std::abs(x), q) * std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
            };
            QuadratureConfig cfg;
            double sum = integrate_finite(g, m - 40.0 * s, m, cfg).value;
            sum += integrate_finite(g, m, m + 40.0 * s, cfg).value;
            return sum;
        }
        case Kind::Tabulated: {
            double sum = 0.0;
            for (std::size_t j = 1; j < xs_.size(); ++j)
                sum += std::pow(std::abs(0.5 * (xs_[j - 1] + xs_[j])), q) * (cdf_[j] - cdf_[j - 1]);
            return sum;
        }
    }
    return kNaN;
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("step h must be positive");
    if (!(horizon >= h) || !std::isfinite(horizon)) throw DomainError("horizon must be finite and >= h");
    if (replicas < 1) throw DomainError("replicas must be >= 1");
    if (!(a < b)) throw DomainError("regeneration levels need a < b");
    if (!(guard > 0.0)) throw DomainError("guard must be positive");
    draws_per_step();
}

std::size_t SimConfig::draws_per_step() const {
    if (noise_resolution == 0.0) return 1;
    if (!(noise_resolution > 0.0) || noise_resolution > h)
        throw DomainError("noise_resolution must lie in (0, h]");
    const double ratio = h / noise_resolution;
    const double k = std::round(ratio);
    if (std::abs(ratio - k) > 1e-6 * k) throw DomainError("h must be an integer multiple of noise_resolution");
    return static_cast<std::size_t>(k);
}

// ---------------------------------------------------------------------------
// Paths and regeneration records

std::size_t RegenerationSample::count_until(double t) const {
    return static_cast<std::size_t>(std::upper_bound(R_times.begin(), R_times.end(), t) - R_times.begin());
}

bool inverse_identity_holds(const RegenerationSample& s, const std::vector<double>& times) {
    for (std::size_t i = 1; i < s.R_times.size(); ++i)
        if (!(s.R_times[i] > s.R_times[i - 1])) return false;
    // each R_n is preceded by a b-visit after R_{n-1}
    if (s.S_times.size() < s.R_times.size()) return false;
    for (std::size_t n = 0; n < s.R_times.size(); ++n) {
        if (s.S_times[n] > s.R_times[n]) return false;
        if (n > 0 && s.S_times[n] < s.R_times[n - 1]) return false;
    }
    if (s.N_t != s.count_until(s.horizon)) return false;
    for (double t : times) {
        const std::size_t N = s.count_until(t);
        for (std::size_t n = 1; n <= N + 1; ++n) {
            const bool lhs = N >= n;
            const bool rhs = n <= s.R_times.size() && s.R_times[n - 1] <= t;
            if (lhs != rhs) return false;
        }
    }
    return true;
}

RegenerationSample simulate_path(const DiffusionModel& model, const SimConfig& cfg, const RealFunction& f,
                                 std::size_t replica, const std::vector<double>& checkpoints, std::uint64_t stream) {
    cfg.validate();
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end()))
        throw DomainError("checkpoints must be nondecreasing");
    if (!checkpoints.empty() && (checkpoints.front() < 0.0 || checkpoints.back() > cfg.horizon))
        throw DomainError("checkpoints must lie in [0, horizon]");
    return run_path(model, cfg, f, replica, checkpoints, stream, false);
}

std::vector<RegenerationSample> simulate_regenerations(const DiffusionModel& model, const SimConfig& cfg,
                                                       const RealFunction& f, const std::vector<double>& checkpoints,
                                                       std::uint64_t stream) {
    cfg.validate();
    std::vector<RegenerationSample> out(cfg.replicas);
    parallel_for(cfg.replicas, cfg.threads,
                 [&](std::size_t r) { out[r] = simulate_path(model, cfg, f, r, checkpoints, stream); });
    return out;
}

void write_regeneration_csv(std::ostream& os, const std::vector<RegenerationSample>& samples) {
    os << "replica,record,index,value\n";
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const auto& s = samples[r];
        auto row = [&](const char* name, std::size_t i, double v) {
            os << r << ',' << name << ',' << i << ',' << format_number(v) << '\n';
        };
        for (std::size_t i = 0; i < s.S_times.size(); ++i) row("S", i + 1, s.S_times[i]);
        for (std::size_t i = 0; i < s.R_times.size(); ++i) row("R", i + 1, s.R_times[i]);
        if (!s.R_times.empty()) {
            row("xi", 0, s.first_block_integral);
            row("xi_abs", 0, s.first_block_abs_integral);
        }
        for (std::size_t i = 0; i < s.cycle_integrals.size(); ++i) {
            row("xi", i + 1, s.cycle_integrals[i]);
            row("xi_abs", i + 1, s.cycle_abs_integrals[i]);
        }
        row("N_T", 0, static_cast<double>(s.N_t));
        row("integral", 0, s.additive_integral);
        for (std::size_t i = 0; i < s.checkpoints.size(); ++i) row("checkpoint", i, s.checkpoints[i]);
    }
}

// ---------------------------------------------------------------------------
// Hitting and exit times

double first_passage_time(const DiffusionModel& model, const SimConfig& cfg, double x0, double lo, double hi,
                          std::mt19937_64& rng, std::mt19937_64& bridge_rng) {
    if (!(lo < hi)) throw DomainError("first passage needs lo < hi");
    if (x0 <= lo || x0 >= hi) return 0.0;
    PathStepper stepper(model, cfg, rng, bridge_rng);
    double x = x0;
    const std::size_t n = step_count(cfg);
    for (std::size_t k = 0; k < n; ++k) {
        const double t0 = static_cast<double>(k) * cfg.h;
        const double dt = step_end(cfg, k, n) - t0;
        const double x1 = stepper.advance(x, dt);
        double c = kInf;
        if (std::isfinite(lo)) {
            const double cl = stepper.crossing(x, x1, lo, dt, true);
            if (cl >= 0.0) c = cl;
        }
        if (std::isfinite(hi)) {
            const double ch = stepper.crossing(x, x1, hi, dt, true);
            if (ch >= 0.0) c = std::min(c, ch);
        }
        if (c <= 1.0) return t0 + c * dt;
        x = x1;
    }
    return kNaN;
}

std::vector<MomentEstimate> estimate_hitting_moments(const DiffusionModel& model, const SimConfig& cfg, double x0,
                                                     double target, int max_order) {
    if (x0 == target) return zero_moments(max_order);
    const double lo = x0 > target ? target : -kInf;
    const double hi = x0 > target ? kInf : target;
    return moments_from_times(passage_times(model, cfg, x0, lo, hi, kHittingStream), max_order);
}

MomentEstimate estimate_hitting_moment(const DiffusionModel& model, const SimConfig& cfg, double x0, double target,
                                       int order) {
    return estimate_hitting_moments(model, cfg, x0, target, order).back();
}

std::vector<MomentEstimate> estimate_exit_moments(const DiffusionModel& model, const SimConfig& cfg, double x0,
                                                  double a, double b, int max_order) {
    if (!(a < b)) throw DomainError("exit interval needs a < b");
    if (x0 < a || x0 > b) throw DomainError("start point outside the exit interval");
    if (x0 == a || x0 == b) return zero_moments(max_order);
    return moments_from_times(passage_times(model, cfg, x0, a, b, kExitStream), max_order);
}

MomentEstimate estimate_exit_moment(const DiffusionModel& model, const SimConfig& cfg, double x0, double a, double b,
                                    int order) {
    return estimate_exit_moments(model, cfg, x0, a, b, order).back();
}

// ---------------------------------------------------------------------------
// Regeneration constants

MomentEstimates estimate_constants(const DiffusionModel& model, const SimConfig& cfg, const RealFunction& f, double p,
                                   const ConstantsOptions& options) {
    if (!(p > 1.0)) throw DomainError("p must exceed 1");
    const auto samples = simulate_regenerations(model, cfg, f);
    for (std::size_t r = 0; r < samples.size(); ++r)
        if (samples[r].cycle_integrals.size() < 2)
            throw InsufficientCycles("replica " + std::to_string(r) + " completed " +
                                     std::to_string(samples[r].cycle_integrals.size()) +
                                     " cycles (need 2); lengthen the horizon");

    MomentEstimates out;
    out.p = p;
    out.replicas = samples.size();

    // Only the first K complete cycles of every replica enter the cycle
    // averages: keeping all cycles completed by a fixed horizon favours short
    // ones by O(1/T).
    const std::size_t R = samples.size();
    std::size_t K = samples.front().cycle_integrals.size();
    for (const auto& s : samples) K = std::min(K, s.cycle_integrals.size());
    const std::size_t G = std::min<std::size_t>(100, R);
    std::vector<GroupSums> groups(G);
    GroupSums total;
    std::vector<double> rates(R), cycle_lengths;
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t r = g * R / G; r < (g + 1) * R / G; ++r) {
            const auto& s = samples[r];
            GroupSums& gs = groups[g];
            const double burn = kRateBurnIn * s.horizon;
            rates[r] = static_cast<double>(s.N_t - s.count_until(burn)) / (s.horizon - burn);
            gs.rate += rates[r];
            gs.replicas += 1.0;
            for (std::size_t i = 0; i < K; ++i) {
                const double len = s.R_times[i + 1] - s.R_times[i];
                cycle_lengths.push_back(len);
                gs.cycle_time += len;
                gs.cycles += 1.0;
                gs.xi += s.cycle_integrals[i];
                gs.xi_abs += s.cycle_abs_integrals[i];
            }
        }
        total += groups[g];
    }
    out.cycles = cycle_lengths.size();

    auto l_of = [](const GroupSums& s) { return s.rate / s.replicas; };
    out.l_hat = batch_mean(rates);
    out.e_a_r1 = jackknife(groups, total, [](const GroupSums& s) { return s.cycle_time / s.cycles; });
    out.l_times_e_a_r1 = jackknife(groups, total, [&](const GroupSums& s) { return l_of(s) * s.cycle_time / s.cycles; });
    out.mu_f = jackknife(groups, total, [&](const GroupSums& s) { return l_of(s) * s.xi / s.cycles; });
    out.mu_abs_f = jackknife(groups, total, [&](const GroupSums& s) { return l_of(s) * s.xi_abs / s.cycles; });

    const double inv_l = 1.0 / out.l_hat.value;
    std::vector<double> v1(R), v2(R), v3(R);
    for (std::size_t r = 0; r < R; ++r) {
        const double R1 = samples[r].R_times[0];
        const double R2 = samples[r].R_times[1];
        v1[r] = std::pow(std::abs(R1 - inv_l), p / 2.0);
        v2[r] = std::pow(R1, p / 2.0);
        v3[r] = std::pow(R2 - R1, p);
    }
    out.e_abs_r1_minus_inv_l = batch_mean(v1);
    out.e_r1_half = batch_mean(v2);
    out.e_abs_r2_minus_r1 = batch_mean(v3);
    std::vector<double> eta(cycle_lengths.size()), cp(cycle_lengths.size());
    for (std::size_t i = 0; i < cycle_lengths.size(); ++i) {
        eta[i] = std::pow(std::abs(cycle_lengths[i] - inv_l), p);
        cp[i] = std::pow(cycle_lengths[i], p);
    }
    out.e_abs_eta = batch_mean(eta);
    out.e_a_r1_p = batch_mean(cp);

    for (std::size_t j = 0; j < options.cf_starts.size(); ++j) {
        SimConfig c = cfg;
        c.initial = InitialLaw::point(options.cf_starts[j]);
        c.replicas = options.cf_replicas;
        c.validate();
        std::vector<double> blocks(c.replicas, kNaN);
        parallel_for(c.replicas, c.threads, [&](std::size_t r) {
            const auto s = run_path(model, c, f, r, {}, kCfStreamBase + j, true);
            if (!s.R_times.empty()) blocks[r] = s.first_block_abs_integral;
        });
        std::vector<double> kept;
        for (double v : blocks)
            if (!std::isnan(v)) kept.push_back(v);
        if (2 * kept.size() < blocks.size())
            throw ExcessCensoring("more than half of the paths from x = " + format_number(options.cf_starts[j]) +
                                  " did not regenerate before the horizon");
        const Estimate e = batch_mean(kept);
        if (j == 0 || e.value > out.C_f.value) {
            out.C_f = e;
            out.C_f_argmax = options.cf_starts[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deviation probabilities

void wilson_interval(std::size_t successes, std::size_t n, double& lower, double& upper) {
    if (n == 0) {
        lower = 0.0;
        upper = 1.0;
        return;
    }
    const double z = 1.959964;
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(successes) / nn;
    const double denom = 1.0 + z * z / nn;
    const double center = (ph + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(ph * (1.0 - ph) / nn + z * z / (4.0 * nn * nn)) / denom;
    lower = successes == 0 ? 0.0 : std::max(0.0, center - half);
    upper = successes == n ? 1.0 : std::min(1.0, center + half);
}

std::vector<DeviationCell> estimate_deviation_prob(const DiffusionModel& model, const SimConfig& cfg,
                                                   const RealFunction& f, double mu_f,
                                                   const std::vector<double>& t_grid,
                                                   const std::vector<double>& eps_grid) {
    if (cfg.replicas < 100) throw DomainError("deviation probabilities need at least 100 replicas");
    if (t_grid.empty() || eps_grid.empty()) throw DomainError("t and eps grids must be nonempty");
    if (!std::is_sorted(t_grid.begin(), t_grid.end()) || !(t_grid.front() > 0.0))
        throw DomainError("t grid must be positive and nondecreasing");
    SimConfig c = cfg;
    c.horizon = t_grid.back();
    const auto samples = simulate_regenerations(model, c, f, t_grid, kDeviationStream);

    std::vector<DeviationCell> out;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        for (double eps : eps_grid) {
            DeviationCell cell;
            cell.t = t;
            cell.eps = eps;
            cell.replicas = samples.size();
            for (const auto& s : samples)
                if (std::abs(s.checkpoints[i] / t - mu_f) > eps) ++cell.exceed;
            cell.empirical = static_cast<double>(cell.exceed) / static_cast<double>(cell.replicas);
            wilson_interval(cell.exceed, cell.replicas, cell.lower, cell.upper);
            cell.halfwidth = 0.5 * (cell.upper - cell.lower);
            out.push_back(cell);
        }
    }
    return out;
}

}  // namespace kacdiff
