#include "kacdiff/kac_moments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kacdiff/errors.hpp"
#include "kacdiff/io.hpp"
#include "kacdiff/parallel.hpp"

namespace kacdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v) { return format_number(v); }

// ---------------------------------------------------------------------------
// Green kernel

double green_value(double a, double b, double Sa, double Sb, double Sx, double Sxi) {
    const bool left_open = std::isinf(a), right_open = std::isinf(b);
    if (left_open) return Sb - std::max(Sx, Sxi);
    if (right_open) return std::min(Sx, Sxi) - Sa;
    return (std::min(Sx, Sxi) - Sa) * (Sb - std::max(Sx, Sxi)) / (Sb - Sa);
}

// ---------------------------------------------------------------------------
// One pass of the recursion on a fixed node set.
//
// Exit mode (a, b finite):
//     u_k(x) = k/dS [ (S(b)-S(x)) F1(x) + (S(x)-S(a)) F2(x) ]
//     F1(x) = int_a^x (S-S(a)) g,  F2(x) = int_x^b (S(b)-S) g,  g = u_{k-1} m
//     u_k'(x) = k s(x)/dS (F2(x) - F1(x))
// Ray mode (level a, tabulated up to L, kernel G(a,+inf,.)):
//     u_k(x) = k [ F1(x) + (S(x)-S(a)) T(x) ],  T(x) = int_x^inf g
//     u_k'(x) = k s(x) T(x)
// with int_L^inf g from a power-law fit of u_{k-1} on the last decade.

enum class Mode { Exit, Ray };

struct Problem {
    Mode mode;
    const DiffusionModel* model;
    const ScaleCache* cache;
    double a, b;  // b = L in ray mode
    double Sa, Sb;
    QuadratureConfig quad;
    unsigned threads;
};

struct OrderState {
    std::vector<double> xs;
    std::vector<double> S;
    std::vector<double> F1, F2;  // F2 holds T in ray mode
    std::vector<double> u, du;
    std::function<double(double)> prev;  // u_{k-1}
    double tail = 0.0;
    double exponent = std::numeric_limits<double>::quiet_NaN();
    bool infinite = false;
    int k = 0;
};

double integrate_panel(const std::function<double(double)>& f, double lo, double hi, const QuadratureConfig& cfg) {
    if (hi <= lo) return 0.0;
    return integrate_finite(f, lo, hi, cfg).value;
}

// Least-squares fit of log u = log c + q log(x - a) on the nodes in the last
// decade of distance from the level.
std::pair<double, double> fit_power_tail(const std::vector<double>& xs, const std::vector<double>& u, double a) {
    const double D = xs.back() - a;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - a;
        if (d >= 0.1 * D && u[i] > 0.0) pts.emplace_back(std::log(d), std::log(u[i]));
    }
    if (pts.size() < 3) {
        pts.clear();
        for (std::size_t i = xs.size() >= 3 ? xs.size() - 3 : 0; i < xs.size(); ++i)
            if (xs[i] > a && u[i] > 0.0) pts.emplace_back(std::log(xs[i] - a), std::log(u[i]));
    }
    if (pts.size() < 2) throw InterpolationError("too few positive nodes to fit the moment tail");
    double mx = 0, my = 0;
    for (auto [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= pts.size();
    my /= pts.size();
    double sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    const double q = sxx > 0 ? sxy / sxx : 0.0;
    return {std::exp(my - q * mx), q};
}

void solve_order(const Problem& P, OrderState& st) {
    const auto& xs = st.xs;
    const std::size_t n = xs.size();
    const std::size_t panels = n - 1;
    const double k = st.k;
    auto m = [&](double x) { return P.cache->speed_density(x); };
    auto g = [&](double x) { return st.prev(x) * m(x); };
    std::function<double(double)> left_weight = [&](double x) { return (P.cache->scale_function(x) - P.Sa) * g(x); };
    std::function<double(double)> right_weight;
    if (P.mode == Mode::Exit)
        right_weight = [&](double x) { return (P.Sb - P.cache->scale_function(x)) * g(x); };
    else
        right_weight = g;

    std::vector<double> p1(panels), p2(panels);
    parallel_for(panels, P.threads, [&](std::size_t j) {
        p1[j] = integrate_panel(left_weight, xs[j], xs[j + 1], P.quad);
        p2[j] = integrate_panel(right_weight, xs[j], xs[j + 1], P.quad);
    });

    st.tail = 0.0;
    if (P.mode == Mode::Ray) {
        std::function<double(double)> tail_integrand;
        if (st.k == 1) {
            tail_integrand = m;
        } else {
            const auto [c, q] = fit_power_tail(xs, st.u, P.a);
            st.exponent = q;
            tail_integrand = [&, c = c, q = q](double x) {
                const double mx = P.model->speed_density(x);
                return mx == 0.0 ? 0.0 : c * std::pow(x - P.a, q) * mx;
            };
        }
        RayResult ray;
        try {
            ray = integrate_semi_infinite(tail_integrand, P.b, Direction::PositiveInfinity, P.quad);
        } catch (const DomainError&) {
            // The scale function left its representable range: the speed
            // density there underflows, so the remaining tail is negligible
            // only if the ray had settled. Treat as unresolved.
            throw QuadratureFailure("tail integral beyond x = " + num(P.b) +
                                    " left the representable range of the scale function");
        }
        if (ray.divergent()) {
            st.infinite = true;
            return;
        }
        st.tail = ray.result.value;
    }

    st.F1.assign(n, 0.0);
    st.F2.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) st.F1[i] = st.F1[i - 1] + p1[i - 1];
    st.F2[n - 1] = st.tail;
    for (std::size_t i = n - 1; i-- > 0;) st.F2[i] = st.F2[i + 1] + p2[i];

    st.u.assign(n, 0.0);
    st.du.assign(n, 0.0);
    const double dS = P.Sb - P.Sa;
    for (std::size_t i = 0; i < n; ++i) {
        const double Si = st.S[i];
        const double si = P.cache->scale_density(xs[i]);
        if (P.mode == Mode::Exit) {
            st.u[i] = k / dS * ((P.Sb - Si) * st.F1[i] + (Si - P.Sa) * st.F2[i]);
            st.du[i] = k * si / dS * (st.F2[i] - st.F1[i]);
        } else {
            st.u[i] = k * (st.F1[i] + (Si - P.Sa) * st.F2[i]);
            st.du[i] = k * si * st.F2[i];
        }
    }
    if (P.mode == Mode::Exit) {
        st.u.front() = 0.0;
        st.u.back() = 0.0;
    } else {
        st.u.front() = 0.0;
    }
}

// u_k at an arbitrary point inside the node range, from the cumulative sums.
double evaluate_order(const Problem& P, const OrderState& st, double x) {
    const auto& xs = st.xs;
    if (x <= xs.front()) return 0.0;
    if (P.mode == Mode::Exit && x >= xs.back()) return 0.0;
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin()) - 1;
    if (xs[j] == x) return st.u[j];
    auto m = [&](double y) { return P.cache->speed_density(y); };
    std::function<double(double)> left_weight = [&](double y) {
        return (P.cache->scale_function(y) - P.Sa) * st.prev(y) * m(y);
    };
    std::function<double(double)> right_weight;
    if (P.mode == Mode::Exit)
        right_weight = [&](double y) { return (P.Sb - P.cache->scale_function(y)) * st.prev(y) * m(y); };
    else
        right_weight = [&](double y) { return st.prev(y) * m(y); };
    const double F1 = st.F1[j] + integrate_panel(left_weight, xs[j], x, P.quad);
    const double F2 = st.F2[j + 1] + integrate_panel(right_weight, x, xs[j + 1], P.quad);
    const double Sx = P.cache->scale_function(x);
    const double k = st.k;
    if (P.mode == Mode::Exit) return k / (P.Sb - P.Sa) * ((P.Sb - Sx) * F1 + (Sx - P.Sa) * F2);
    return k * (F1 + (Sx - P.Sa) * F2);
}

struct PassResult {
    std::vector<std::vector<double>> values;  // [order][grid]
    std::vector<double> exponents;
};

PassResult run_pass(const Problem& P, const std::vector<double>& nodes, const std::vector<double>& grid, int order) {
    PassResult out;
    out.values.assign(order + 1, std::vector<double>(grid.size(), 1.0));
    out.exponents.assign(order + 1, std::numeric_limits<double>::quiet_NaN());

    std::vector<double> S(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) S[i] = P.cache->scale_function(nodes[i]);

    GridFunction previous;
    bool infinite = false;
    for (int k = 1; k <= order; ++k) {
        if (infinite) {
            std::fill(out.values[k].begin(), out.values[k].end(), kInf);
            continue;
        }
        OrderState st;
        st.xs = nodes;
        st.S = S;
        st.k = k;
        if (k == 1)
            st.prev = [](double) { return 1.0; };
        else
            st.prev = [&previous](double x) { return previous(x); };
        // The fit for order k uses the tabulated order k-1.
        if (k > 1) st.u.assign(previous.ys().begin(), previous.ys().end());
        solve_order(P, st);
        out.exponents[k] = st.exponent;
        if (st.infinite) {
            infinite = true;
            std::fill(out.values[k].begin(), out.values[k].end(), kInf);
            continue;
        }
        std::vector<double> vals(grid.size());
        parallel_for(grid.size(), P.threads, [&](std::size_t i) { vals[i] = evaluate_order(P, st, grid[i]); });
        out.values[k] = std::move(vals);
        previous = GridFunction(nodes, st.u, st.du);
    }
    return out;
}

double max_relative_change(const PassResult& coarse, const PassResult& fine) {
    double worst = 0.0;
    for (std::size_t k = 1; k < fine.values.size(); ++k) {
        double scale = 0.0;
        for (double v : fine.values[k])
            if (std::isfinite(v)) scale = std::max(scale, std::abs(v));
        for (std::size_t i = 0; i < fine.values[k].size(); ++i) {
            const double a = coarse.values[k][i], b = fine.values[k][i];
            if (std::isinf(a) || std::isinf(b)) {
                if (a != b) return kInf;
                continue;
            }
            const double denom = std::max(std::abs(b), 1e-3 * scale);
            if (denom == 0.0) continue;
            worst = std::max(worst, std::abs(a - b) / denom);
        }
    }
    return worst;
}

std::vector<double> uniform_nodes(double a, double b, std::size_t panels) {
    std::vector<double> xs(panels + 1);
    for (std::size_t i = 0; i <= panels; ++i) xs[i] = a + (b - a) * static_cast<double>(i) / panels;
    xs.back() = b;
    return xs;
}

// Nodes packed geometrically toward the level a, spanning [a, L].
std::vector<double> ray_nodes(double a, double L, std::size_t panels) {
    const double w = 1.0 + 0.1 * std::abs(a);
    const double span = std::log1p((L - a) / w);
    std::vector<double> xs(panels + 1);
    for (std::size_t i = 0; i <= panels; ++i) xs[i] = a + w * std::expm1(span * static_cast<double>(i) / panels);
    xs.front() = a;
    xs.back() = L;
    return xs;
}

void validate_options(const MomentOptions& o, int order) {
    o.quadrature.validate();
    if (order < 0) throw DomainError("moment order must be >= 0");
    if (!(o.rel_tol > 0.0)) throw DomainError("moment rel_tol must be positive");
    if (o.initial_nodes < 4 || o.max_nodes < o.initial_nodes)
        throw DomainError("need 4 <= initial_nodes <= max_nodes");
}

template <class Pass>
PassResult refine(const MomentOptions& options, Pass&& pass, std::size_t& nodes_used) {
    std::size_t panels = options.initial_nodes;
    PassResult coarse = pass(panels);
    double change = kInf;
    while (panels * 2 <= options.max_nodes) {
        panels *= 2;
        PassResult fine = pass(panels);
        change = max_relative_change(coarse, fine);
        coarse = std::move(fine);
        if (change <= options.rel_tol) {
            nodes_used = panels + 1;
            return coarse;
        }
    }
    throw InterpolationError("moment curves did not settle to rel_tol " + num(options.rel_tol) + " with " +
                             std::to_string(panels + 1) + " nodes (last relative change " + num(change) + ")");
}

}  // namespace

// ---------------------------------------------------------------------------

GreenKernel::GreenKernel(double a, double b, RealFunction scale_function) : a_(a), b_(b), S_(std::move(scale_function)) {
    if (std::isnan(a) || std::isnan(b)) throw DomainError("Green kernel ends must not be NaN");
    if (std::isinf(a) && std::isinf(b)) throw DomainError("Green kernel needs at least one finite end");
    if (a == kInf || b == -kInf) throw DomainError("Green kernel needs a < b");
    if (!(a < b)) throw DomainError("Green kernel needs a < b");
    if (!S_) throw DomainError("Green kernel needs a scale function");
    if (std::isfinite(a)) Sa_ = S_(a);
    if (std::isfinite(b)) Sb_ = S_(b);
}

GreenKernel::GreenKernel(double a, double b, const DiffusionModel& model)
    : GreenKernel(a, b, [&model](double x) { return model.scale_function(x); }) {}

double GreenKernel::operator()(double x, double xi) const {
    if (!(x >= a_ && x <= b_)) throw DomainError("Green kernel: x = " + num(x) + " outside [a, b]");
    if (xi < a_ || xi > b_) return 0.0;
    return green_value(a_, b_, Sa_, Sb_, S_(x), S_(xi));
}

double green(const GreenKernel& kernel, double x, double xi) { return kernel(x, xi); }

std::string to_string(MomentTarget t) {
    switch (t) {
        case MomentTarget::Exit: return "exit";
        case MomentTarget::FromBelow: return "from_below";
        case MomentTarget::FromAbove: return "from_above";
    }
    return "?";
}

void MomentTable::write_csv(std::ostream& os) const {
    os << "# target=";
    if (target == MomentTarget::Exit)
        os << "(" << num(a) << "," << num(b) << ")";
    else
        os << num(level());
    os << " side=" << to_string(target) << " spec=" << spec_hash << "\n";
    os << "x,order,value\n";
    for (std::size_t k = 0; k < values.size(); ++k)
        for (std::size_t i = 0; i < x_grid.size(); ++i)
            os << num(x_grid[i]) << "," << k << "," << num(values[k][i]) << "\n";
}

double mean_exit_time(const DiffusionModel& model, double a, double b, double x, const QuadratureConfig& cfg) {
    if (!(a < b)) throw DomainError("mean_exit_time needs a < b");
    if (!(x >= a && x <= b)) throw DomainError("mean_exit_time needs a <= x <= b");
    if (x == a || x == b) return 0.0;
    ScaleCache cache(model, a, b);
    const double Sa = cache.scale_function(a), Sb = cache.scale_function(b), Sx = cache.scale_function(x);
    auto left = [&](double xi) { return (cache.scale_function(xi) - Sa) * cache.speed_density(xi); };
    auto right = [&](double xi) { return (Sb - cache.scale_function(xi)) * cache.speed_density(xi); };
    const double I1 = integrate_finite(left, a, x, cfg).value;
    const double I2 = integrate_finite(right, x, b, cfg).value;
    return ((Sb - Sx) * I1 + (Sx - Sa) * I2) / (Sb - Sa);
}

MomentTable exit_moment_table(const DiffusionModel& model, double a, double b, const std::vector<double>& x_grid,
                              int order, const MomentOptions& options) {
    validate_options(options, order);
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) throw DomainError("exit table needs finite a < b");
    for (double x : x_grid)
        if (!(x >= a && x <= b)) throw DomainError("exit table: x = " + num(x) + " outside [a, b]");

    MomentTable table;
    table.target = MomentTarget::Exit;
    table.a = a;
    table.b = b;
    table.x_grid = x_grid;
    table.horizon = b;
    table.spec_hash = fnv1a_hex(model.spec().description);
    table.values.assign(order + 1, std::vector<double>(x_grid.size(), 1.0));
    table.tail_exponent.assign(order + 1, std::numeric_limits<double>::quiet_NaN());
    if (order == 0) return table;

    ScaleCache cache(model, uniform_nodes(a, b, std::max<std::size_t>(options.scale_cache_nodes, 2) - 1));
    Problem P{Mode::Exit, &model, &cache, a, b, cache.scale_function(a), cache.scale_function(b),
              options.quadrature, options.threads};
    auto pass = [&](std::size_t panels) { return run_pass(P, uniform_nodes(a, b, panels), x_grid, order); };
    auto result = refine(options, pass, table.nodes);
    table.values = std::move(result.values);
    return table;
}

MomentTable hitting_moment_table(const DiffusionModel& model, double target, MomentTarget side,
                                 const std::vector<double>& x_grid, int order, const MomentOptions& options) {
    validate_options(options, order);
    if (side == MomentTarget::Exit) throw DomainError("hitting table needs side from_below or from_above");
    if (!std::isfinite(target)) throw DomainError("hitting target must be finite");

    if (side == MomentTarget::FromBelow) {
        // T_b for X below b is T_{-b} for -X above -b.
        for (double x : x_grid)
            if (!(x <= target)) throw DomainError("from_below: x = " + num(x) + " is above the target");
        DiffusionModel mirror = model.reflected();
        std::vector<double> flipped(x_grid.size());
        std::transform(x_grid.begin(), x_grid.end(), flipped.begin(), [](double x) { return -x; });
        MomentTable t = hitting_moment_table(mirror, -target, MomentTarget::FromAbove, flipped, order, options);
        t.target = MomentTarget::FromBelow;
        t.a = t.b = target;
        t.x_grid = x_grid;
        t.horizon = -t.horizon;
        t.spec_hash = fnv1a_hex(model.spec().description);
        return t;
    }

    const double a = target;
    double xmax = a;
    for (double x : x_grid) {
        if (!(x >= a)) throw DomainError("from_above: x = " + num(x) + " is below the target");
        xmax = std::max(xmax, x);
    }

    MomentTable table;
    table.target = side;
    table.a = table.b = a;
    table.x_grid = x_grid;
    table.spec_hash = fnv1a_hex(model.spec().description);
    table.values.assign(order + 1, std::vector<double>(x_grid.size(), 1.0));
    table.tail_exponent.assign(order + 1, std::numeric_limits<double>::quiet_NaN());
    if (order == 0) return table;

    // A path that escapes to +inf with positive probability never hits a.
    auto s = [&](double x) { return model.scale_density(x); };
    const auto escape = integrate_semi_infinite(s, a, Direction::PositiveInfinity, options.quadrature);
    if (!escape.divergent()) {
        for (int k = 1; k <= order; ++k) std::fill(table.values[k].begin(), table.values[k].end(), kInf);
        table.horizon = xmax;
        return table;
    }

    auto log_s_exceeds = [&](double x) {
        try {
            return model.log_scale_density(x) > options.log_scale_cap;
        } catch (const DomainError&) {
            return true;
        }
    };
    double L = options.horizon;
    if (L == 0.0) {
        L = a + std::max(10.0, 10.0 * (xmax - a));
        if (log_s_exceeds(L)) {
            if (log_s_exceeds(xmax))
                throw DomainError("x = " + num(xmax) + " lies where log s exceeds " + num(options.log_scale_cap));
            double lo = xmax, hi = L;
            for (int it = 0; it < 200 && hi - lo > 1e-9 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                (log_s_exceeds(mid) ? hi : lo) = mid;
            }
            L = lo;
        }
    }
    if (!(L > xmax)) throw DomainError("moment horizon " + num(L) + " must exceed every grid point");
    table.horizon = L;

    ScaleCache cache(model, ray_nodes(a, L, std::max<std::size_t>(options.scale_cache_nodes, 2) - 1));
    Problem P{Mode::Ray, &model, &cache, a, L, cache.scale_function(a), 0.0, options.quadrature, options.threads};
    PassResult last;
    auto pass = [&](std::size_t panels) {
        last = run_pass(P, ray_nodes(a, L, panels), x_grid, order);
        return last;
    };
    auto result = refine(options, pass, table.nodes);
    table.values = std::move(result.values);
    // exponents[k] is the growth of order k-1 used inside the order-k tail.
    for (int k = 1; k < order + 1; ++k) table.tail_exponent[k - 1] = result.exponents[k];
    return table;
}

std::string SimultaneityReport::summary() const {
    std::ostringstream os;
    for (const auto& r : rows)
        os << "order " << r.order << ": " << r.finite << " finite, " << r.infinite << " infinite"
           << (r.uniform() ? "" : "  <-- inconsistent") << "\n";
    os << (consistent ? "uniform finiteness across the grid\n" : "NUMERICAL INCONSISTENCY\n");
    return os.str();
}

SimultaneityReport simultaneity_check(const MomentTable& table) {
    SimultaneityReport report;
    for (std::size_t k = 0; k < table.values.size(); ++k) {
        SimultaneityReport::Row row;
        row.order = static_cast<int>(k);
        for (double v : table.values[k]) (std::isinf(v) ? row.infinite : row.finite)++;
        report.consistent = report.consistent && row.uniform();
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace kacdiff
