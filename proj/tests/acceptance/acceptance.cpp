// Acceptance checks 1-9. One line per criterion; exit status 1 if any fails.
// `acceptance 3 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kacdiff/bounds.hpp"
#include "kacdiff/commands.hpp"
#include "kacdiff/config.hpp"
#include "kacdiff/errors.hpp"
#include "kacdiff/kac_moments.hpp"
#include "kacdiff/simulator.hpp"

using namespace kacdiff;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const RealFunction kIndicator = [](double x) { return std::abs(x) <= 0.5 ? 1.0 : 0.0; };

// 1. Brownian exit from (0, 1): E_x T = x (1 - x).
Verdict brownian_exit() {
    const auto t0 = std::chrono::steady_clock::now();
    DiffusionModel bm(DiffusionSpec::brownian());
    std::vector<double> grid;
    for (int i = 0; i < 33; ++i) grid.push_back(i / 32.0);
    const auto table = exit_moment_table(bm, 0.0, 1.0, grid, 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        worst = std::max(worst, std::abs(table.values[1][i] - grid[i] * (1.0 - grid[i])));
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 5.0, "max |err| = " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// 2. OU hitting moments of 0: quadrature against Monte Carlo.
Verdict ou_kac_vs_mc() {
    const auto t0 = std::chrono::steady_clock::now();
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const std::vector<double> xs{0.5, 1.0, 1.5, 2.0};
    const auto table = hitting_moment_table(ou, 0.0, MomentTarget::FromAbove, xs, 2);
    SimConfig cfg;
    cfg.h = 1e-3;
    cfg.horizon = 60.0;
    cfg.replicas = 100000;
    cfg.seed = 20240601;
    cfg.threads = 0;
    bool ok = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto est = estimate_hitting_moments(ou, cfg, xs[i], 0.0, 2);
        for (int k = 1; k <= 2; ++k) {
            const double z = std::abs(est[k - 1].estimate - table.values[k][i]) / est[k - 1].std_error;
            worst = std::max(worst, z);
            ok = ok && z <= 3.0;
        }
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 600.0;
    return {ok, "max |z| = " + fmt("%.2f", worst) + " over 8 comparisons, " + fmt("%.0f", secs) + " s"};
}

// 3. Closed-form brackets of the power integrals on random admissible tuples.
Verdict power_integral_brackets() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    for (int i = 0; i < 200; ++i) {
        const double a = 0.05 + 20.0 * u(rng);
        const double x = a * (1.0 + 9.0 * u(rng));
        const double p = 4.0 * u(rng);
        const auto I = power_integral_I(p, p + 1.05 + 4.0 * u(rng), x, a);
        const auto J = power_integral_J(p, p + 0.95 - 5.0 * u(rng), x, a);
        const double tol = 1e-9;
        if (!(I.lower <= I.value * (1 + tol) && I.value <= I.upper * (1 + tol))) ++failures;
        if (!(J.lower <= J.value * (1 + tol) && J.value <= J.upper * (1 + tol))) ++failures;
    }
    return {failures == 0, std::to_string(failures) + " of 400 brackets violated"};
}

AssumptionParams bounded_drift_params(double R) {
    AssumptionParams ap;
    ap.M0 = 10.0;
    ap.floor = RestoringFloor{1.0, 0.0, 0.6};
    ap.ceiling = RestoringCeiling{1.0, 0.0, R};
    return ap;
}

// 4. Order-1 moment bounds bracket the Kac values on [25, 100].
Verdict moment_domination() {
    DiffusionModel model(DiffusionSpec::bounded_drift(1.0));
    const AssumptionParams ap = bounded_drift_params(1.5);
    const double a = 20.0;
    std::vector<double> grid;
    for (double x = 25.0; x <= 100.0; x += 2.5) grid.push_back(x);
    const auto table = hitting_moment_table(model, a, MomentTarget::FromAbove, grid, 1);
    const auto params = MomentBoundParams::from(ap, 1.0);
    int failures = 0;
    double tightest = 1e300;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = table.values[1][i];
        const double lo = moment_lower_bound(params, grid[i], a).value;
        const double hi = moment_upper_bound(params, grid[i]);
        if (!(lo <= v && v <= hi)) ++failures;
        tightest = std::min({tightest, v / lo, hi / v});
    }
    return {failures == 0, std::to_string(failures) + " of " + std::to_string(grid.size()) +
                               " points outside; smallest margin ratio " + fmt("%.3f", tightest)};
}

// 5. Regeneration identities on OU with f the indicator of [-1/2, 1/2].
Verdict regeneration_identities() {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig cfg;
    cfg.h = 1e-3;
    cfg.horizon = 400.0;
    cfg.replicas = 200;
    cfg.seed = 5;
    cfg.a = -0.5;
    cfg.b = 0.5;
    cfg.threads = 0;
    const auto est = estimate_constants(ou, cfg, kIndicator, 2.0);
    const double mu = std::erf(0.5);
    const double z1 = std::abs(est.l_times_e_a_r1.value - 1.0) / est.l_times_e_a_r1.std_error;
    const double z2 = std::abs(est.mu_f.value - mu) / est.mu_f.std_error;
    const bool ok = est.cycles >= 10000 && z1 <= 3.0 && z2 <= 3.0;
    return {ok, std::to_string(est.cycles) + " cycles; l*E_a R1 = " + fmt("%.4f", est.l_times_e_a_r1.value) + " (z " +
                    fmt("%.2f", z1) + "); mu(f) = " + fmt("%.4f", est.mu_f.value) + " vs " + fmt("%.4f", mu) +
                    " (z " + fmt("%.2f", z2) + ")"};
}

ExperimentConfig ou_experiment(const fs::path& out) {
    ExperimentConfig cfg = load_experiment(KACDIFF_SOURCE_DIR "/configs/ou.cfg");
    cfg.override_out_dir(out.string());
    return cfg;
}

// 6. Deviation bounds dominate the empirical frequencies, which decay at
// least like t^{-p/2}.
Verdict deviation_domination() {
    ExperimentConfig cfg = ou_experiment(fs::temp_directory_path() / "kacdiff_acceptance_c6");
    cfg.override_threads(0);
    const DiffusionModel model(cfg.model.spec());
    const DeviationStudy study = run_deviation_study(model, cfg);
    const double p = cfg.deviation->p;
    std::size_t informative = 0, violations = 0;
    for (const auto& r : study.rows) {
        if (!r.bound || r.bound->value >= 1.0) continue;
        ++informative;
        if (r.violation()) ++violations;
    }
    // For each eps: lower Wilson limit times t^{p/2} never exceeds the upper
    // limit at the smallest t times t_min^{p/2}.
    bool rate_ok = true;
    double worst_ratio = 0.0;
    for (double eps : cfg.deviation->eps_grid) {
        std::vector<const DeviationCell*> cells;
        for (const auto& c : study.cells)
            if (c.eps == eps) cells.push_back(&c);
        const double ref = cells.front()->upper * std::pow(cells.front()->t, p / 2.0);
        for (const auto* c : cells) {
            const double scaled = c->lower * std::pow(c->t, p / 2.0);
            if (ref > 0.0) worst_ratio = std::max(worst_ratio, scaled / ref);
            if (scaled > ref) rate_ok = false;
        }
    }
    const bool ok = violations == 0 && rate_ok && study.cells.front().replicas >= 1000;
    return {ok, std::to_string(informative) + " of " + std::to_string(study.rows.size()) + " cells have bound < 1, " +
                    std::to_string(violations) + " violated; max scaled-frequency ratio " + fmt("%.3f", worst_ratio)};
}

// 7. Infinite second moment detected, uniformly over the grid.
Verdict infinity_detection() {
    DiffusionModel model(DiffusionSpec::bounded_drift(1.0));
    const AssumptionParams ap = bounded_drift_params(1.0);
    std::vector<double> grid;
    for (double x = 25.0; x <= 100.0; x += 5.0) grid.push_back(x);
    const auto table = hitting_moment_table(model, 20.0, MomentTarget::FromAbove, grid, 2);
    const auto report = simultaneity_check(table);
    bool all_inf = true, order1_finite = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        all_inf = all_inf && std::isinf(table.values[2][i]);
        order1_finite = order1_finite && std::isfinite(table.values[1][i]);
    }
    const auto verdict = moment_lower_bound(MomentBoundParams::from(ap, 2.0), 50.0, 20.0);
    const double limit = lower_bound_order_limit(*ap.ceiling);
    const bool ok = all_inf && order1_finite && report.consistent && verdict.infinite;
    return {ok, std::string("order 2 ") + (all_inf ? "inf" : "finite") + " at all " + std::to_string(grid.size()) +
                    " points, simultaneity " + (report.consistent ? "consistent" : "INCONSISTENT") +
                    ", lower-bound order limit " + fmt("%.2f", limit)};
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return d;
}

// 8. First and second cycle integrals share one law.
Verdict cycle_iid() {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig cfg;
    cfg.h = 1e-3;
    cfg.horizon = 60.0;
    cfg.replicas = 10000;
    cfg.seed = 8;
    cfg.a = -0.5;
    cfg.b = 0.5;
    cfg.threads = 0;
    const auto samples = simulate_regenerations(ou, cfg, kIndicator);
    std::vector<double> xi1, xi2;
    for (const auto& s : samples) {
        if (s.cycle_integrals.size() < 2) continue;
        xi1.push_back(s.cycle_integrals[0]);
        xi2.push_back(s.cycle_integrals[1]);
    }
    const double n = static_cast<double>(xi1.size());
    const double d = ks_statistic(xi1, xi2);
    const double critical = 1.949 * std::sqrt(2.0 / n);
    const bool ok = xi1.size() >= 9900 && d < critical;
    return {ok, "D = " + fmt("%.4f", d) + " vs critical " + fmt("%.4f", critical) + " on " +
                    std::to_string(xi1.size()) + " pairs"};
}

std::string read_outputs(const fs::path& dir) {
    std::string all;
    for (const char* name : {"moments.csv", "bounds_overlay.csv", "constants.csv", "deviation.csv", "deviation.dat"}) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) continue;
        std::ostringstream ss;
        ss << in.rdbuf();
        all += std::string(name) + "\n" + ss.str();
    }
    return all;
}

// 9. Byte-identical CSV across reruns and thread counts.
Verdict determinism() {
    auto run = [](unsigned threads, const std::string& tag) {
        const fs::path dir = fs::temp_directory_path() / ("kacdiff_acceptance_c9_" + tag);
        fs::remove_all(dir);
        ExperimentConfig cfg = ou_experiment(dir);
        cfg.override_replicas(200);
        cfg.override_threads(threads);
        cmd_moments(cfg);
        cmd_deviation(cfg);
        return read_outputs(dir);
    };
    const std::string a = run(1, "a");
    const std::string b = run(1, "b");
    const std::string c = run(8, "c");
    const bool ok = a.size() > 1000 && a == b && a == c;
    return {ok, std::to_string(a.size()) + " bytes; rerun " + (a == b ? "identical" : "DIFFERS") + ", 8 threads " +
                    (a == c ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"Brownian exit oracle", brownian_exit},
        {"Kac vs Monte Carlo (OU)", ou_kac_vs_mc},
        {"power-integral brackets", power_integral_brackets},
        {"moment-bound domination", moment_domination},
        {"regeneration identities", regeneration_identities},
        {"deviation-bound domination", deviation_domination},
        {"infinity detection", infinity_detection},
        {"i.i.d. cycles (KS)", cycle_iid},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::printf("criterion %d %s: %s (%s)\n", id, criteria[i].first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
