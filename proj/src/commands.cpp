#include "kacdiff/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "kacdiff/errors.hpp"
#include "kacdiff/io.hpp"

namespace kacdiff {

namespace {

std::string opt_num(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string write_file(const ExperimentConfig& cfg, const std::string& name, const std::string& command,
                       const std::function<void(std::ostream&)>& body) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = (std::filesystem::path(cfg.out_dir) / name).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    os << header_line(cfg.hash(), "command=" + command) << '\n';
    body(os);
    if (!os) throw ConfigError("failed writing '" + path + "'");
    return path;
}

DeviationConstants shifted_constants(const MomentEstimates& est, double p, std::optional<double> bdg, double k) {
    auto up = [k](const Estimate& e) { return std::max(0.0, e.value + k * e.std_error); };
    DeviationConstants c;
    c.l = up(est.l_hat);
    c.p = p;
    c.bdg = bdg;
    c.e_abs_r1_minus_inv_l = up(est.e_abs_r1_minus_inv_l);
    c.e_r1_half = up(est.e_r1_half);
    c.e_abs_eta = up(est.e_abs_eta);
    c.e_a_r1_p = up(est.e_a_r1_p);
    c.e_abs_r2_minus_r1 = up(est.e_abs_r2_minus_r1);
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------

bool OverlayRow::bracketed() const {
    const double slack = 1e-9 * std::max(1.0, std::abs(value));
    if (lower && *lower > value + slack) return false;
    if (upper && value > *upper + slack) return false;
    return true;
}

std::vector<OverlayRow> bound_overlay(const MomentTable& table, const AssumptionParams& params,
                                      std::optional<double> p_star, std::vector<std::string>& warnings) {
    std::vector<OverlayRow> rows;
    if (table.target != MomentTarget::FromAbove) {
        warnings.push_back("moment bounds cover hitting from above only; overlay omitted");
        return rows;
    }
    const double a = table.level();
    if (!(a > params.M0)) {
        warnings.push_back("moment bounds need a target above M0 = " + format_number(params.M0) + "; overlay omitted");
        return rows;
    }
    for (int k = 1; k <= table.order(); ++k) {
        MomentBoundParams bp = MomentBoundParams::from(params, k);
        bp.p_star = p_star;
        bool upper_ok = params.floor.has_value();
        bool lower_ok = params.ceiling.has_value();
        try {
            if (upper_ok) upper_bound_constant(*params.floor, k);
        } catch (const RangeError& e) {
            warnings.push_back(std::string("RangeError: order ") + std::to_string(k) + ": " + e.what());
            upper_ok = false;
        }
        for (std::size_t i = 0; i < table.x_grid.size(); ++i) {
            const double x = table.x_grid[i];
            OverlayRow row;
            row.x = x;
            row.order = k;
            row.value = table.values[k][i];
            if (x >= a) {
                if (upper_ok) row.upper = moment_upper_bound(bp, x);
                if (lower_ok) {
                    try {
                        row.lower = moment_lower_bound(bp, x, a).value;
                    } catch (const RangeError& e) {
                        warnings.push_back(std::string("RangeError: order ") + std::to_string(k) + ": " + e.what());
                        lower_ok = false;
                    }
                }
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_overlay_csv(std::ostream& os, const std::vector<OverlayRow>& rows) {
    os << "x,order,lower,value,upper\n";
    for (const auto& r : rows)
        os << format_number(r.x) << ',' << r.order << ',' << opt_num(r.lower) << ',' << format_number(r.value) << ','
           << opt_num(r.upper) << '\n';
}

void write_overlay_plot(std::ostream& os, const std::vector<OverlayRow>& rows) {
    int current = -1;
    for (const auto& r : rows) {
        if (r.order != current) {
            if (current != -1) os << "\n\n";
            current = r.order;
            os << "# order " << r.order << "\n# x lower value upper\n";
        }
        os << format_number(r.x) << ' ' << (r.lower ? format_number(*r.lower) : "nan") << ' '
           << format_number(r.value) << ' ' << (r.upper ? format_number(*r.upper) : "nan") << '\n';
    }
}

// ---------------------------------------------------------------------------

bool DeviationRow::violation() const {
    return bound && bound->value < 1.0 && empirical > bound->value + halfwidth;
}

bool DeviationStudy::any_violation() const {
    for (const auto& r : rows)
        if (r.violation()) return true;
    return false;
}

DeviationStudy run_deviation_study(const DiffusionModel& model, const ExperimentConfig& cfg) {
    if (!cfg.deviation) throw ConfigError("missing [deviation] section");
    const DeviationConfig& d = *cfg.deviation;
    const bool want_sup = d.variant != BoundVariant::L1;
    const bool want_l1 = d.variant != BoundVariant::Sup;

    SimConfig cc = cfg.sim;
    cc.horizon = d.constants_horizon.value_or(d.t_grid.back());
    cc.replicas = d.constants_replicas.value_or(cfg.sim.replicas);
    ConstantsOptions opt;
    if (want_l1) opt.cf_starts = d.cf_starts;
    opt.cf_replicas = d.cf_replicas;

    DeviationStudy study;
    study.estimates = estimate_constants(model, cc, d.f.f, d.p, opt);
    const MomentEstimates& est = study.estimates;
    study.mu_f = d.mu_f.value_or(est.mu_f.value);
    study.cells = estimate_deviation_prob(model, cfg.sim, d.f.f, study.mu_f, d.t_grid, d.eps_grid);

    const DeviationConstants c0 = shifted_constants(est, d.p, d.bdg, 0.0);
    const DeviationConstants c2 = shifted_constants(est, d.p, d.bdg, 2.0);
    const bool p_integer = d.p == std::floor(d.p) && d.p >= 2.0;
    const double mu_abs = est.mu_abs_f.value;

    for (const auto& cell : study.cells) {
        auto base = [&](const char* variant) {
            DeviationRow r;
            r.t = cell.t;
            r.eps = cell.eps;
            r.variant = variant;
            r.empirical = cell.empirical;
            r.halfwidth = cell.halfwidth;
            return r;
        };
        if (want_sup) {
            DeviationRow r = base("sup");
            const double fs = *d.f.sup;
            if (!(cell.eps < fs)) {
                r.note = "eps >= sup|f|";
            } else {
                try {
                    r.bound = ergodic_bound_sup(c0, cell.t, cell.eps, fs);
                    r.bound_2se = ergodic_bound_sup(c2, cell.t, cell.eps, fs).value;
                } catch (const RangeError& e) {
                    r.note = e.what();
                }
            }
            study.rows.push_back(r);
        }
        if (want_l1) {
            DeviationRow r = base("l1");
            if (!p_integer) {
                r.note = "L1 bound needs integer p >= 2";
            } else if (!(cell.eps < mu_abs)) {
                r.note = "eps >= mu(|f|)";
            } else {
                try {
                    r.bound = ergodic_bound_l1(c0, cell.t, cell.eps, mu_abs, est.C_f.value, study.mu_f);
                    r.bound_2se = ergodic_bound_l1(c2, cell.t, cell.eps, mu_abs,
                                                   est.C_f.value + 2.0 * est.C_f.std_error, study.mu_f)
                                      .value;
                } catch (const RangeError& e) {
                    r.note = e.what();
                }
            }
            study.rows.push_back(r);
        }
    }
    return study;
}

void write_deviation_csv(std::ostream& os, const std::vector<DeviationRow>& rows) {
    os << "t,eps,variant,empirical,halfwidth,bound,bound_2se,termA,termB,termC,termD,termE,regime,status\n";
    for (const auto& r : rows) {
        os << format_number(r.t) << ',' << format_number(r.eps) << ',' << r.variant << ','
           << format_number(r.empirical) << ',' << format_number(r.halfwidth) << ',';
        if (r.bound) {
            const auto& b = *r.bound;
            os << format_number(b.value) << ',' << opt_num(r.bound_2se) << ',' << format_number(b.A) << ','
               << format_number(b.B) << ',' << format_number(b.C) << ',' << format_number(b.D) << ','
               << format_number(b.E) << ',' << to_string(b.regime) << ',';
            os << (r.violation() ? "violation" : b.value >= 1.0 ? "vacuous" : "ok");
        } else {
            os << ",,,,,,,,inadmissible";
        }
        os << '\n';
    }
}

void write_deviation_plot(std::ostream& os, const std::vector<DeviationRow>& rows) {
    bool first = true;
    for (const char* variant : {"sup", "l1"}) {
        std::vector<double> eps_seen;
        for (const auto& r : rows) {
            if (r.variant != variant) continue;
            bool seen = false;
            for (double e : eps_seen) seen = seen || e == r.eps;
            if (seen) continue;
            eps_seen.push_back(r.eps);
            if (!first) os << "\n\n";
            first = false;
            os << "# variant=" << variant << " eps=" << format_number(r.eps) << "\n# t empirical bound\n";
            for (const auto& q : rows)
                if (q.variant == variant && q.eps == r.eps)
                    os << format_number(q.t) << ' ' << format_number(q.empirical) << ' '
                       << (q.bound ? format_number(q.bound->value) : "nan") << '\n';
        }
    }
}

void write_constants_csv(std::ostream& os, const MomentEstimates& est, double mu_f) {
    os << "name,value,std_error\n";
    auto row = [&](const char* name, const Estimate& e) {
        os << name << ',' << format_number(e.value) << ',' << format_number(e.std_error) << '\n';
    };
    row("l_hat", est.l_hat);
    row("e_a_r1", est.e_a_r1);
    row("l_times_e_a_r1", est.l_times_e_a_r1);
    row("e_abs_r1_minus_inv_l", est.e_abs_r1_minus_inv_l);
    row("e_r1_half", est.e_r1_half);
    row("e_abs_eta", est.e_abs_eta);
    row("e_a_r1_p", est.e_a_r1_p);
    row("e_abs_r2_minus_r1", est.e_abs_r2_minus_r1);
    row("mu_f_hat", est.mu_f);
    row("mu_abs_f_hat", est.mu_abs_f);
    row("C_f", est.C_f);
    os << "C_f_argmax," << format_number(est.C_f_argmax) << ",\n";
    os << "mu_f_used," << format_number(mu_f) << ",\n";
    os << "p," << format_number(est.p) << ",\n";
    os << "cycles," << est.cycles << ",\n";
    os << "replicas," << est.replicas << ",\n";
}

// ---------------------------------------------------------------------------

CommandOutcome cmd_model(const ExperimentConfig& cfg) {
    CommandOutcome out;
    DiffusionModel model(cfg.model.spec());
    const RecurrenceReport rec = classify_recurrence(model);
    std::ostringstream report;
    report << "model: " << model.spec().description << '\n';
    report << "recurrence: " << rec.summary() << '\n';
    out.messages.push_back(rec.summary());
    if (cfg.assumptions) {
        const auto& a = *cfg.assumptions;
        const AssumptionReport ar = check_assumptions(model, a, default_probe_grid(a.M0, 1e3 * std::max(1.0, a.M0)));
        report << "assumptions (M0 = " << format_number(a.M0) << "):\n" << ar.summary();
        if (a.floor) {
            report << "upper moment bounds admissible for 1 <= m < " << format_number(upper_bound_order_limit(*a.floor))
                   << '\n';
        }
        if (a.ceiling) {
            report << "moments of order n > " << format_number(lower_bound_order_limit(*a.ceiling, cfg.p_star))
                   << " are infinite\n";
        }
        if (!ar.all_passed()) out.messages.push_back("warning: some assumption inequalities fail on the probe grid");
    } else {
        report << "assumptions: none given\n";
    }
    out.files.push_back(write_file(cfg, "model_report.txt", "model", [&](std::ostream& os) { os << report.str(); }));
    return out;
}

CommandOutcome cmd_moments(const ExperimentConfig& cfg) {
    if (!cfg.moments) throw ConfigError("missing [moments] section");
    const MomentsConfig& m = *cfg.moments;
    CommandOutcome out;
    DiffusionModel model(cfg.model.spec());
    const MomentTable table = m.side == MomentTarget::Exit
                                  ? exit_moment_table(model, m.a, m.b, m.x_grid, m.order, m.options)
                                  : hitting_moment_table(model, m.level, m.side, m.x_grid, m.order, m.options);
    out.files.push_back(write_file(cfg, "moments.csv", "moments", [&](std::ostream& os) { table.write_csv(os); }));
    const SimultaneityReport sim = simultaneity_check(table);
    std::string summary = sim.summary();
    while (!summary.empty() && summary.back() == '\n') summary.pop_back();
    out.messages.push_back(summary);

    if (cfg.assumptions && m.order >= 1) {
        const auto rows = bound_overlay(table, *cfg.assumptions, cfg.p_star, out.messages);
        if (!rows.empty()) {
            out.files.push_back(
                write_file(cfg, "bounds_overlay.csv", "moments", [&](std::ostream& os) { write_overlay_csv(os, rows); }));
            out.files.push_back(write_file(cfg, "bounds_overlay.dat", "moments",
                                           [&](std::ostream& os) { write_overlay_plot(os, rows); }));
            std::size_t outside = 0;
            for (const auto& r : rows) outside += r.bracketed() ? 0 : 1;
            if (outside > 0) {
                out.messages.push_back(std::to_string(outside) + " grid points fall outside the moment bounds");
                out.exit_code = kExitViolation;
            } else {
                out.messages.push_back("moment bounds bracket every admissible grid point");
            }
        }
    }
    return out;
}

CommandOutcome cmd_deviation(const ExperimentConfig& cfg) {
    CommandOutcome out;
    DiffusionModel model(cfg.model.spec());
    const DeviationStudy study = run_deviation_study(model, cfg);
    out.files.push_back(write_file(cfg, "constants.csv", "deviation",
                                   [&](std::ostream& os) { write_constants_csv(os, study.estimates, study.mu_f); }));
    out.files.push_back(
        write_file(cfg, "deviation.csv", "deviation", [&](std::ostream& os) { write_deviation_csv(os, study.rows); }));
    out.files.push_back(
        write_file(cfg, "deviation.dat", "deviation", [&](std::ostream& os) { write_deviation_plot(os, study.rows); }));
    std::size_t inadmissible = 0, violations = 0;
    for (const auto& r : study.rows) {
        inadmissible += r.bound ? 0 : 1;
        violations += r.violation() ? 1 : 0;
    }
    if (inadmissible > 0) out.messages.push_back(std::to_string(inadmissible) + " cells outside the bound hypotheses");
    if (violations > 0) {
        out.messages.push_back(std::to_string(violations) + " cells where the empirical frequency exceeds the bound");
        out.exit_code = kExitViolation;
    } else {
        out.messages.push_back("every cell with bound < 1 is dominated");
    }
    return out;
}

CommandOutcome cmd_selftest(unsigned threads) {
    CommandOutcome out;
    auto check = [&](const std::string& name, const std::function<std::string()>& body) {
        std::string failure;
        try {
            failure = body();
        } catch (const std::exception& e) {
            failure = e.what();
        }
        out.messages.push_back("selftest " + name + ": " + (failure.empty() ? "pass" : "FAIL (" + failure + ")"));
        if (!failure.empty()) out.exit_code = kExitNumerical;
    };

    check("brownian exit time", [] {
        DiffusionModel bm(DiffusionSpec::brownian());
        std::vector<double> xs;
        for (int i = 0; i <= 8; ++i) xs.push_back(i / 8.0);
        const auto t = exit_moment_table(bm, 0.0, 1.0, xs, 1);
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (std::abs(t.values[1][i] - xs[i] * (1.0 - xs[i])) > 1e-6) return "x=" + format_number(xs[i]);
        return std::string();
    });
    check("OU hitting time", [] {
        DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
        const auto t = hitting_moment_table(ou, 0.0, MomentTarget::FromAbove, {1.0}, 1);
        const double want = 1.1472371061785132;
        return std::abs(t.values[1][0] - want) <= 1e-6 * want ? std::string() : "got " + format_number(t.values[1][0]);
    });
    check("infinite second moment", [] {
        DiffusionModel m(DiffusionSpec::bounded_drift(1.0));
        const auto t = hitting_moment_table(m, 2.0, MomentTarget::FromAbove, {3.0, 5.0}, 2);
        return std::isinf(t.values[2][0]) && std::isinf(t.values[2][1]) && std::isfinite(t.values[1][0])
                   ? std::string()
                   : std::string("order 2 should be infinite");
    });
    check("power integral bracket", [] {
        const auto r = power_integral_I(0.0, 2.0, 2.0, 1.0);
        return std::abs(r.value - 0.5) < 1e-9 && r.lower <= r.value && r.value <= r.upper ? std::string()
                                                                                          : "got " + format_number(r.value);
    });
    check("thread-count determinism", [threads] {
        DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
        SimConfig cfg;
        cfg.replicas = 16;
        cfg.horizon = 5.0;
        cfg.threads = 1;
        const RealFunction f = [](double x) { return x; };
        std::ostringstream a, b;
        write_regeneration_csv(a, simulate_regenerations(ou, cfg, f));
        cfg.threads = std::max(2u, threads);
        write_regeneration_csv(b, simulate_regenerations(ou, cfg, f));
        return a.str() == b.str() ? std::string() : std::string("outputs differ");
    });
    return out;
}

}  // namespace kacdiff
