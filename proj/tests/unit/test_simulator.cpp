#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kacdiff/errors.hpp"
#include "kacdiff/kac_moments.hpp"
#include "kacdiff/simulator.hpp"

using namespace kacdiff;

namespace {

const RealFunction kOne = [](double) { return 1.0; };
const RealFunction kZero = [](double) { return 0.0; };
const RealFunction kIndicator = [](double x) { return std::abs(x) <= 0.5 ? 1.0 : 0.0; };

SimConfig ou_config(std::size_t replicas, double horizon) {
    SimConfig cfg;
    cfg.replicas = replicas;
    cfg.horizon = horizon;
    cfg.threads = 1;
    cfg.seed = 7;
    return cfg;
}

bool within(double a, double b, double se, double k = 3.0) { return std::abs(a - b) <= k * se; }

}  // namespace

TEST_CASE("replica engines depend only on seed, stream and replica") {
    auto a = replica_engine(1, 0, 5);
    auto b = replica_engine(1, 0, 5);
    CHECK(a() == b());
    CHECK(replica_engine(1, 0, 5)() != replica_engine(1, 0, 6)());
    CHECK(replica_engine(1, 0, 5)() != replica_engine(1, 1, 5)());
    CHECK(replica_engine(1, 0, 5)() != replica_engine(2, 0, 5)());
}

TEST_CASE("config validation") {
    SimConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.a = 1.0;
    cfg.b = 1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = SimConfig{};
    cfg.horizon = cfg.h / 2;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = SimConfig{};
    cfg.noise_resolution = 3e-4;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.noise_resolution = 2.5e-4;
    CHECK(cfg.draws_per_step() == 4);
}

TEST_CASE("vanishing diffusion coefficient is rejected") {
    DiffusionSpec spec{[](double) { return 0.0; }, [](double) { return 0.0; }, "degenerate", ""};
    CHECK_THROWS_AS(
        {
            DiffusionModel m(spec);
            SimConfig cfg = ou_config(1, 1.0);
            simulate_path(m, cfg, kOne, 0);
        },
        DomainError);
}

TEST_CASE("guard interval aborts runaway paths") {
    DiffusionSpec spec{[](double x) { return x * x; }, [](double) { return 1.0; }, "explosive", ""};
    DiffusionModel m(spec);
    SimConfig cfg = ou_config(1, 50.0);
    cfg.initial = InitialLaw::point(2.0);
    cfg.guard = 1e3;
    CHECK_THROWS_AS(simulate_path(m, cfg, kOne, 0), NumericalBlowup);
}

TEST_CASE("integral of the constant one is the horizon") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    for (double T : {50.0, 1.0005, 3.0}) {
        SimConfig cfg = ou_config(1, T);
        const auto s = simulate_path(ou, cfg, kOne, 0, {0.0, T / 3, T});
        CHECK(s.additive_integral == doctest::Approx(T).epsilon(1e-13));
        CHECK(s.checkpoints[0] == 0.0);
        CHECK(s.checkpoints[1] == doctest::Approx(T / 3).epsilon(1e-12));
        CHECK(s.checkpoints[2] == doctest::Approx(T).epsilon(1e-13));
    }
}

TEST_CASE("cycle integrals of one are cycle lengths") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const auto s = simulate_path(ou, ou_config(1, 100.0), kOne, 3);
    REQUIRE(s.R_times.size() >= 3);
    CHECK(s.first_block_integral == doctest::Approx(s.R_times[0]).epsilon(1e-9));
    for (std::size_t i = 0; i < s.cycle_integrals.size(); ++i)
        CHECK(s.cycle_integrals[i] == doctest::Approx(s.R_times[i + 1] - s.R_times[i]).epsilon(1e-9));
}

TEST_CASE("inverse-process identity holds on every record") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig cfg = ou_config(40, 60.0);
    cfg.initial = InitialLaw::uniform(-2.0, 2.0);
    const auto samples = simulate_regenerations(ou, cfg, kIndicator);
    std::vector<double> times;
    for (double t = 0.0; t <= 60.0; t += 0.37) times.push_back(t);
    for (const auto& s : samples) {
        auto probe = times;
        for (double r : s.R_times) probe.push_back(r);  // exactly at the jumps
        CHECK(inverse_identity_holds(s, probe));
        CHECK(s.N_t == s.count_until(60.0));
        CHECK(s.cycle_integrals.size() + 1 == s.R_times.size());
    }
}

TEST_CASE("start on the target gives zero") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const auto m = estimate_hitting_moments(ou, ou_config(10, 10.0), 0.3, 0.3, 2);
    REQUIRE(m.size() == 2);
    CHECK(m[0].estimate == 0.0);
    CHECK(m[1].estimate == 0.0);
    CHECK(estimate_exit_moment(ou, ou_config(10, 10.0), 1.0, -1.0, 1.0, 1).estimate == 0.0);
    CHECK_THROWS_AS(estimate_exit_moment(ou, ou_config(10, 10.0), 2.0, -1.0, 1.0, 1), DomainError);
}

TEST_CASE("brownian exit time from the midpoint") {
    DiffusionModel bm(DiffusionSpec::brownian());
    SimConfig cfg = ou_config(4000, 20.0);
    const auto m = estimate_exit_moment(bm, cfg, 0.5, 0.0, 1.0, 1);
    CHECK(m.censored_fraction == 0.0);
    CHECK_FALSE(m.lower_bias_possible);
    CHECK(within(m.estimate, 0.25, m.std_error));
}

TEST_CASE("OU exit time agrees with the Kac quadrature") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const double exact = mean_exit_time(ou, -1.0, 1.0, 0.0);
    const auto m = estimate_exit_moment(ou, ou_config(4000, 50.0), 0.0, -1.0, 1.0, 1);
    CHECK(within(m.estimate, exact, m.std_error));
}

TEST_CASE("OU hitting moments agree with the Kac table") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const auto table = hitting_moment_table(ou, 0.0, MomentTarget::FromAbove, {1.0}, 2);
    const auto m = estimate_hitting_moments(ou, ou_config(4000, 100.0), 1.0, 0.0, 2);
    CHECK(within(m[0].estimate, table.values[1][0], m[0].std_error));
    CHECK(within(m[1].estimate, table.values[2][0], m[1].std_error));
}

TEST_CASE("censoring is reported and capped") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig cfg = ou_config(400, 1.0);
    const auto m = estimate_hitting_moment(ou, cfg, 1.0, 0.0, 1);
    CHECK(m.censored_fraction > 0.0);
    CHECK(m.censored_fraction < 0.5);
    CHECK(m.lower_bias_possible);
    cfg.horizon = 0.05;
    CHECK_THROWS_AS(estimate_hitting_moment(ou, cfg, 1.0, 0.0, 1), ExcessCensoring);
}

TEST_CASE("halving the step keeps the mean hitting time within one standard error") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig coarse = ou_config(2000, 100.0);
    coarse.h = 2e-3;
    coarse.noise_resolution = 1e-3;
    SimConfig fine = coarse;
    fine.h = 1e-3;
    const auto mc = estimate_hitting_moment(ou, coarse, 1.0, 0.0, 1);
    const auto mf = estimate_hitting_moment(ou, fine, 1.0, 0.0, 1);
    CHECK(std::abs(mc.estimate - mf.estimate) < mf.std_error);
}

TEST_CASE("regeneration constants on OU") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const auto report = classify_recurrence(ou);
    InvariantMeasure mu(ou, report);
    SimConfig cfg = ou_config(100, 200.0);
    cfg.initial = InitialLaw::invariant(mu);
    ConstantsOptions opt;
    opt.cf_starts = {-0.5, 0.0, 0.5};
    opt.cf_replicas = 300;
    const auto est = estimate_constants(ou, cfg, kIndicator, 2.0, opt);

    CHECK(est.replicas == 100);
    CHECK(est.cycles > 2000);
    CHECK(within(est.l_times_e_a_r1.value, 1.0, est.l_times_e_a_r1.std_error));
    CHECK(within(est.mu_f.value, mu.probability(-0.5, 0.5), est.mu_f.std_error));
    CHECK(est.mu_abs_f.value == doctest::Approx(est.mu_f.value));
    for (const Estimate* e : {&est.l_hat, &est.e_a_r1, &est.e_abs_r1_minus_inv_l, &est.e_r1_half, &est.e_abs_eta,
                              &est.e_a_r1_p, &est.e_abs_r2_minus_r1, &est.mu_f, &est.C_f}) {
        CHECK(e->value >= 0.0);
        CHECK(e->std_error >= 0.0);
    }
    // E_a R_1^p and E_nu|R_2 - R_1|^p estimate the same moment
    CHECK(within(est.e_a_r1_p.value, est.e_abs_r2_minus_r1.value,
                 std::hypot(est.e_a_r1_p.std_error, est.e_abs_r2_minus_r1.std_error)));
    CHECK(est.C_f.value > 0.0);

    SUBCASE("short-run counting rate matches the long-run rate") {
        SimConfig shorter = cfg;
        shorter.horizon = 50.0;
        shorter.replicas = 400;
        shorter.seed = 99;
        const auto samples = simulate_regenerations(ou, shorter, kIndicator);
        std::vector<double> rates;
        double sum = 0.0, sq = 0.0;
        for (const auto& s : samples) {
            const double r = static_cast<double>(s.N_t) / 50.0;
            sum += r;
            sq += r * r;
        }
        const double n = static_cast<double>(samples.size());
        const double mean = sum / n;
        const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
        CHECK(within(mean, est.l_hat.value, std::hypot(se, est.l_hat.std_error)));
    }

    SUBCASE("cycle moments grow at most factorially") {
        SimConfig from = cfg;
        from.initial = InitialLaw::point(est.C_f_argmax);
        from.replicas = 2000;
        from.horizon = 100.0;
        const auto samples = simulate_regenerations(ou, from, kIndicator, {}, 55);
        double C = est.C_f.value;
        double fact = 1.0;
        for (int n = 1; n <= 3; ++n) {
            fact *= n;
            std::vector<double> v;
            for (const auto& s : samples)
                if (!s.R_times.empty()) v.push_back(std::pow(s.first_block_abs_integral, n));
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            const double slack = 1.0 + 3.0 * est.C_f.std_error / C;
            CHECK(mean <= fact * std::pow(C * slack, n));
        }
    }
}

TEST_CASE("f identically zero gives zero mean and zero C_f") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    ConstantsOptions opt;
    opt.cf_starts = {0.0};
    opt.cf_replicas = 50;
    const auto est = estimate_constants(ou, ou_config(20, 100.0), kZero, 2.0, opt);
    CHECK(est.mu_f.value == 0.0);
    CHECK(est.C_f.value == 0.0);
}

TEST_CASE("too short a horizon leaves replicas without two cycles") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    CHECK_THROWS_AS(estimate_constants(ou, ou_config(20, 1.0), kIndicator, 2.0), InsufficientCycles);
}

TEST_CASE("wilson interval") {
    double lo = 0.0, hi = 0.0;
    wilson_interval(0, 100, lo, hi);
    CHECK(lo == 0.0);
    CHECK(hi > 0.0);
    CHECK(hi < 0.05);
    wilson_interval(100, 100, lo, hi);
    CHECK(hi == 1.0);
    CHECK(lo > 0.95);
    wilson_interval(50, 100, lo, hi);
    CHECK(lo == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(hi == doctest::Approx(0.5962).epsilon(1e-3));
}

TEST_CASE("deviation frequencies") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    const double mu_f = std::erf(0.5);
    SimConfig cfg = ou_config(300, 1.0);
    const std::vector<double> ts = {10.0, 40.0, 160.0};
    const std::vector<double> eps = {0.05, 0.1, 0.2, 2.5};
    const auto cells = estimate_deviation_prob(ou, cfg, kIndicator, mu_f, ts, eps);
    REQUIRE(cells.size() == 12);
    for (const auto& c : cells) {
        CHECK(c.lower <= c.empirical);
        CHECK(c.empirical <= c.upper);
        CHECK(c.lower >= 0.0);
        CHECK(c.upper <= 1.0);
        if (c.eps > 2.0) CHECK(c.exceed == 0);
    }
    // decreasing in t and in eps
    for (std::size_t j = 0; j < 3; ++j) CHECK(cells[8 + j].empirical <= cells[j].empirical);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(cells[4 * i + 1].empirical <= cells[4 * i].empirical);
        CHECK(cells[4 * i + 2].empirical <= cells[4 * i + 1].empirical);
    }
    cfg.replicas = 50;
    CHECK_THROWS_AS(estimate_deviation_prob(ou, cfg, kIndicator, mu_f, ts, eps), DomainError);
}

TEST_CASE("results do not depend on the thread count") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    SimConfig cfg = ou_config(64, 20.0);
    cfg.initial = InitialLaw::normal(0.0, 1.0);
    std::ostringstream one, four;
    cfg.threads = 1;
    write_regeneration_csv(one, simulate_regenerations(ou, cfg, kIndicator, {5.0, 20.0}));
    cfg.threads = 4;
    write_regeneration_csv(four, simulate_regenerations(ou, cfg, kIndicator, {5.0, 20.0}));
    CHECK(one.str() == four.str());
    CHECK(one.str().rfind("replica,record,index,value\n", 0) == 0);

    cfg.threads = 1;
    const auto h1 = estimate_hitting_moments(ou, cfg, 1.0, 0.0, 2);
    cfg.threads = 4;
    const auto h4 = estimate_hitting_moments(ou, cfg, 1.0, 0.0, 2);
    CHECK(h1[1].estimate == h4[1].estimate);
    CHECK(h1[1].std_error == h4[1].std_error);
}

TEST_CASE("initial laws") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    InvariantMeasure mu(ou, classify_recurrence(ou));
    const auto law = InitialLaw::invariant(mu);
    CHECK(law.kind() == InitialLaw::Kind::Tabulated);
    CHECK(law.absolute_moment(2.0) == doctest::Approx(0.5).epsilon(1e-5));
    auto rng = replica_engine(3, 0, 0);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = law.sample(rng);
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 4.0 * std::sqrt(0.5 / n));
    CHECK(sq / n == doctest::Approx(0.5).epsilon(0.05));

    CHECK(InitialLaw::point(-2.0).absolute_moment(1.5) == doctest::Approx(std::pow(2.0, 1.5)));
    CHECK(InitialLaw::uniform(-1.0, 1.0).absolute_moment(2.0) == doctest::Approx(1.0 / 3.0));
    CHECK(InitialLaw::normal(0.0, 2.0).absolute_moment(2.0) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(InitialLaw::normal(0.0, 1.0).absolute_moment(1.0) == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-8));
    CHECK_THROWS_AS(InitialLaw::uniform(1.0, 1.0), DomainError);
    CHECK_THROWS_AS(InitialLaw::normal(0.0, 0.0), DomainError);
    CHECK(InitialLaw::point(0.25).description() == "point(0.25)");
}
