#include <doctest.h>

#include <cmath>

#include "kacdiff/diffusion_model.hpp"
#include "kacdiff/errors.hpp"

using namespace kacdiff;

namespace {
constexpr double kErfiIntegral = 1.4626517459071816;  // int_0^1 exp(t^2) dt

DiffusionSpec coefficients(RealFunction drift, RealFunction diffusion) {
    return {std::move(drift), std::move(diffusion), "test", ""};
}
}  // namespace

TEST_CASE("scale density") {
    DiffusionModel bm(DiffusionSpec::brownian());
    CHECK(bm.scale_density(3.7) == doctest::Approx(1.0).epsilon(1e-14));
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    CHECK(ou.scale_density(1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-10));
    CHECK(ou.scale_density(0.0) == 1.0);
    CHECK(ou.scale_density(-2.5) == doctest::Approx(std::exp(6.25)).epsilon(1e-10));
    // far points go through the dyadic anchors
    DiffusionModel bd(DiffusionSpec::bounded_drift(1.0));
    for (double x : {3.0, 37.5, -1234.0, 2.0e5})
        CHECK(bd.scale_density(x) == doctest::Approx(1.0 + x * x).epsilon(1e-9));
}

TEST_CASE("scale function") {
    DiffusionModel bm(DiffusionSpec::brownian());
    CHECK(bm.scale_function(2.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(bm.scale_function(-2.0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(bm.scale_function(0.0) == 0.0);
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    CHECK(ou.scale_function(1.0) == doctest::Approx(kErfiIntegral).epsilon(1e-9));
    CHECK(ou.scale_function(-1.0) == doctest::Approx(-kErfiIntegral).epsilon(1e-9));
}

TEST_CASE("speed density") {
    DiffusionModel bm(DiffusionSpec::brownian());
    CHECK(bm.speed_density(5.0) == doctest::Approx(2.0));
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    CHECK(ou.speed_density(1.0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-10));
    DiffusionModel wide(coefficients([](double) { return 0.0; }, [](double) { return 2.0; }));
    CHECK(wide.speed_density(0.0) == doctest::Approx(0.5));
}

TEST_CASE("vanishing diffusion is a domain error") {
    DiffusionModel dead(coefficients([](double) { return 0.0; }, [](double) { return 0.0; }));
    CHECK_THROWS_AS(dead.speed_density(1.0), DomainError);
    CHECK_THROWS_AS(dead.scale_density(0.5), DomainError);
}

TEST_CASE("brownian motion: S(x) = x and m = 2 on a grid") {
    DiffusionModel bm(DiffusionSpec::brownian());
    for (int i = -20; i <= 20; ++i) {
        const double x = 0.37 * i;
        CHECK(std::abs(bm.scale_function(x) - x) <= 1e-10);
        CHECK(std::abs(bm.speed_density(x) - 2.0) <= 1e-10);
    }
}

TEST_CASE("s positive and S strictly increasing") {
    DiffusionModel bd(DiffusionSpec::bounded_drift(2.0));
    double previous = -INFINITY;
    for (int i = -40; i <= 40; ++i) {
        const double x = 0.5 * i;
        CHECK(bd.scale_density(x) > 0.0);
        const double S = bd.scale_function(x);
        CHECK(S > previous);
        previous = S;
    }
}

TEST_CASE("recurrence classification") {
    auto bm = classify_recurrence(DiffusionModel(DiffusionSpec::brownian()));
    CHECK(bm.kind == Recurrence::NullRecurrent);
    CHECK(std::isinf(bm.speed_mass));

    auto ou = classify_recurrence(DiffusionModel(DiffusionSpec::ornstein_uhlenbeck(1.0)));
    CHECK(ou.kind == Recurrence::PositiveRecurrent);
    CHECK(ou.speed_mass == doctest::Approx(2.0 * std::sqrt(M_PI)).epsilon(1e-8));
    CHECK(ou.summary().find("probed up to") != std::string::npos);

    auto tr = classify_recurrence(DiffusionModel(coefficients([](double x) { return x; }, [](double) { return 1.0; })));
    CHECK(tr.kind == Recurrence::Transient);
    CHECK_FALSE(tr.scale_divergent_right);
}

TEST_CASE("classification does not depend on the ray anchor") {
    for (auto spec : {DiffusionSpec::ornstein_uhlenbeck(1.0), DiffusionSpec::brownian()}) {
        DiffusionModel model(spec);
        auto base = classify_recurrence(model, 1e6, 0.0);
        for (double anchor : {-3.0, 1.7, 12.0}) {
            auto shifted = classify_recurrence(model, 1e6, anchor);
            CHECK(shifted.kind == base.kind);
            if (base.kind == Recurrence::PositiveRecurrent)
                CHECK(shifted.speed_mass == doctest::Approx(base.speed_mass).epsilon(1e-7));
        }
    }
}

TEST_CASE("invariant density") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    auto report = classify_recurrence(ou, 50.0);
    CHECK(invariant_density(ou, report, 0.0) == doctest::Approx(1.0 / std::sqrt(M_PI)).epsilon(1e-8));
    InvariantMeasure mu(ou, report);
    CHECK(std::abs(mu.probability(-50.0, 50.0) - 1.0) <= 1e-6);
    CHECK(mu.probability(-0.5, 0.5) == doctest::Approx(std::erf(0.5)).epsilon(1e-8));

    DiffusionModel ou2(DiffusionSpec::ornstein_uhlenbeck(2.0));
    CHECK(invariant_density(ou2, classify_recurrence(ou2), 0.0) ==
          doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-8));

    DiffusionModel bm(DiffusionSpec::brownian());
    CHECK_THROWS_AS(invariant_density(bm, classify_recurrence(bm), 0.0), NotPositiveRecurrent);
}

TEST_CASE("assumption checks") {
    auto grid = default_probe_grid(10.0, 1e4);

    AssumptionParams floor_only;
    floor_only.M0 = 10.0;
    floor_only.floor = RestoringFloor{1.0, 0.0, 0.6};
    auto bd = check_assumptions(DiffusionModel(DiffusionSpec::bounded_drift(1.0)), floor_only, grid);
    CHECK(bd.floor_holds);
    CHECK(bd.all_passed());

    AssumptionParams ceiling_only;
    ceiling_only.M0 = 10.0;
    ceiling_only.ceiling = RestoringCeiling{1.0, 0.0, 1.5};
    auto ou = check_assumptions(DiffusionModel(DiffusionSpec::ornstein_uhlenbeck(1.0)), ceiling_only, grid);
    CHECK_FALSE(ou.ceiling_holds);
    CHECK_FALSE(ou.all_passed());

    AssumptionParams any_r = floor_only;
    any_r.floor->r = 0.01;
    auto bm = check_assumptions(DiffusionModel(DiffusionSpec::brownian()), any_r, grid);
    CHECK_FALSE(bm.floor_holds);
    bool found = false;
    for (const auto& c : bm.checks)
        if (!c.passed) {
            found = true;
            CHECK(std::abs(c.worst_x) > 10.0);
            CHECK(c.worst_margin < 0.0);
        }
    CHECK(found);

    AssumptionParams both = floor_only;
    both.ceiling = RestoringCeiling{1.0, 0.0, 1.5};
    auto full = check_assumptions(DiffusionModel(DiffusionSpec::bounded_drift(1.0)), both, grid);
    REQUIRE(full.p_star.has_value());
    CHECK(full.p_star->lo == doctest::Approx(0.2));
    CHECK(full.p_star->hi == doctest::Approx(2.0));
}

TEST_CASE("assumption parameters validate") {
    AssumptionParams p;
    p.floor = RestoringFloor{1.0, 1.0, 1.0};
    CHECK_THROWS_AS(p.validate(), DomainError);
    p.floor = RestoringFloor{-1.0, 0.0, 1.0};
    CHECK_THROWS_AS(p.validate(), DomainError);
    p.floor.reset();
    p.ceiling = RestoringCeiling{1.0, 0.0, 0.0};
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("scale cache agrees with the model") {
    DiffusionModel bd(DiffusionSpec::bounded_drift(1.0));
    ScaleCache cache(bd, -5.0, 40.0);
    for (double x : {-4.9, -1.0, 0.0, 3.3, 39.0}) {
        CHECK(cache.scale_density(x) == doctest::Approx(1.0 + x * x).epsilon(1e-7));
        CHECK(std::abs(cache.scale_function(x) - (x + x * x * x / 3.0)) <= 1e-7 * (1.0 + std::abs(x * x * x)));
        CHECK(cache.speed_density(x) == doctest::Approx(2.0 / (1.0 + x * x)).epsilon(1e-7));
    }
    // nodes are exact
    const double node = cache.log_scale().xs()[100];
    CHECK(cache.scale_density(node) == doctest::Approx(1.0 + node * node).epsilon(1e-11));
    CHECK(cache.scale_function(100.0) == doctest::Approx(100.0 + 1e6 / 3.0).epsilon(1e-9));
}

TEST_CASE("reflection") {
    DiffusionModel ou(DiffusionSpec::ornstein_uhlenbeck(1.0));
    auto r = ou.reflected();
    CHECK(r.drift(2.0) == doctest::Approx(-ou.drift(-2.0)));
    CHECK(r.scale_density(1.3) == doctest::Approx(ou.scale_density(-1.3)).epsilon(1e-12));
}
