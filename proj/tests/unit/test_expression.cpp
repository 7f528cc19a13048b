#include <doctest.h>

#include <cmath>

#include "kacdiff/errors.hpp"
#include "kacdiff/expression.hpp"

using kacdiff::Expression;
using kacdiff::ParseError;

TEST_CASE("arithmetic and precedence") {
    CHECK(Expression::parse("1 + 2 * 3")(0.0) == 7.0);
    CHECK(Expression::parse("(1 + 2) * 3")(0.0) == 9.0);
    CHECK(Expression::parse("2 ^ 3 ^ 2")(0.0) == 512.0);
    CHECK(Expression::parse("-x^2")(3.0) == -9.0);
    CHECK(Expression::parse("2^-1")(0.0) == 0.5);
    CHECK(Expression::parse("10 / 4 - 1")(0.0) == 1.5);
    CHECK(Expression::parse("1.5e2")(0.0) == 150.0);
}

TEST_CASE("functions and constants") {
    CHECK(Expression::parse("-theta * x / (1 + x^2)", {{"theta", 2.0}})(1.0) == doctest::Approx(-1.0));
    CHECK(Expression::parse("exp(log(x))")(3.0) == doctest::Approx(3.0));
    CHECK(Expression::parse("tanh(x) + abs(x) + sign(x)")(-1.0) == doctest::Approx(std::tanh(-1.0) + 2.0 - 2.0));
    CHECK(Expression::parse("sqrt(4) * pi")(0.0) == doctest::Approx(2.0 * M_PI));
    CHECK(Expression::parse("e")(0.0) == doctest::Approx(M_E));
}

TEST_CASE("parse errors carry a location") {
    try {
        (void)Expression::parse("1 + * x", {}, 4, 10);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(e.column() == 15);
    }
    CHECK_THROWS_AS(Expression::parse("foo(x)"), ParseError);
    CHECK_THROWS_AS(Expression::parse("(x + 1"), ParseError);
    CHECK_THROWS_AS(Expression::parse("x y"), ParseError);
    CHECK_THROWS_AS(Expression::parse(""), ParseError);
    CHECK_THROWS_AS(Expression::parse("y"), ParseError);
}
