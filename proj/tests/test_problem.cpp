#include <doctest.h>

#include "fixtures.hpp"
#include "hjh/errors.hpp"

using namespace hjh;
using fx::v1;

TEST_CASE("structure conditions hold for the builtin instances") {
    for (const ProblemSpec& s : {fx::quadratic_cos(), fx::pure_quadratic(1), fx::pure_quadratic(2), fx::varying_2d()}) {
        const ValidationReport r = validate_problem(s, 200, 3);
        for (const auto& c : r.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.violation);
        CHECK(r.passed());
    }
}

TEST_CASE("growth violation is reported with the offending sample") {
    ProblemSpec s = fx::quadratic_cos();
    s.bounds.alpha_prime = 0.1;  // H = q^2 + 0.5 cos dips to q^2 - 0.5
    const ValidationReport r = validate_problem(s, 200, 3);
    CHECK_FALSE(r.passed());
    const CheckResult* c = r.find("growth-H");
    REQUIRE(c != nullptr);
    CHECK_FALSE(c->pass);
    CHECK(c->worst_margin < 0.0);
    CHECK_FALSE(c->violation.empty());
}

TEST_CASE("ellipticity violation is reported") {
    ProblemSpec s = fx::pure_quadratic(1);
    s.bounds.lambda = 0.9;  // A dips to about 0.68
    const ValidationReport r = validate_problem(s, 200, 3);
    REQUIRE(r.find("ellipticity") != nullptr);
    CHECK_FALSE(r.find("ellipticity")->pass);
}

TEST_CASE("validation is deterministic in the seed") {
    const ProblemSpec s = fx::varying_2d();
    const auto a = validate_problem(s, 100, 11), b = validate_problem(s, 100, 11);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) CHECK(a.checks[i].worst_margin == b.checks[i].worst_margin);
}

TEST_CASE("bounds are checked on construction") {
    ProblemBounds b;
    b.lambda = 2.0;
    b.Lambda = 1.0;
    CHECK_THROWS_AS(b.check(), InvalidInput);
}

TEST_CASE("logcosh ramp: zero at the origin, convex, affine tails") {
    const RampAxis a{1.0, 2.0, 0.25};
    CHECK(a.value(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(a.derivative(1, 0.0) == doctest::Approx(1.5).epsilon(1e-14));
    for (double x : {-2.0, -0.3, 0.0, 0.4, 3.0}) CHECK(a.derivative(2, x) >= 0.0);
    const double c = a.asymptote_intercept();
    // Exponentially affine tails: at 16 sigma the gap to the asymptote is negligible.
    CHECK(std::abs(a.value(4.0) - (2.0 * 4.0 + c)) < 1e-12);
    CHECK(std::abs(a.value(-4.0) - (1.0 * -4.0 + c)) < 1e-12);
    // Central differences of the value reproduce the first derivative.
    const double h = 1e-4;
    CHECK((a.value(0.3 + h) - a.value(0.3 - h)) / (2 * h) == doctest::Approx(a.derivative(1, 0.3)).epsilon(1e-7));
}

TEST_CASE("initial data admissibility against a table") {
    const ProblemSpec s = fx::quadratic_cos();
    const auto table = fx::table_1d(s, 64, 0.9, 1.6);
    InitialDataCheckOptions o;
    o.L = 1e6;
    const ValidationReport ok = validate_initial_data(fx::ramp(), *table, v1(-1.0), v1(1.0), 200, o);
    for (const auto& c : ok.checks) CHECK_MESSAGE(c.pass, c.name << ": " << c.violation);

    SUBCASE("derivative bound") {
        o.L = 1.0;
        const ValidationReport r = validate_initial_data(fx::ramp(), *table, v1(-1.0), v1(1.0), 200, o);
        CHECK_FALSE(r.passed());
    }
    SUBCASE("coverage") {
        CHECK_THROWS_AS(validate_initial_data(fx::ramp(1.0, 2.0), *table, v1(-1.0), v1(1.0), 200, o), CoverageError);
    }
}

TEST_CASE("a ramp through a critical point of Hbar is inadmissible") {
    const ProblemSpec s = fx::pure_quadratic(1, false);
    const auto table = fx::table_1d(s, 32, -0.6, 0.6);
    InitialDataCheckOptions o;
    o.L = 1e6;
    const ValidationReport r = validate_initial_data(fx::ramp(-0.5, 0.5), *table, v1(-1.0), v1(1.0), 201, o);
    REQUIRE(r.find("drift-nondegenerate") != nullptr);
    CHECK_FALSE(r.find("drift-nondegenerate")->pass);
}
