#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hjh/errors.hpp"
#include "hjh/reference.hpp"

using namespace hjh;
using fx::v1;

namespace {

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

const std::vector<double> kTimes{0.0625, 0.125, 0.25};

}  // namespace

TEST_CASE("fine grid alignment and validation") {
    const FineGrid1D g = make_fine_grid(-1.03, 0.97, 0.125, 32);
    CHECK(g.x_lo == -1.125);
    CHECK(g.x_hi == 1.0);
    CHECK(g.points() == 17 * 32 + 1);
    CHECK(std::abs(g.x(g.points() - 1) - g.x_hi) <= 1e-12);
    CHECK_THROWS_AS(make_fine_grid(-1.0, 1.0, 0.75, 32), InvalidInput);
    CHECK_THROWS_AS(make_fine_grid(-1.0, 1.0, 0.125, 31), InvalidInput);
    CHECK_THROWS_AS(make_fine_grid(-1.0, 1.0, 0.125, 6), InvalidInput);
    CHECK(scheme_from_string(to_string(Scheme::lax_friedrichs)) == Scheme::lax_friedrichs);
    CHECK(scheme_from_string("explicit") == Scheme::explicit_rk2);
    CHECK_THROWS_AS(scheme_from_string("upwind"), InvalidInput);
}

TEST_CASE("H = |p|^2 with affine data is reproduced exactly by every scheme") {
    const ProblemSpec s = fx::pure_quadratic(1);
    const InitialData g = InitialData::affine(v1(1.5));
    for (Scheme sc : {Scheme::imex, Scheme::explicit_rk2, Scheme::lax_friedrichs}) {
        const FineGrid1D fg = make_fine_grid(-1.0, 1.0, 0.125, 32, sc);
        const ReferenceSolution r = solve_reference(s, g, fg, kTimes);
        REQUIRE(r.u.size() == kTimes.size() + 1);
        double err = 0.0;
        for (std::size_t k = 0; k < r.times.size(); ++k)
            for (int i = 0; i < fg.points(); ++i)
                err = std::max(err, std::abs(r.u[k][i] - (1.5 * fg.x(i) - 2.25 * r.times[k])));
        CHECK_MESSAGE(err <= 1e-10, to_string(sc));
        CHECK(r.max_cfl <= fg.c_a + 1e-12);
    }
}

TEST_CASE("affine data: the exact-trace profile converges at second order in N_per") {
    const ProblemSpec s = fx::quadratic_cos();
    const double eps = 0.125;
    const Box window = fx::box1(-0.25, 0.25);
    std::vector<double> errs;
    for (int Np : {16, 32, 64}) {
        const double reach = boundary_margin(0.25, 3.5, eps, s.bounds.Lambda, 0.0);
        const FineGrid1D fg = make_fine_grid(-0.25 - reach - 0.05, 0.25 + reach + 0.05, eps, Np);
        const fx::Built b = fx::build_1d(s, InitialData::affine(v1(1.5)), 256, 1.3, 1.7,
                                         fx::box1(fg.x_lo, fg.x_hi), 0.25, 1.0 / 16, 9, 1);
        const ReferenceSolution r = solve_reference(s, InitialData::affine(v1(1.5)), fg, kTimes,
                                                    prepared_profile(*b.h, fg, 1));
        errs.push_back(compare(r, *b.h, window, 1).sup_error);
    }
    MESSAGE("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    CHECK(errs[0] / errs[1] >= 3.5);
    CHECK(errs[1] / errs[2] >= 3.5);
}

TEST_CASE("affine data from g itself keeps an O(eps) offset") {
    // The expansion at t = 0 is g + eps w_1, so starting from g leaves a
    // persistent gap of size eps times the oscillation of w_1.
    const ProblemSpec s = fx::quadratic_cos();
    std::vector<double> ratio;
    for (double eps : {0.25, 0.125}) {
        const double reach = boundary_margin(0.25, 3.5, eps, s.bounds.Lambda, 0.0);
        const FineGrid1D fg = make_fine_grid(-0.25 - reach - 0.05, 0.25 + reach + 0.05, eps, 64);
        const fx::Built b = fx::build_1d(s, InitialData::affine(v1(1.5)), 64, 1.3, 1.7, fx::box1(-0.5, 0.5), 0.25,
                                         1.0 / 16, 9, 1);
        const ReferenceSolution r = solve_reference(s, InitialData::affine(v1(1.5)), fg, kTimes);
        ratio.push_back(compare(r, *b.h, fx::box1(-0.25, 0.25), 1).sup_error / eps);
    }
    MESSAGE("error / eps: " << ratio[0] << " " << ratio[1]);
    CHECK(ratio[0] > 1e-3);
    CHECK(ratio[1] == doctest::Approx(ratio[0]).epsilon(0.2));
}

TEST_CASE("comparison principle: ordered data stay ordered") {
    const ProblemSpec s = fx::quadratic_cos();
    const InitialData g = fx::ramp();
    const FineGrid1D fg = make_fine_grid(-2.0, 2.0, 0.25, 32);
    std::vector<double> lo(fg.points()), hi(fg.points());
    for (int i = 0; i < fg.points(); ++i) {
        lo[i] = g.value(v1(fg.x(i)));
        hi[i] = lo[i] + 0.05 * std::exp(-16.0 * fg.x(i) * fg.x(i));
    }
    const ReferenceSolution a = solve_reference(s, g, fg, kTimes, lo);
    const ReferenceSolution b = solve_reference(s, g, fg, kTimes, hi);
    double worst = HUGE_VAL;
    for (std::size_t k = 0; k < a.u.size(); ++k)
        for (int i = 0; i < fg.points(); ++i) worst = std::min(worst, b.u[k][i] - a.u[k][i]);
    CHECK(worst >= -1e-12);
}

TEST_CASE("IMEX and explicit schemes agree") {
    const ProblemSpec s = fx::quadratic_cos();
    FineGrid1D fi = make_fine_grid(-1.5, 1.5, 0.25, 16, Scheme::imex);
    FineGrid1D fe = make_fine_grid(-1.5, 1.5, 0.25, 16, Scheme::explicit_rk2);
    fi.c_a = fe.c_a = 0.05;
    const ReferenceSolution a = solve_reference(s, fx::ramp(), fi, {0.125});
    const ReferenceSolution b = solve_reference(s, fx::ramp(), fe, {0.125});
    MESSAGE("max |imex - explicit| = " << max_diff(a.u.back(), b.u.back()));
    CHECK(max_diff(a.u.back(), b.u.back()) <= 1e-7);
}

TEST_CASE("domain doubling leaves the window unchanged") {
    const ProblemSpec s = fx::quadratic_cos();
    const double eps = 0.125;
    const double reach = boundary_margin(0.25, 3.3, eps, s.bounds.Lambda, 0.25);
    const FineGrid1D f1 = make_fine_grid(-0.25 - reach, 0.25 + reach, eps, 32);
    const FineGrid1D f2 = make_fine_grid(-0.25 - 2 * reach, 0.25 + 2 * reach, eps, 32);
    const ReferenceSolution a = solve_reference(s, fx::ramp(), f1, kTimes);
    const ReferenceSolution b = solve_reference(s, fx::ramp(), f2, kTimes);
    const int shift = static_cast<int>(std::lround((f1.x_lo - f2.x_lo) / f1.dx()));
    double d = 0.0;
    for (std::size_t k = 0; k < a.u.size(); ++k)
        for (int i = 0; i < f1.points(); ++i)
            if (std::abs(f1.x(i)) <= 0.25) d = std::max(d, std::abs(a.u[k][i] - b.u[k][i + shift]));
    CHECK(d <= 1e-9);
}

TEST_CASE("failure modes") {
    SUBCASE("cell Peclet number too large") {
        const ProblemSpec s = fx::pure_quadratic(1, false);
        CHECK_THROWS_AS(solve_reference(s, InitialData::affine(v1(8.0)), make_fine_grid(-1, 1, 0.125, 8), {0.1}),
                        InvalidInput);
    }
    SUBCASE("unstable step blows up with the step number") {
        const ProblemSpec s = fx::quadratic_cos();
        FineGrid1D fg = make_fine_grid(-1.5, 1.5, 0.25, 32, Scheme::explicit_rk2);
        fg.c_a = 6.0;
        fg.c_d = 6.0;
        CHECK_THROWS_WITH_AS(solve_reference(s, fx::ramp(), fg, {0.25}), doctest::Contains("step"), SolverError);
    }
    SUBCASE("window too close to the domain ends") {
        const ProblemSpec s = fx::quadratic_cos();
        const fx::Built b =
            fx::build_1d(s, fx::ramp(), 32, 0.9, 1.6, fx::box1(-0.5, 0.5), 0.25, 1.0 / 16, 9, 1);
        const ReferenceSolution r = solve_reference(s, fx::ramp(), make_fine_grid(-1.0, 1.0, 0.25, 16), {0.25});
        CHECK_THROWS_AS(compare(r, *b.h, fx::box1(-0.25, 0.25), 1), CoverageError);
    }
    SUBCASE("wrong initial length and custom data") {
        const ProblemSpec s = fx::quadratic_cos();
        const FineGrid1D fg = make_fine_grid(-1.0, 1.0, 0.25, 16);
        CHECK_THROWS_AS(solve_reference(s, fx::ramp(), fg, {0.1}, std::vector<double>(3, 0.0)), InvalidInput);
        const InitialData c = InitialData::custom(
            1, [](const Vec& x) { return x(0); }, [](const Vec&) { return v1(1.0); },
            [](const Vec&) { return Mat::Zero(1, 1); });
        CHECK_THROWS_AS(solve_reference(s, c, fg, {0.1}), InvalidInput);
    }
}
