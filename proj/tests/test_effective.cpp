#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "hjh/errors.hpp"

using namespace hjh;
using fx::v1;
using fx::v2;

namespace {

struct Ramp1D {
    ProblemSpec s = fx::quadratic_cos();
    std::shared_ptr<const EffectiveTable> table = fx::table_1d(s, 64, 0.9, 1.6);
    EffectiveSolution sol{fx::ramp(), table, fx::box1(-1.0, 1.0), 0.25};
};

const Ramp1D& ramp1d() {
    static const Ramp1D r;
    return r;
}

}  // namespace

TEST_CASE("affine data: u0 = p.x - t Hbar(p)") {
    const ProblemSpec s = fx::quadratic_cos();
    const auto table = fx::table_1d(s, 64, 1.3, 1.7);
    const EffectiveSolution sol(InitialData::affine(v1(1.5)), table, fx::box1(-1.0, 1.0), 0.5);
    const double hb = table->H(v1(1.5));
    for (double x : {-0.9, 0.0, 0.37}) {
        for (double t : {0.0, 0.2, 0.5}) {
            const U0Eval e = sol.eval(v1(x), t);
            CHECK(std::abs(e.value - (1.5 * x - t * hb)) <= 1e-12);
            CHECK(std::abs(e.grad(0) - 1.5) <= 1e-12);
            CHECK(std::abs(e.hess(0, 0)) <= 1e-12);
            CHECK(std::abs(e.dt + hb) <= 1e-12);
        }
    }
}

TEST_CASE("characteristics: forward and invert round trip") {
    const EffectiveSolution& sol = ramp1d().sol;
    for (double x0 : {-0.8, -0.1, 0.0, 0.05, 0.6})
        for (double t : {0.0, 0.1, 0.25}) {
            const Vec x = sol.forward(v1(x0), t);
            CHECK(std::abs(invert_characteristics(sol, x, t)(0) - x0) <= 1e-12);
        }
}

TEST_CASE("fan invariants on 1000 samples") {
    const Ramp1D& r = ramp1d();
    const EffectiveSolution& sol = r.sol;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> ux(-1.0, 1.0), ut(0.0, 0.25);
    int used = 0;
    double jmin = HUGE_VAL, gconst = 0.0, pde = 0.0, value = 0.0, hess = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec x0 = v1(ux(rng));
        const double t = ut(rng);
        const Vec x = sol.forward(x0, t);
        if (!sol.window().contains(x)) continue;
        ++used;
        jmin = std::min(jmin, sol.jacobian(x0, t));
        const U0Eval e = eval_u0(sol, x, t);
        const Vec p0 = sol.g().gradient(x0);
        gconst = std::max(gconst, (e.grad - p0).cwiseAbs().maxCoeff());
        pde = std::max(pde, std::abs(e.dt + r.table->H(e.grad)));
        const double rate = p0.dot(r.table->B(p0)) - r.table->H(p0);
        value = std::max(value, std::abs(e.value - (sol.g().value(x0) + t * rate)));
        // D2u0 = D2g (1 + t D2Hbar D2g)^-1
        const double g2 = sol.g().hessian(x0)(0, 0);
        hess = std::max(hess, std::abs(e.hess(0, 0) - g2 / (1.0 + t * r.table->D2H(p0)(0, 0) * g2)));
    }
    CHECK(used >= 300);
    CHECK(jmin >= 1.0 - 1e-12);
    CHECK(gconst <= 1e-9);
    CHECK(pde <= 1e-7);
    CHECK(value <= 1e-9);
    CHECK(hess <= 1e-8);
    CHECK(sol.fan().min_jacobian >= 1.0 - 1e-12);
}

TEST_CASE("time derivative against finite differences") {
    const EffectiveSolution& sol = ramp1d().sol;
    const double h = 1e-4;
    for (double x : {-0.3, 0.1, 0.5}) {
        const double fd = (sol.eval(v1(x), 0.1 + h).value - sol.eval(v1(x), 0.1 - h).value) / (2 * h);
        CHECK(sol.eval(v1(x), 0.1).dt == doctest::Approx(fd).epsilon(1e-7));
        CHECK(sol.derivative(v1(x), 0.1, {1, 0}, 0) == doctest::Approx(sol.eval(v1(x), 0.1).grad(0)).epsilon(1e-12));
    }
}

TEST_CASE("|p|^2: Bbar = 2 p lies in [2, 4] for slopes in [1, 2]") {
    const ProblemSpec s = fx::pure_quadratic(1);
    const auto table = fx::table_1d(s, 32, 0.9, 2.1, 0.05);
    const EffectiveSolution sol(fx::ramp(1.0, 2.0), table, fx::box1(-1.0, 1.0), 0.25);
    for (double x : {-1.0, -0.2, 0.0, 0.3, 1.0}) {
        const double b = drift_field(sol, v1(x), 0.2)(0);
        CHECK(b >= 2.0 - 1e-9);
        CHECK(b <= 4.0 + 1e-9);
        CHECK(std::abs(b - 2.0 * sol.eval(v1(x), 0.2).grad(0)) <= 1e-9);
    }
    CHECK(max_drift_speed(fx::ramp(1.0, 2.0), *table) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("2D separable ramp") {
    const ProblemSpec s = fx::pure_quadratic(2, false);
    const auto table = std::make_shared<const EffectiveTable>(
        effective_table(s, TorusGrid(2, 8), v2(0.9, 0.4), v2(1.6, 1.1), 0.05));
    const InitialData g = InitialData::logcosh_ramp({RampAxis{1.0, 1.5, 0.25}, RampAxis{0.5, 1.0, 0.3}});
    const Box w{v2(-0.5, -0.5), v2(0.5, 0.5)};
    const EffectiveSolution sol(g, table, w, 0.2);
    for (double a : {-0.4, 0.1})
        for (double b : {-0.2, 0.3}) {
            const Vec x0 = v2(a, b);
            const Vec x = sol.forward(x0, 0.15);
            CHECK((sol.invert(x, 0.15) - x0).cwiseAbs().maxCoeff() <= 1e-10);
            const U0Eval e = sol.eval(x, 0.15);
            CHECK((e.grad - g.gradient(x0)).cwiseAbs().maxCoeff() <= 1e-9);
            CHECK(std::abs(e.dt + e.grad.squaredNorm()) <= 1e-7);
            CHECK(sol.jacobian(x0, 0.15) >= 1.0 - 1e-12);
        }
}

TEST_CASE("degenerate drift is rejected") {
    const ProblemSpec s = fx::pure_quadratic(1, false);
    const auto table = fx::table_1d(s, 32, -0.6, 0.6, 0.05);
    CHECK_THROWS_AS(
        [&] {
            const EffectiveSolution sol(fx::ramp(-0.5, 0.5), table, fx::box1(-1.0, 1.0), 0.25);
            (void)sol.drift(v1(0.0), 0.0);
        }(),
        AdmissibilityError);
}

TEST_CASE("table coverage is enforced") {
    const ProblemSpec s = fx::quadratic_cos();
    const auto table = fx::table_1d(s, 32, 1.0, 1.2, 0.05);
    CHECK_THROWS_AS(EffectiveSolution(fx::ramp(), table, fx::box1(-1.0, 1.0), 0.25), CoverageError);
}
