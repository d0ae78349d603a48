#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hjh/errors.hpp"

using namespace hjh;
using fx::v1;

namespace {

const fx::Built& affine3() {
    static const fx::Built b = fx::build_1d(fx::quadratic_cos(), InitialData::affine(v1(1.5)), 64, 1.3, 1.7,
                                            fx::box1(-0.5, 0.5), 0.25, 1.0 / 16, 9, 3);
    return b;
}

const fx::Built& ramp2() {
    static const fx::Built b =
        fx::build_1d(fx::quadratic_cos(), fx::ramp(), 64, 0.9, 1.6, fx::box1(-0.25, 0.25), 0.25, 1.0 / 32, 17, 2);
    return b;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        if (!std::isnan(x)) m = std::max(m, std::abs(x));
    return m;
}

double slope(const std::vector<double>& eps, const std::vector<double>& err) {
    // Least squares in log-log coordinates.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double x = std::log(eps[i]), y = std::log(err[i]);
        sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("affine data: higher correctors and slow means vanish") {
    const CorrectorHierarchy& h = *affine3().h;
    const auto& d = h.data();
    for (int k = 1; k <= 2; ++k) {
        CHECK(max_abs(d.fbar[k]) <= 1e-10);
        CHECK(max_abs(d.ubar[k]) <= 1e-10);
    }
    int valid = 0;
    for (int k = 2; k <= 3; ++k)
        for (int node = 0; node < h.slow().size(); ++node)
            if (h.phi(k, node).size() > 0) {
                ++valid;
                CHECK(h.phi(k, node).cwiseAbs().maxCoeff() <= 1e-10);
            }
    CHECK(valid > 0);
}

TEST_CASE("affine data: residual vanishes to roundoff for every eps and order") {
    const CorrectorHierarchy& h = *affine3().h;
    std::vector<double> eps;
    for (int j = 1; j <= 6; ++j) eps.push_back(std::ldexp(1.0, -j));
    for (int m = 1; m <= 3; ++m) {
        const auto res = residual_field(h, eps, fx::box1(-0.25, 0.25), m);
        REQUIRE(res.size() == eps.size());
        for (const auto& r : res) {
            CHECK_MESSAGE(r.max_psi <= 1e-8, "m=" << m << " eps=" << r.eps);
            CHECK(r.direct_mismatch <= 1e-8);
        }
    }
}

TEST_CASE("normalizations and consistency of the first-order cell data") {
    const CorrectorHierarchy& h = *ramp2().h;
    const auto& d = h.data();
    const EffectiveTable& t = h.effective().table();
    int checked = 0;
    for (int node = 0; node < h.slow().size(); ++node) {
        if (h.phi(1, node).size() == 0) continue;
        ++checked;
        CHECK(h.phi(1, node)(0) == 0.0);
        CHECK(d.chi[node][0](0) == 0.0);
        CHECK(std::abs(d.bbar[node](0) - t.B(d.p0[node])(0)) <= 1e-6);
        CHECK(std::abs(d.gamma[node] - t.H(d.p0[node])) <= 1e-8);
    }
    CHECK(checked == h.slow().size());
    CHECK(h.chi_consistency() <= 1e-6);
}

TEST_CASE("ramp: direct and assembled residuals agree") {
    const CorrectorHierarchy& h = *ramp2().h;
    const std::vector<double> eps{0.25, 0.125};
    for (const auto& r : residual_field(h, eps, fx::box1(-0.2, 0.2))) CHECK(r.direct_mismatch <= 1e-8);
}

TEST_CASE("ramp: residual rates") {
    const CorrectorHierarchy& h = *ramp2().h;
    std::vector<double> eps;
    for (int j = 2; j <= 6; ++j) eps.push_back(std::ldexp(1.0, -j));
    for (int m = 1; m <= 2; ++m) {
        std::vector<double> err;
        for (const auto& r : residual_field(h, eps, fx::box1(-0.2, 0.2), m)) err.push_back(r.max_psi);
        CHECK_MESSAGE(slope(eps, err) >= m - 0.3, "m=" << m);
    }
}

TEST_CASE("expansion: order 0 is u0 and the correction is O(eps)") {
    const CorrectorHierarchy& h = *ramp2().h;
    const EffectiveSolution& sol = h.effective();
    for (double x : {-0.2, 0.0, 0.13}) {
        for (double t : {0.0, 0.1}) {
            CHECK(evaluate_expansion(h, 0.25, v1(x), t, false, 0).eta == doctest::Approx(sol.eval(v1(x), t).value));
            const double d1 = std::abs(evaluate_expansion(h, 1.0 / 8, v1(x), t).eta - sol.eval(v1(x), t).value);
            const double d2 = std::abs(evaluate_expansion(h, 1.0 / 16, v1(x), t).eta - sol.eval(v1(x), t).value);
            CHECK(d1 <= 0.5 / 8);
            CHECK(d2 <= 0.5 / 16);
        }
    }
    // At t = 0 the expansion differs from g by eps w_1(x, 0, x/eps), which is
    // not identically zero: an initial layer.
    double gap = 0.0;
    for (int i = 0; i < 32; ++i) {
        const double x = -0.2 + 0.4 * i / 31.0;
        gap = std::max(gap, std::abs(evaluate_expansion(h, 1.0 / 8, v1(x), 0.0).eta - sol.g().value(v1(x))));
    }
    CHECK(gap > 1e-4);
}

TEST_CASE("expansion derivatives against finite differences") {
    const CorrectorHierarchy& h = *ramp2().h;
    const double eps = 1.0 / 8, dx = 1e-5;
    for (double x : {-0.1, 0.07}) {
        const ExpansionValue e = evaluate_expansion(h, eps, v1(x), 0.1, true);
        const double fd = (evaluate_expansion(h, eps, v1(x + dx), 0.1).eta -
                           evaluate_expansion(h, eps, v1(x - dx), 0.1).eta) / (2 * dx);
        // D_y uses the centered cell difference; the spline derivative differs at O(N^-2).
        CHECK(e.grad(0) == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("order limits") {
    const fx::Built& b = ramp2();
    const TorusGrid g(1, 64);
    CHECK_THROWS_AS(build_hierarchy(b.sol, b.h->spec(), g, b.slow, 0), InvalidInput);
    CHECK_THROWS_AS(build_hierarchy(b.sol, b.h->spec(), g, b.slow, 4), InvalidInput);
    CHECK_THROWS_AS(residual_field(*b.h, std::vector<double>{0.1}, fx::box1(-0.2, 0.2), 3), InvalidInput);
    CHECK_THROWS_AS(evaluate_expansion(*b.h, 0.6, v1(0.0), 0.1), InvalidInput);
    CHECK_THROWS_AS(evaluate_expansion(*b.h, 0.1, v1(0.0), 0.3), CoverageError);
}

TEST_CASE("slow mean converges under slow-grid refinement") {
    // ubar_1 at (x, t) = (0, 0.25) on three nested slow grids, read off by
    // cubic interpolation in x at the last time level.
    std::vector<double> u;
    for (int r : {1, 2, 4}) {
        const fx::Built b = fx::build_1d(fx::quadratic_cos(), fx::ramp(), 32, 0.9, 1.6, fx::box1(-0.1, 0.1), 0.25,
                                         1.0 / (8 * r), 4 * r + 1, 2);
        const SlowGrid& s = b.slow;
        const double tau = (0.0 - s.lo(0)) / s.hx;
        const int i0 = static_cast<int>(std::floor(tau)) - 1;
        double v = 0.0;
        for (int i = 0; i < 4; ++i) {
            double w = 1.0;
            for (int j = 0; j < 4; ++j)
                if (j != i) w *= (tau - (i0 + j)) / static_cast<double>(i - j);
            v += w * b.h->ubar(1, s.index(i0 + i, 0, s.nt - 1));
        }
        u.push_back(v);
    }
    MESSAGE("ubar_1(0, T): " << u[0] << " " << u[1] << " " << u[2]);
    CHECK(std::log2(std::abs(u[0] - u[1]) / std::abs(u[1] - u[2])) >= 1.9);
}
