#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "check_util.hpp"
#include "hjh/cell.hpp"
#include "hjh/errors.hpp"
#include "hjh/problem.hpp"

namespace hjh {

using detail::describe;
using detail::MarginTracker;

ValidationReport validate_initial_data(const InitialData& g, const EffectiveTable& table, const Vec& window_lo,
                                       const Vec& window_hi, std::size_t samples,
                                       const InitialDataCheckOptions& opts) {
    const int n = g.dim();
    if (table.dim() != n) throw InvalidInput("validate_initial_data: table and initial data dimensions differ");
    if (window_lo.size() != n || window_hi.size() != n)
        throw InvalidInput("validate_initial_data: window dimension mismatch");
    if (samples < 1) throw InvalidInput("validate_initial_data: samples must be >= 1");
    for (int i = 0; i < n; ++i)
        if (!(window_lo(i) <= window_hi(i))) throw InvalidInput("validate_initial_data: empty window");

    // Deterministic lattice over the window plus seeded uniform samples.
    std::vector<Vec> xs;
    const int per = n == 1 ? static_cast<int>(samples) : std::max(2, static_cast<int>(std::sqrt(double(samples))));
    auto lattice = [&](int i, int a) {
        return per == 1 ? 0.5 * (window_lo(a) + window_hi(a))
                        : window_lo(a) + (window_hi(a) - window_lo(a)) * double(i) / (per - 1);
    };
    if (n == 1) {
        for (int i = 0; i < per; ++i) xs.push_back(Vec::Constant(1, lattice(i, 0)));
    } else {
        for (int j = 0; j < per; ++j)
            for (int i = 0; i < per; ++i) {
                Vec x(2);
                x << lattice(i, 0), lattice(j, 1);
                xs.push_back(x);
            }
    }
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t s = 0; s < samples; ++s) {
        Vec x(n);
        for (int a = 0; a < n; ++a) x(a) = window_lo(a) + (window_hi(a) - window_lo(a)) * u(rng);
        xs.push_back(x);
    }

    ValidationReport report;
    report.seed = opts.seed;

    {
        MarginTracker t("g-zero");
        const double g0 = g.value(zero_vec(n));
        t.add(1e-14 - std::abs(g0), [&] { return "g(0)=" + std::to_string(g0); });
        report.checks.push_back(t.finish());
    }
    {
        MarginTracker t("convexity-g");
        for (const Vec& x : xs) {
            Eigen::SelfAdjointEigenSolver<Mat> es(g.hessian(x));
            t.add(es.eigenvalues().minCoeff() + 1e-12, [&] { return describe("x", x); });
        }
        report.checks.push_back(t.finish());
    }
    const int k_top = g.family() == InitialData::Family::custom ? std::min(opts.k_max, 2) : opts.k_max;
    for (int k = 1; k <= k_top; ++k) {
        MarginTracker t("bound-D" + std::to_string(k) + "g");
        for (const Vec& x : xs) t.add(opts.L - g.derivative_norm(k, x), [&] { return describe("x", x); });
        report.checks.push_back(t.finish());
    }

    // Coverage is a hard precondition: the drift check below needs the table.
    for (const Vec& x : xs) {
        const Vec p = g.gradient(x);
        if (!table.covers(p))
            throw CoverageError("validate_initial_data: Dg leaves the tabulated p-range at " + describe("x", x) + " " +
                                describe("Dg", p));
    }
    {
        MarginTracker t("drift-nondegenerate");
        for (const Vec& x : xs) {
            const Vec p = g.gradient(x);
            t.add(table.B(p).norm() - opts.zeta_min, [&] { return describe("x", x) + " " + describe("Dg", p); });
        }
        report.checks.push_back(t.finish());
    }
    return report;
}

}  // namespace hjh
