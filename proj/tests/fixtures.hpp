#pragma once

#include <cmath>
#include <memory>

#include "hjh/cell.hpp"
#include "hjh/correctors.hpp"
#include "hjh/effective.hpp"
#include "hjh/problem.hpp"

namespace fx {

using namespace hjh;

inline Vec v1(double a) { return Vec::Constant(1, a); }
inline Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

/// 1D, A = 1, H = q^2 + 0.5 cos(2 pi y).
inline ProblemSpec quadratic_cos() {
    ProblemSpec s;
    s.dim = 1;
    s.A = Diffusion::identity(1);
    s.H = QuadraticHamiltonian::separable(1, 1.0, {}, TrigSeries(0.0, {{{1}, 0.5, 0.0}}));
    s.bounds.alpha_prime = 0.5;
    s.bounds.beta_prime = 0.5;
    s.bounds.K = 50.0;
    s.bounds.L = 1e6;
    return s;
}

/// H = |p|^2 with a y-dependent diffusion.
inline ProblemSpec pure_quadratic(int n, bool varying_A = true) {
    ProblemSpec s;
    s.dim = n;
    if (!varying_A) {
        s.A = Diffusion::identity(n);
    } else if (n == 1) {
        s.A = Diffusion(1, {{TrigSeries(1.0, {{{1}, 0.3, 0.1}})}});
        s.bounds.lambda = 0.5;
        s.bounds.Lambda = 1.5;
    } else {
        s.A = Diffusion(2, {{TrigSeries(1.0, {{{1, 0}, 0.2, 0.0}}), TrigSeries(0.1, {{{0, 1}, 0.05, 0.0}})},
                            {TrigSeries(0.1, {{{0, 1}, 0.05, 0.0}}), TrigSeries(1.0, {{{1, 1}, 0.0, 0.2}})}});
        s.bounds.lambda = 0.5;
        s.bounds.Lambda = 1.5;
    }
    s.H = QuadraticHamiltonian::separable(n, 1.0, {}, TrigSeries(0.0));
    s.bounds.K = 50.0;
    s.bounds.L = 1e6;
    return s;
}

/// 2D, varying A and a potential with mixed modes.
inline ProblemSpec varying_2d() {
    ProblemSpec s;
    s.dim = 2;
    s.A = Diffusion(2, {{TrigSeries(1.0, {{{1, 0}, 0.2, 0.0}}), TrigSeries(0.0)},
                        {TrigSeries(0.0), TrigSeries(1.0, {{{0, 1}, 0.0, 0.2}})}});
    s.H = QuadraticHamiltonian::separable(
        2, 1.0, {}, TrigSeries(0.0, {{{1, 0}, 0.3, 0.0}, {{0, 1}, 0.2, 0.0}, {{1, 1}, 0.0, 0.1}}));
    s.bounds = {0.8, 1.2, 1.0, 0.6, 1.0, 0.6, 50.0, 1e6};
    return s;
}

inline InitialData ramp(double pm = 1.0, double pp = 1.5, double sigma = 0.25) {
    return InitialData::logcosh_ramp({RampAxis{pm, pp, sigma}});
}

inline std::shared_ptr<const EffectiveTable> table_1d(const ProblemSpec& s, int N, double lo, double hi,
                                                      double dp = 0.01) {
    return std::make_shared<const EffectiveTable>(effective_table(s, TorusGrid(1, N), v1(lo), v1(hi), dp));
}

/// Hierarchy of order m for 1D data over a window, slow grid hx, nt.
struct Built {
    std::shared_ptr<const EffectiveTable> table;
    std::shared_ptr<const EffectiveSolution> sol;
    SlowGrid slow;
    std::shared_ptr<CorrectorHierarchy> h;
};

inline Built build_1d(const ProblemSpec& s, const InitialData& g, int N, double plo, double phi, const Box& region,
                      double T, double hx, int nt, int m) {
    Built b;
    b.table = table_1d(s, N, plo, phi);
    b.slow = make_slow_grid(region, T, hx, nt, m, max_drift_speed(g, *b.table));
    b.sol = std::make_shared<const EffectiveSolution>(g, b.table, b.slow.box(), T);
    b.h = std::make_shared<CorrectorHierarchy>(build_hierarchy(b.sol, s, TorusGrid(1, N), b.slow, m));
    return b;
}

inline Box box1(double lo, double hi) { return Box{v1(lo), v1(hi)}; }

}  // namespace fx
