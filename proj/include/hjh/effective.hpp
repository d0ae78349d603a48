#pragma once

#include <array>
#include <memory>
#include <vector>

#include "hjh/cell.hpp"
#include "hjh/problem.hpp"

namespace hjh {

/// Axis-aligned box in R^n.
struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Vec& x, double slack = 0.0) const;
    Box inflated(double margin) const;
};

struct EffectiveOptions {
    double zeta_min = 1e-2;   // lower bound on |Bbar| along the fan
    double source_dx = 0.0;   // fan source spacing; 0 picks window width / 2000
    int time_samples = 33;    // t-levels used by the construction checks
};

/// Straight characteristics xi(t; x) = x + t Bbar(Dg(x)) sampled on a source grid.
struct CharacteristicFan {
    Box sources;                  // inflated window
    std::array<int, 2> counts{1, 1};
    double dx = 0.0;
    std::vector<Vec> x;           // source nodes (axis 0 fastest)
    std::vector<Vec> p;           // Dg at the node
    std::vector<Vec> speed;       // Bbar(Dg)
    std::vector<double> rate;     // p . Bbar - Hbar
    double T = 0.0;
    double min_jacobian = 1.0;    // smallest det(I + t D2Hbar D2g) seen at construction
    double max_speed = 0.0;
};

struct U0Eval {
    double value = 0.0;
    Vec grad;
    Mat hess;
    double dt = 0.0;
    Vec source;   // foot of the characteristic
};

/// Smooth solution of u_t + Hbar(Du) = 0, u(x,0) = g(x), by characteristics.
class EffectiveSolution {
public:
    EffectiveSolution(InitialData g, std::shared_ptr<const EffectiveTable> table, Box window, double T,
                      const EffectiveOptions& opts = {});

    const InitialData& g() const noexcept { return g_; }
    const EffectiveTable& table() const noexcept { return *table_; }
    std::shared_ptr<const EffectiveTable> table_ptr() const noexcept { return table_; }
    const Box& window() const noexcept { return window_; }
    double T() const noexcept { return fan_.T; }
    const CharacteristicFan& fan() const noexcept { return fan_; }
    const EffectiveOptions& options() const noexcept { return opts_; }
    int dim() const noexcept { return g_.dim(); }

    Vec forward(const Vec& x0, double t) const;
    /// Source x0 with xi(t; x0) = x.
    Vec invert(const Vec& x, double t) const;
    U0Eval eval(const Vec& x, double t) const;
    /// D_x^alpha d_t^j u0: analytic up to second order in x and first order
    /// in t, centered differences with a fan-spacing step beyond that.
    double derivative(const Vec& x, double t, std::array<int, 2> alpha, int j) const;
    /// Bbar(Du0(x,t)); throws AdmissibilityError when |Bbar| < zeta_min.
    Vec drift(const Vec& x, double t) const;
    double jacobian(const Vec& x0, double t) const;

private:
    void build_fan();

    InitialData g_;
    std::shared_ptr<const EffectiveTable> table_;
    Box window_;
    EffectiveOptions opts_;
    CharacteristicFan fan_;
};

EffectiveSolution solve_effective(const InitialData& g, std::shared_ptr<const EffectiveTable> table,
                                  const Box& window, double T, const EffectiveOptions& opts = {});

U0Eval eval_u0(const EffectiveSolution& sol, const Vec& x, double t);
Vec invert_characteristics(const EffectiveSolution& sol, const Vec& x, double t);
Vec drift_field(const EffectiveSolution& sol, const Vec& x, double t);

/// Largest |Bbar| over the gradient range of separable initial data.
double max_drift_speed(const InitialData& g, const EffectiveTable& table);

}  // namespace hjh
