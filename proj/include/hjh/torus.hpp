#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hjh/linalg.hpp"

namespace hjh {

using Field = Eigen::VectorXd;

/// Uniform grid on the unit torus [0,1)^n with N nodes per axis. Node j has
/// multi-index (i0, i1) with flat index i0 + N i1 (axis 0 fastest).
class TorusGrid {
public:
    TorusGrid() = default;
    /// Throws InvalidInput unless n is 1 or 2 and N >= 8 is even.
    TorusGrid(int dim, int N);

    int dim() const noexcept { return dim_; }
    int N() const noexcept { return N_; }
    double h() const noexcept { return 1.0 / N_; }
    int size() const noexcept { return dim_ == 1 ? N_ : N_ * N_; }

    int wrap(int i) const noexcept { return ((i % N_) + N_) % N_; }
    /// Flat index of the node shifted by (d0, d1) from node j, wrapped.
    int shift(int j, int d0, int d1 = 0) const noexcept;
    Vec node(int j) const;

    bool operator==(const TorusGrid& o) const noexcept { return dim_ == o.dim_ && N_ == o.N_; }

private:
    int dim_ = 1;
    int N_ = 8;
};

/// Centered second-order differences on the torus.
Field diff1(const TorusGrid& g, const Field& f, int axis);
Field diff2(const TorusGrid& g, const Field& f, int axis);
Field diff12(const TorusGrid& g, const Field& f);

/// Discrete gradient as an n x size matrix and the Hessian entries
/// (00, 01, 11) as rows of an n(n+1)/2 x size matrix.
Eigen::MatrixXd gradient(const TorusGrid& g, const Field& f);
Eigen::MatrixXd hessian(const TorusGrid& g, const Field& f);

/// -tr(A D^2 f) at every node given nodal diffusion matrices.
Field trace_term(const TorusGrid& g, const std::vector<Mat>& A, const Field& f);

/// Periodic cubic spline through uniformly spaced samples, stored as values
/// plus second-derivative moments.
class PeriodicSpline {
public:
    PeriodicSpline() = default;
    explicit PeriodicSpline(std::vector<double> values);

    double operator()(double y) const;
    double derivative(double y) const;

private:
    std::vector<double> f_;
    std::vector<double> m_;
};

/// Sampled scalar function on the torus with periodic cubic interpolation
/// (tensor-product splines in 2D).
class PeriodicField {
public:
    PeriodicField() = default;
    PeriodicField(TorusGrid grid, Field values);

    const TorusGrid& grid() const noexcept { return grid_; }
    const Field& values() const noexcept { return values_; }
    double operator[](int j) const { return values_(j); }

    /// Interpolated value at an arbitrary point; exact at nodes and invariant
    /// under lattice shifts of y.
    double operator()(const Vec& y) const;

private:
    TorusGrid grid_;
    Field values_;
    std::vector<PeriodicSpline> rows_;  // one spline per axis-0 row
};

/// Wraps y into [0, 1) per component.
double wrap_unit(double y);

}  // namespace hjh
