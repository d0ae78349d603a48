#include "hjh/torus.hpp"

#include <cmath>

#include "hjh/errors.hpp"

namespace hjh {

TorusGrid::TorusGrid(int dim, int N) : dim_(dim), N_(N) {
    if (dim != 1 && dim != 2) throw InvalidInput("torus grid: dimension must be 1 or 2");
    if (N < 8 || N % 2 != 0) throw InvalidInput("torus grid: N must be even and at least 8, got " + std::to_string(N));
}

int TorusGrid::shift(int j, int d0, int d1) const noexcept {
    if (dim_ == 1) return wrap(j + d0);
    const int i0 = j % N_, i1 = j / N_;
    return wrap(i0 + d0) + N_ * wrap(i1 + d1);
}

Vec TorusGrid::node(int j) const {
    Vec y(dim_);
    y(0) = double(j % N_) / N_;
    if (dim_ == 2) y(1) = double(j / N_) / N_;
    return y;
}

Field diff1(const TorusGrid& g, const Field& f, int axis) {
    Field d(g.size());
    const double s = 0.5 * g.N();
    for (int j = 0; j < g.size(); ++j) {
        const int jp = axis == 0 ? g.shift(j, 1) : g.shift(j, 0, 1);
        const int jm = axis == 0 ? g.shift(j, -1) : g.shift(j, 0, -1);
        d(j) = s * (f(jp) - f(jm));
    }
    return d;
}

Field diff2(const TorusGrid& g, const Field& f, int axis) {
    Field d(g.size());
    const double s = double(g.N()) * g.N();
    for (int j = 0; j < g.size(); ++j) {
        const int jp = axis == 0 ? g.shift(j, 1) : g.shift(j, 0, 1);
        const int jm = axis == 0 ? g.shift(j, -1) : g.shift(j, 0, -1);
        d(j) = s * (f(jp) - 2.0 * f(j) + f(jm));
    }
    return d;
}

Field diff12(const TorusGrid& g, const Field& f) {
    Field d(g.size());
    const double s = 0.25 * double(g.N()) * g.N();
    for (int j = 0; j < g.size(); ++j) {
        d(j) = s * (f(g.shift(j, 1, 1)) - f(g.shift(j, 1, -1)) - f(g.shift(j, -1, 1)) + f(g.shift(j, -1, -1)));
    }
    return d;
}

Eigen::MatrixXd gradient(const TorusGrid& g, const Field& f) {
    Eigen::MatrixXd G(g.dim(), g.size());
    for (int a = 0; a < g.dim(); ++a) G.row(a) = diff1(g, f, a).transpose();
    return G;
}

Eigen::MatrixXd hessian(const TorusGrid& g, const Field& f) {
    if (g.dim() == 1) return diff2(g, f, 0).transpose();
    Eigen::MatrixXd Hm(3, g.size());
    Hm.row(0) = diff2(g, f, 0).transpose();
    Hm.row(1) = diff12(g, f).transpose();
    Hm.row(2) = diff2(g, f, 1).transpose();
    return Hm;
}

Field trace_term(const TorusGrid& g, const std::vector<Mat>& A, const Field& f) {
    const Eigen::MatrixXd Hm = hessian(g, f);
    Field r(g.size());
    for (int j = 0; j < g.size(); ++j) {
        if (g.dim() == 1) {
            r(j) = -A[j](0, 0) * Hm(0, j);
        } else {
            r(j) = -(A[j](0, 0) * Hm(0, j) + 2.0 * A[j](0, 1) * Hm(1, j) + A[j](1, 1) * Hm(2, j));
        }
    }
    return r;
}

double wrap_unit(double y) {
    double r = y - std::floor(y);
    if (r >= 1.0) r -= 1.0;  // guards y = -tiny
    return r;
}

// ---------------------------------------------------------------------------

namespace {

// Solves the cyclic system m[i-1] + 4 m[i] + m[i+1] = r[i] by
// Sherman-Morrison on the Thomas algorithm.
std::vector<double> cyclic_solve(const std::vector<double>& r) {
    const int n = static_cast<int>(r.size());
    // A = T + u v^T with T tridiagonal (corner entries removed and the
    // diagonal adjusted), u = (gam, 0, .., 1), v = (1, 0, .., 1/gam).
    const double gam = -4.0;
    std::vector<double> diag(n, 4.0);
    diag[0] -= gam;
    diag[n - 1] -= 1.0 / gam;
    auto thomas = [&](const std::vector<double>& rhs) {
        std::vector<double> c(n), d(n), x(n);
        c[0] = 1.0 / diag[0];
        d[0] = rhs[0] / diag[0];
        for (int i = 1; i < n; ++i) {
            const double m = diag[i] - c[i - 1];
            c[i] = 1.0 / m;
            d[i] = (rhs[i] - d[i - 1]) / m;
        }
        x[n - 1] = d[n - 1];
        for (int i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
        return x;
    };
    std::vector<double> u(n, 0.0);
    u[0] = gam;
    u[n - 1] = 1.0;
    const auto y = thomas(r);
    const auto z = thomas(u);
    const double fact = (y[0] + y[n - 1] / gam) / (1.0 + z[0] + z[n - 1] / gam);
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = y[i] - fact * z[i];
    return x;
}

}  // namespace

PeriodicSpline::PeriodicSpline(std::vector<double> values) : f_(std::move(values)) {
    const int n = static_cast<int>(f_.size());
    if (n < 3) throw InvalidInput("periodic spline: need at least 3 samples");
    const double h = 1.0 / n;
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) r[i] = 6.0 * (f_[(i + 1) % n] - 2.0 * f_[i] + f_[(i + n - 1) % n]) / (h * h);
    m_ = cyclic_solve(r);
}

double PeriodicSpline::operator()(double y) const {
    const int n = static_cast<int>(f_.size());
    const double s = wrap_unit(y) * n;
    int i = static_cast<int>(s);
    if (i >= n) i = n - 1;
    const double t = s - i;
    const int i1 = (i + 1) % n;
    const double h = 1.0 / n;
    const double a = 1.0 - t;
    return a * f_[i] + t * f_[i1] + h * h / 6.0 * ((a * a * a - a) * m_[i] + (t * t * t - t) * m_[i1]);
}

double PeriodicSpline::derivative(double y) const {
    const int n = static_cast<int>(f_.size());
    const double s = wrap_unit(y) * n;
    int i = static_cast<int>(s);
    if (i >= n) i = n - 1;
    const double t = s - i;
    const int i1 = (i + 1) % n;
    const double h = 1.0 / n;
    const double a = 1.0 - t;
    return (f_[i1] - f_[i]) / h + h / 6.0 * (-(3.0 * a * a - 1.0) * m_[i] + (3.0 * t * t - 1.0) * m_[i1]);
}

PeriodicField::PeriodicField(TorusGrid grid, Field values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw InvalidInput("periodic field: value count does not match grid");
    const int N = grid_.N();
    const int rows = grid_.dim() == 1 ? 1 : N;
    rows_.reserve(rows);
    for (int r = 0; r < rows; ++r) {
        rows_.emplace_back(std::vector<double>(values_.data() + r * N, values_.data() + (r + 1) * N));
    }
}

double PeriodicField::operator()(const Vec& y) const {
    if (grid_.dim() == 1) return rows_[0](y(0));
    std::vector<double> col(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) col[r] = rows_[r](y(0));
    return PeriodicSpline(std::move(col))(y(1));
}

}  // namespace hjh
