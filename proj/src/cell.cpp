#include "hjh/cell.hpp"

#include <cmath>
#include <sstream>

#include "hjh/errors.hpp"
#include "hjh/parallel.hpp"

namespace hjh {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

CellDiscretization::CellDiscretization(const ProblemSpec& spec, TorusGrid grid) : spec_(spec), grid_(grid) {
    if (spec.dim != grid.dim()) throw InvalidInput("cell: problem and grid dimensions differ");
    A_.reserve(grid.size());
    y_.reserve(grid.size());
    for (int j = 0; j < grid.size(); ++j) {
        y_.push_back(grid.node(j));
        A_.push_back(spec.A(y_.back()));
    }
    if (spec.H->polynomial_degree() >= 0 && spec.H->polynomial_degree() <= 2) {
        forms_.reserve(grid.size());
        for (int j = 0; j < grid.size(); ++j) {
            auto q = spec.H->quadratic_at(y_[j]);
            if (!q) {
                forms_.clear();
                break;
            }
            forms_.push_back(*q);
        }
    }
}

double CellDiscretization::H(int j, const Vec& q) const {
    if (forms_.empty()) return spec_.H->value(q, y_[j]);
    const auto& f = forms_[j];
    return q.dot(f.M * q) + f.b.dot(q) + f.V;
}

Vec CellDiscretization::DH(int j, const Vec& q) const {
    if (forms_.empty()) return spec_.H->gradient(q, y_[j]);
    const auto& f = forms_[j];
    return 2.0 * f.M * q + f.b;
}

Mat CellDiscretization::D2H(int j, const Vec& q) const {
    if (forms_.empty()) return spec_.H->hessian(q, y_[j]);
    return 2.0 * forms_[j].M;
}

double CellDiscretization::DkH(int k, int j, const Vec& q, std::span<const Vec> dirs) const {
    if (forms_.empty()) return spec_.H->directional(k, q, y_[j], dirs);
    switch (k) {
        case 0: return H(j, q);
        case 1: return DH(j, q).dot(dirs[0]);
        case 2: return 2.0 * dirs[0].dot(forms_[j].M * dirs[1]);
        default: return 0.0;
    }
}

// ---------------------------------------------------------------------------
// Discrete operators

namespace {

// First-difference direction per node and axis: 0 centered, +1 forward, -1 backward.
using Directions = Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>;

int neighbor(const TorusGrid& g, int j, int axis, int d) {
    return axis == 0 ? g.shift(j, d) : g.shift(j, 0, d);
}

// Discrete gradient p + Dw at every node (n x size).
Eigen::MatrixXd shifted_gradient(const TorusGrid& g, const Vec& p, const Field& w, const Directions* dirs) {
    const int n = g.dim();
    const double N = g.N();
    Eigen::MatrixXd q(n, g.size());
    for (int j = 0; j < g.size(); ++j) {
        for (int a = 0; a < n; ++a) {
            const int d = dirs ? (*dirs)(a, j) : 0;
            const int jp = neighbor(g, j, a, 1), jm = neighbor(g, j, a, -1);
            double dw;
            if (d == 0) dw = 0.5 * N * (w(jp) - w(jm));
            else if (d > 0) dw = N * (w(jp) - w(j));
            else dw = N * (w(j) - w(jm));
            q(a, j) = p(a) + dw;
        }
    }
    return q;
}

// Chooses backward differences where the drift is positive and forward
// differences where it is negative.
Directions upwind_directions(const CellDiscretization& disc, const Vec& p, const Field& w) {
    const auto q = shifted_gradient(disc.grid(), p, w, nullptr);
    Directions d(disc.dim(), disc.size());
    for (int j = 0; j < disc.size(); ++j) {
        const Vec b = disc.DH(j, q.col(j));
        for (int a = 0; a < disc.dim(); ++a) d(a, j) = b(a) > 0.0 ? -1 : 1;
    }
    return d;
}

// Triplets of -tr(A D^2 .) + B . D + shift I.
void add_operator(std::vector<Triplet>& t, const TorusGrid& g, const std::vector<Mat>& A, const Eigen::MatrixXd& B,
                  const Directions* dirs, double shift) {
    const int n = g.dim();
    const double N = g.N();
    const double N2 = N * N;
    for (int j = 0; j < g.size(); ++j) {
        const Mat& a = A[j];
        double diag = shift;
        for (int ax = 0; ax < n; ++ax) {
            const int jp = neighbor(g, j, ax, 1), jm = neighbor(g, j, ax, -1);
            const double c = -a(ax, ax) * N2;
            t.emplace_back(j, jp, c);
            t.emplace_back(j, jm, c);
            diag += -2.0 * c;
            const double b = B(ax, j);
            const int d = dirs ? (*dirs)(ax, j) : 0;
            if (d == 0) {
                t.emplace_back(j, jp, 0.5 * N * b);
                t.emplace_back(j, jm, -0.5 * N * b);
            } else if (d > 0) {
                t.emplace_back(j, jp, N * b);
                diag -= N * b;
            } else {
                t.emplace_back(j, jm, -N * b);
                diag += N * b;
            }
        }
        if (n == 2) {
            const double c = -2.0 * a(0, 1) * 0.25 * N2;
            t.emplace_back(j, g.shift(j, 1, 1), c);
            t.emplace_back(j, g.shift(j, -1, -1), c);
            t.emplace_back(j, g.shift(j, 1, -1), -c);
            t.emplace_back(j, g.shift(j, -1, 1), -c);
        }
        t.emplace_back(j, j, diag);
    }
}

void add_border(std::vector<Triplet>& t, int size) {
    for (int j = 0; j < size; ++j) t.emplace_back(j, size, -1.0);
    t.emplace_back(size, 0, 1.0);
}

// Nonlinear residual -tr(A D^2 w) + H(p + Dw) + shift w - gamma.
Field nonlinear_residual(const CellDiscretization& disc, const Vec& p, const Field& w, double gamma, double shift,
                         const Directions* dirs) {
    const auto q = shifted_gradient(disc.grid(), p, w, dirs);
    Field r = trace_term(disc.grid(), disc.A(), w);
    for (int j = 0; j < disc.size(); ++j) r(j) += disc.H(j, q.col(j)) + shift * w(j) - gamma;
    return r;
}

Eigen::MatrixXd drift_from_gradient(const CellDiscretization& disc, const Eigen::MatrixXd& q) {
    Eigen::MatrixXd B(disc.dim(), disc.size());
    for (int j = 0; j < disc.size(); ++j) B.col(j) = disc.DH(j, q.col(j));
    return B;
}

std::string describe_p(const Vec& p) {
    std::ostringstream os;
    os.precision(10);
    os << "p=(";
    for (int i = 0; i < p.size(); ++i) os << (i ? "," : "") << p(i);
    os << ")";
    return os.str();
}

// Shared damped Newton loop. With bordered = true the unknowns are (w, gamma)
// and the last equation pins w(node 0) = 0; otherwise gamma is fixed at 0 and
// the discount shift makes the Jacobian nonsingular.
struct NewtonResult {
    Field w;
    double gamma;
    CellDiagnostics diag;
};

NewtonResult newton(const CellDiscretization& disc, const Vec& p, Field w, double gamma, double shift, bool bordered,
                    const CellOptions& opts) {
    const int M = disc.size();
    const int unknowns = bordered ? M + 1 : M;
    Directions dirs;
    auto residual = [&](const Field& wv, double gv) {
        const Directions* dp = opts.upwind ? &dirs : nullptr;
        Field r = nonlinear_residual(disc, p, wv, gv, shift, dp);
        if (!bordered) return r;
        Field full(M + 1);
        full.head(M) = r;
        full(M) = wv(0);
        return full;
    };
    if (opts.upwind) dirs = upwind_directions(disc, p, w);
    Field F = residual(w, gamma);
    double norm = F.lpNorm<Eigen::Infinity>();
    int it = 0;
    for (; it < opts.max_iter && norm > opts.tol; ++it) {
        if (!std::isfinite(norm)) throw SolverError("cell Newton: non-finite residual at " + describe_p(p), norm);
        const Directions* dp = opts.upwind ? &dirs : nullptr;
        const auto B = drift_from_gradient(disc, shifted_gradient(disc.grid(), p, w, dp));
        std::vector<Triplet> t;
        t.reserve(std::size_t(M) * (disc.dim() == 1 ? 5 : 13) + M + 1);
        add_operator(t, disc.grid(), disc.A(), B, dp, shift);
        if (bordered) add_border(t, M);
        SpMat J(unknowns, unknowns);
        J.setFromTriplets(t.begin(), t.end());
        Eigen::SparseLU<SpMat> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw SolverError("degenerate linearization at " + describe_p(p), norm);
        const Eigen::VectorXd step = lu.solve(-F);
        if (lu.info() != Eigen::Success || !step.allFinite())
            throw SolverError("degenerate linearization at " + describe_p(p), norm);

        double alpha = 1.0;
        bool accepted = false;
        for (int b = 0; b <= opts.max_backtrack; ++b, alpha *= 0.5) {
            Field wn = w + alpha * step.head(M);
            const double gn = bordered ? gamma + alpha * step(M) : gamma;
            Field Fn = residual(wn, gn);
            const double nn = Fn.lpNorm<Eigen::Infinity>();
            if (std::isfinite(nn) && nn <= (1.0 - 1e-4 * alpha) * norm) {
                w = std::move(wn);
                gamma = gn;
                F = std::move(Fn);
                norm = nn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            throw SolverError("cell Newton: line search exhausted at " + describe_p(p), norm);
        }
        if (opts.upwind) {
            dirs = upwind_directions(disc, p, w);
            F = residual(w, gamma);
            norm = F.lpNorm<Eigen::Infinity>();
        }
    }
    if (norm > opts.tol) {
        throw SolverError("cell Newton: no convergence after " + std::to_string(it) + " iterations at " +
                              describe_p(p),
                          norm);
    }
    return {std::move(w), gamma, {it, norm}};
}

}  // namespace

CellSolution solve_cell(const CellDiscretization& disc, const Vec& p, const CellSolution* init,
                        const CellOptions& opts) {
    if (p.size() != disc.dim()) throw InvalidInput("solve_cell: p has the wrong dimension");
    Field w = Field::Zero(disc.size());
    double gamma = 0.0;
    if (init && init->w.size() == disc.size()) {
        w = init->w;
        gamma = init->gamma;
    } else {
        for (int j = 0; j < disc.size(); ++j) gamma += disc.H(j, p);
        gamma /= disc.size();
    }
    auto r = newton(disc, p, std::move(w), gamma, 0.0, true, opts);
    // The constraint row holds w(node 0) = 0 only to solver precision.
    r.w.array() -= r.w(0);
    return {p, r.gamma, std::move(r.w), r.diag};
}

CellSolution solve_cell(const ProblemSpec& spec, const TorusGrid& grid, const Vec& p, const CellSolution* init,
                        const CellOptions& opts) {
    const CellDiscretization disc(spec, grid);
    return solve_cell(disc, p, init, opts);
}

DiscountedSolution solve_cell_discounted(const CellDiscretization& disc, const Vec& p, double delta,
                                         const CellOptions& opts) {
    if (!(delta > 0.0)) throw InvalidInput("solve_cell_discounted: delta must be positive");
    if (p.size() != disc.dim()) throw InvalidInput("solve_cell_discounted: p has the wrong dimension");
    double mean = 0.0;
    for (int j = 0; j < disc.size(); ++j) mean += disc.H(j, p);
    mean /= disc.size();
    Field w = Field::Constant(disc.size(), -mean / delta);
    auto r = newton(disc, p, std::move(w), 0.0, delta, false, opts);
    return {p, delta, std::move(r.w), r.diag};
}

double cell_residual(const CellDiscretization& disc, const Vec& p, const Field& w, double gamma) {
    return nonlinear_residual(disc, p, w, gamma, 0.0, nullptr).lpNorm<Eigen::Infinity>();
}

Eigen::MatrixXd drift_coefficients(const CellDiscretization& disc, const Vec& p, const Field& w) {
    return drift_from_gradient(disc, shifted_gradient(disc.grid(), p, w, nullptr));
}

// ---------------------------------------------------------------------------
// Linear cell problems

LinearCellOperator::LinearCellOperator(const TorusGrid& grid, const std::vector<Mat>& A, const Eigen::MatrixXd& B)
    : grid_(grid), A_(A), B_(B) {
    const int M = grid.size();
    if (static_cast<int>(A.size()) != M || B.cols() != M || B.rows() != grid.dim())
        throw InvalidInput("linear cell: coefficient sizes do not match the grid");
    for (int j = 0; j < M; ++j) {
        Eigen::SelfAdjointEigenSolver<Mat> es(A[j]);
        if (!(es.eigenvalues().minCoeff() > 0.0))
            throw InvalidInput("linear cell: diffusion is not elliptic at node " + std::to_string(j));
    }
    std::vector<Triplet> t;
    add_operator(t, grid, A, B, nullptr, 0.0);
    L_.resize(M, M);
    L_.setFromTriplets(t.begin(), t.end());
    add_border(t, M);
    SpMat J(M + 1, M + 1);
    J.setFromTriplets(t.begin(), t.end());
    lu_ = std::make_shared<Eigen::SparseLU<SpMat>>();
    lu_->compute(J);
    if (lu_->info() != Eigen::Success) throw SolverError("linear cell: singular bordered system", 0.0);
}

double LinearCellOperator::residual(const Field& v, double gamma, const Field& source, const Vec& p_vec) const {
    Field r = L_ * v;
    r.array() += (B_.transpose() * p_vec).array() + source.array() - gamma;
    return r.lpNorm<Eigen::Infinity>();
}

LinearCellResult LinearCellOperator::solve(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& p_vecs,
                                           double tol) const {
    const int M = grid_.size();
    const int cols = static_cast<int>(sources.cols());
    if (sources.rows() != M || p_vecs.rows() != grid_.dim() || p_vecs.cols() != cols)
        throw InvalidInput("linear cell: right-hand side sizes do not match");
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(M + 1, cols);
    rhs.topRows(M) = -(sources + B_.transpose() * p_vecs);
    Eigen::MatrixXd z = lu_->solve(rhs);
    // One step of iterative refinement against the bordered operator.
    Eigen::MatrixXd r(M + 1, cols);
    r.topRows(M) = rhs.topRows(M) - L_ * z.topRows(M);
    r.topRows(M).rowwise() += z.row(M);
    r.row(M) = -z.row(0);
    z += lu_->solve(r);
    if (!z.allFinite()) throw SolverError("linear cell: non-finite solution", HUGE_VAL);

    LinearCellResult out;
    out.v = z.topRows(M);
    out.gamma = z.row(M).transpose();
    for (int c = 0; c < cols; ++c) out.v.col(c).array() -= out.v(0, c);
    for (int c = 0; c < cols; ++c) {
        const Field s = sources.col(c);
        const Vec pv = p_vecs.col(c);
        const double res = residual(out.v.col(c), out.gamma(c), s, pv);
        const double scale = std::max(1.0, s.lpNorm<Eigen::Infinity>() + B_.cwiseAbs().maxCoeff() * pv.norm());
        out.residual = std::max(out.residual, res / scale);
        if (res > tol * scale) {
            std::ostringstream os;
            os << "linear cell: residual " << res << " above tolerance in column " << c;
            throw SolverError(os.str(), res);
        }
    }
    return out;
}

LinearCellResult solve_linear_cell(const TorusGrid& grid, const std::vector<Mat>& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& sources, const Eigen::MatrixXd& p_vecs, double tol) {
    return LinearCellOperator(grid, A, B).solve(sources, p_vecs, tol);
}

// ---------------------------------------------------------------------------
// Effective table

namespace {

// Quintic Hermite basis on [0,1]: values, first and second derivatives at
// s = 0 (rows 0..2) and s = 1 (rows 3..5). Coefficients in powers of s.
constexpr double kQuintic[6][6] = {
    {1, 0, 0, -10, 15, -6},  {0, 1, 0, -6, 8, -3},  {0, 0, 0.5, -1.5, 1.5, -0.5},
    {0, 0, 0, 10, -15, 6},   {0, 0, 0, -4, 7, -3},  {0, 0, 0, 0.5, -1, 0.5},
};

double poly_derivative(const double* c, int order, double s) {
    double r = 0.0;
    for (int k = 5; k >= order; --k) {
        double f = 1.0;
        for (int q = 0; q < order; ++q) f *= (k - q);
        r = r * s + c[k] * f;
    }
    return r;
}

// d/dx along one axis of a table-shaped array, fourth order where five
// points are available.
std::vector<double> fd_axis(const std::vector<double>& f, const std::array<int, 2>& counts, int axis, double h) {
    std::vector<double> d(f.size());
    const int n = counts[axis];
    const int stride = axis == 0 ? 1 : counts[0];
    const int other = axis == 0 ? counts[1] : counts[0];
    const int ostride = axis == 0 ? counts[0] : 1;
    for (int o = 0; o < other; ++o) {
        auto at = [&](int i) { return f[o * ostride + i * stride]; };
        for (int i = 0; i < n; ++i) {
            double v;
            if (n < 2) {
                v = 0.0;
            } else if (n < 5) {
                if (i == 0) v = (at(1) - at(0)) / h;
                else if (i == n - 1) v = (at(n - 1) - at(n - 2)) / h;
                else v = (at(i + 1) - at(i - 1)) / (2 * h);
            } else if (i >= 2 && i <= n - 3) {
                v = (at(i - 2) - 8 * at(i - 1) + 8 * at(i + 1) - at(i + 2)) / (12 * h);
            } else if (i == 0) {
                v = (-25 * at(0) + 48 * at(1) - 36 * at(2) + 16 * at(3) - 3 * at(4)) / (12 * h);
            } else if (i == 1) {
                v = (-3 * at(0) - 10 * at(1) + 18 * at(2) - 6 * at(3) + at(4)) / (12 * h);
            } else if (i == n - 1) {
                v = (25 * at(n - 1) - 48 * at(n - 2) + 36 * at(n - 3) - 16 * at(n - 4) + 3 * at(n - 5)) / (12 * h);
            } else {
                v = (3 * at(n - 1) + 10 * at(n - 2) - 18 * at(n - 3) + 6 * at(n - 4) - at(n - 5)) / (12 * h);
            }
            d[o * ostride + i * stride] = v;
        }
    }
    return d;
}

std::array<double, 4> lagrange4(double x) {
    // nodes at -1, 0, 1, 2
    return {-x * (x - 1) * (x - 2) / 6.0, (x + 1) * (x - 1) * (x - 2) / 2.0, -(x + 1) * x * (x - 2) / 2.0,
            (x + 1) * x * (x - 1) / 6.0};
}

}  // namespace

EffectiveTable::EffectiveTable(TableData data) : data_(std::move(data)) {
    const int n = data_.dim;
    if (n != 1 && n != 2) throw InvalidInput("effective table: dimension must be 1 or 2");
    if (!(data_.dp > 0.0)) throw InvalidInput("effective table: dp must be positive");
    if (data_.lo.size() != n) throw InvalidInput("effective table: lo has the wrong dimension");
    if (n == 1) data_.counts[1] = 1;
    for (int a = 0; a < n; ++a)
        if (data_.counts[a] < 2) throw InvalidInput("effective table: need at least two nodes per axis");
    const std::size_t m = nodes();
    if (data_.hbar.size() != m || data_.bbar.size() != m || data_.w.size() != m || data_.v.size() != m)
        throw InvalidInput("effective table: sample counts do not match the grid");
    if (data_.diag.size() != m) data_.diag.resize(m);
    build_interpolant();
}

void EffectiveTable::build_interpolant() {
    const std::size_t m = nodes();
    for (auto& d : d_) d.assign(m, 0.0);
    const double h = data_.dp;
    for (std::size_t i = 0; i < m; ++i) {
        d_[0][i] = data_.hbar[i];
        d_[1][i] = data_.bbar[i](0);
        if (data_.dim == 2) d_[3][i] = data_.bbar[i](1);
    }
    d_[2] = fd_axis(d_[1], data_.counts, 0, h);
    if (data_.dim == 2) {
        d_[6] = fd_axis(d_[3], data_.counts, 1, h);
        const auto a = fd_axis(d_[1], data_.counts, 1, h);
        const auto b = fd_axis(d_[3], data_.counts, 0, h);
        for (std::size_t i = 0; i < m; ++i) d_[4][i] = 0.5 * (a[i] + b[i]);
        d_[5] = fd_axis(d_[2], data_.counts, 1, h);
        d_[7] = fd_axis(d_[6], data_.counts, 0, h);
        const auto c = fd_axis(d_[5], data_.counts, 1, h);
        const auto e = fd_axis(d_[7], data_.counts, 0, h);
        for (std::size_t i = 0; i < m; ++i) d_[8][i] = 0.5 * (c[i] + e[i]);
    }
}

Vec EffectiveTable::hi() const {
    Vec h = data_.lo;
    for (int a = 0; a < data_.dim; ++a) h(a) += (data_.counts[a] - 1) * data_.dp;
    return h;
}

Vec EffectiveTable::node_p(int idx) const {
    Vec p = data_.lo;
    p(0) += (idx % data_.counts[0]) * data_.dp;
    if (data_.dim == 2) p(1) += (idx / data_.counts[0]) * data_.dp;
    return p;
}

bool EffectiveTable::covers(const Vec& p) const {
    const Vec h = hi();
    const double slack = 1e-12 * (1.0 + data_.dp);
    for (int a = 0; a < data_.dim; ++a)
        if (!(p(a) >= data_.lo(a) - slack && p(a) <= h(a) + slack)) return false;
    return true;
}

void EffectiveTable::require(const Vec& p) const {
    if (covers(p)) return;
    std::ostringstream os;
    os.precision(10);
    const Vec h = hi();
    os << "effective table: p=(";
    for (int a = 0; a < p.size(); ++a) os << (a ? "," : "") << p(a);
    os << ") outside the tabulated box [";
    for (int a = 0; a < data_.dim; ++a) os << (a ? " x " : "") << data_.lo(a) << "," << h(a);
    os << "]";
    throw CoverageError(os.str());
}

double EffectiveTable::hermite(const Vec& p, int o0, int o1) const {
    require(p);
    const int n = data_.dim;
    int cell[2] = {0, 0};
    double s[2] = {0.0, 0.0};
    for (int a = 0; a < n; ++a) {
        const double u = (p(a) - data_.lo(a)) / data_.dp;
        cell[a] = std::clamp(static_cast<int>(std::floor(u)), 0, data_.counts[a] - 2);
        s[a] = u - cell[a];
    }
    const int orders[2] = {o0, o1};
    // basis[a][corner*3 + i] with derivative order folded in
    double basis[2][6] = {};
    for (int a = 0; a < n; ++a) {
        const double scale_o = std::pow(data_.dp, -orders[a]);
        for (int r = 0; r < 6; ++r) {
            const int i = r % 3;
            basis[a][r] = poly_derivative(kQuintic[r], orders[a], s[a]) * std::pow(data_.dp, i) * scale_o;
        }
    }
    double f = 0.0;
    if (n == 1) {
        for (int c = 0; c < 2; ++c) {
            const int node = cell[0] + c;
            for (int i = 0; i < 3; ++i) f += d_[i][node] * basis[0][3 * c + i];
        }
        return f;
    }
    for (int c1 = 0; c1 < 2; ++c1)
        for (int c0 = 0; c0 < 2; ++c0) {
            const int node = (cell[0] + c0) + data_.counts[0] * (cell[1] + c1);
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 3; ++i) f += d_[i + 3 * j][node] * basis[0][3 * c0 + i] * basis[1][3 * c1 + j];
        }
    return f;
}

double EffectiveTable::H(const Vec& p) const { return hermite(p, 0, 0); }

Vec EffectiveTable::B(const Vec& p) const {
    Vec b(data_.dim);
    b(0) = hermite(p, 1, 0);
    if (data_.dim == 2) b(1) = hermite(p, 0, 1);
    return b;
}

Mat EffectiveTable::D2H(const Vec& p) const {
    Mat m(data_.dim, data_.dim);
    m(0, 0) = hermite(p, 2, 0);
    if (data_.dim == 2) {
        m(0, 1) = m(1, 0) = hermite(p, 1, 1);
        m(1, 1) = hermite(p, 0, 2);
    }
    return m;
}

Field EffectiveTable::lagrange(const Vec& p, const std::function<const Field&(int)>& field) const {
    require(p);
    const int n = data_.dim;
    int start[2] = {0, 0};
    std::array<double, 4> wts[2];
    int npts[2] = {1, 1};
    for (int a = 0; a < n; ++a) {
        const double u = (p(a) - data_.lo(a)) / data_.dp;
        const int cnt = data_.counts[a];
        if (cnt < 4) {
            // linear fallback on short axes
            const int c = std::clamp(static_cast<int>(std::floor(u)), 0, cnt - 2);
            start[a] = c;
            wts[a] = {1.0 - (u - c), u - c, 0.0, 0.0};
            npts[a] = 2;
        } else {
            const int c = std::clamp(static_cast<int>(std::floor(u)) - 1, 0, cnt - 4);
            start[a] = c;
            wts[a] = lagrange4(u - c - 1);
            npts[a] = 4;
        }
    }
    Field out = Field::Zero(data_.w.front().size());
    if (n == 1) {
        for (int i = 0; i < npts[0]; ++i) out += wts[0][i] * field(start[0] + i);
        return out;
    }
    for (int j = 0; j < npts[1]; ++j)
        for (int i = 0; i < npts[0]; ++i)
            out += wts[0][i] * wts[1][j] * field((start[0] + i) + data_.counts[0] * (start[1] + j));
    return out;
}

Field EffectiveTable::w_interp(const Vec& p) const {
    return lagrange(p, [&](int i) -> const Field& { return data_.w[i]; });
}

Field EffectiveTable::v_interp(const Vec& p, int axis) const {
    return lagrange(p, [&](int i) -> const Field& { return data_.v[i][axis]; });
}

EffectiveTable effective_table(const ProblemSpec& spec, const TorusGrid& grid, const Vec& lo, const Vec& hi,
                               double dp, const CellOptions& opts) {
    const int n = spec.dim;
    if (lo.size() != n || hi.size() != n) throw InvalidInput("effective_table: p-box has the wrong dimension");
    if (!(dp > 0.0)) throw InvalidInput("effective_table: dp must be positive");
    TableData data;
    data.dim = n;
    data.N = grid.N();
    data.lo = lo;
    data.dp = dp;
    for (int a = 0; a < n; ++a) {
        if (!(hi(a) > lo(a))) throw InvalidInput("effective_table: empty p-box");
        data.counts[a] = static_cast<int>(std::floor((hi(a) - lo(a)) / dp + 1e-9)) + 1;
        if (data.counts[a] < 2) throw InvalidInput("effective_table: p-box narrower than dp");
    }
    if (n == 1) data.counts[1] = 1;
    const int m = n == 1 ? data.counts[0] : data.counts[0] * data.counts[1];
    data.hbar.assign(m, 0.0);
    data.bbar.assign(m, Vec::Zero(n));
    data.w.assign(m, Field());
    data.v.assign(m, std::vector<Field>(n));
    data.diag.assign(m, {});

    const CellDiscretization disc(spec, grid);
    auto node_p = [&](int idx) {
        Vec p = lo;
        p(0) += (idx % data.counts[0]) * dp;
        if (n == 2) p(1) += (idx / data.counts[0]) * dp;
        return p;
    };
    // Fixed chunks keep the continuation path, and so the results,
    // independent of the worker count.
    constexpr int chunk = 8;
    const int chunks = (m + chunk - 1) / chunk;
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
        CellSolution prev;
        bool have_prev = false;
        for (int idx = int(c) * chunk; idx < std::min(m, int(c + 1) * chunk); ++idx) {
            const Vec p = node_p(idx);
            try {
                CellSolution sol = solve_cell(disc, p, have_prev ? &prev : nullptr, opts);
                const auto B = drift_coefficients(disc, p, sol.w);
                const LinearCellOperator op(grid, disc.A(), B);
                const auto lin = op.solve(Eigen::MatrixXd::Zero(grid.size(), n), Eigen::MatrixXd::Identity(n, n),
                                          opts.tol);
                data.hbar[idx] = sol.gamma;
                data.bbar[idx] = lin.gamma;
                for (int a = 0; a < n; ++a) data.v[idx][a] = lin.v.col(a);
                data.w[idx] = sol.w;
                data.diag[idx] = sol.diag;
                prev = std::move(sol);
                have_prev = true;
            } catch (const SolverError& e) {
                throw SolverError(std::string("effective_table: node ") + std::to_string(idx) + " " +
                                      describe_p(p) + ": " + e.what(),
                                  e.last_residual());
            }
        }
    });
    return EffectiveTable(std::move(data));
}

}  // namespace hjh
