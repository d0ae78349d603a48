#pragma once

#include <Eigen/Sparse>
#include <memory>
#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "hjh/problem.hpp"
#include "hjh/torus.hpp"

namespace hjh {

struct CellOptions {
    double tol = 1e-10;      // max-norm of the discrete residual
    int max_iter = 60;
    int max_backtrack = 40;
    bool upwind = false;     // one-sided first differences chosen by the sign of D_pH
};

struct CellDiagnostics {
    int iterations = 0;
    double residual = 0.0;
};

/// Nodal coefficients of a problem on a torus grid. Quadratic Hamiltonians
/// are evaluated from precomputed nodal forms; other families call through
/// the Hamiltonian interface. Immutable and safe to share between threads.
class CellDiscretization {
public:
    CellDiscretization(const ProblemSpec& spec, TorusGrid grid);

    const TorusGrid& grid() const noexcept { return grid_; }
    const ProblemSpec& spec() const noexcept { return spec_; }
    int dim() const noexcept { return grid_.dim(); }
    int size() const noexcept { return grid_.size(); }
    const std::vector<Mat>& A() const noexcept { return A_; }
    const Vec& y(int j) const { return y_[j]; }

    double H(int j, const Vec& q) const;
    Vec DH(int j, const Vec& q) const;
    Mat D2H(int j, const Vec& q) const;
    /// D_p^k H(q, y_j)[dirs...]
    double DkH(int k, int j, const Vec& q, std::span<const Vec> dirs) const;
    bool quadratic() const noexcept { return !forms_.empty(); }

private:
    ProblemSpec spec_;
    TorusGrid grid_;
    std::vector<Mat> A_;
    std::vector<Vec> y_;
    std::vector<QuadraticForm> forms_;
};

/// Solution (w, gamma = Hbar(p)) of the bordered discrete cell problem.
struct CellSolution {
    Vec p;
    double gamma = 0.0;
    Field w;
    CellDiagnostics diag;
};

struct DiscountedSolution {
    Vec p;
    double delta = 0.0;
    Field w;
    CellDiagnostics diag;
};

/// Newton solve of -tr(A D^2 w) + H(Dw + p, y) = gamma with w(node 0) = 0.
CellSolution solve_cell(const CellDiscretization& disc, const Vec& p, const CellSolution* init = nullptr,
                        const CellOptions& opts = {});
CellSolution solve_cell(const ProblemSpec& spec, const TorusGrid& grid, const Vec& p,
                        const CellSolution* init = nullptr, const CellOptions& opts = {});

/// Newton solve of -tr(A D^2 w) + H(Dw + p, y) + delta w = 0.
DiscountedSolution solve_cell_discounted(const CellDiscretization& disc, const Vec& p, double delta,
                                         const CellOptions& opts = {});

/// Max-norm of the discrete cell residual for a candidate (w, gamma).
double cell_residual(const CellDiscretization& disc, const Vec& p, const Field& w, double gamma);

/// B(y_j) = D_pH(Dw_j + p, y_j) as an n x size matrix.
Eigen::MatrixXd drift_coefficients(const CellDiscretization& disc, const Vec& p, const Field& w);

struct LinearCellResult {
    Eigen::VectorXd gamma;   // one solvability constant per column
    Eigen::MatrixXd v;       // size x columns, v(node 0, :) = 0
    double residual = 0.0;   // worst column residual (max-norm)
};

/// Factorization of the bordered operator
///   [ -tr(A D^2 .) + B . D   -1 ] [v]
///   [ e_0^T                   0 ] [gamma]
/// reused for any number of right-hand sides.
class LinearCellOperator {
public:
    LinearCellOperator(const TorusGrid& grid, const std::vector<Mat>& A, const Eigen::MatrixXd& B);

    /// Solves -tr(A D^2 v) + B.(Dv + p_vec) + source = gamma per column.
    /// sources is size x c, p_vecs is n x c.
    LinearCellResult solve(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& p_vecs, double tol = 1e-10) const;

    /// Residual of one column against the unfactored operator.
    double residual(const Field& v, double gamma, const Field& source, const Vec& p_vec) const;

    const TorusGrid& grid() const noexcept { return grid_; }

private:
    TorusGrid grid_;
    std::vector<Mat> A_;
    Eigen::MatrixXd B_;
    Eigen::SparseMatrix<double> L_;  // unbordered operator
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

LinearCellResult solve_linear_cell(const TorusGrid& grid, const std::vector<Mat>& A, const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& sources, const Eigen::MatrixXd& p_vecs,
                                   double tol = 1e-10);

/// Raw samples of an effective-Hamiltonian table.
struct TableData {
    int dim = 1;
    int N = 64;                       // torus grid points per axis
    Vec lo;                           // first p-node
    double dp = 0.0;
    std::array<int, 2> counts{1, 1};  // p-nodes per axis (axis 0 fastest)
    std::vector<double> hbar;
    std::vector<Vec> bbar;
    std::vector<Field> w;
    std::vector<std::vector<Field>> v;  // v[node][axis]
    std::vector<CellDiagnostics> diag;
};

/// Tabulated effective Hamiltonian over a uniform p-grid with the corrector
/// w(p,.) and its p-derivative v(p,.) at every node.
///
/// Hbar is interpolated by tensor-product quintic Hermite pieces through
/// Hbar, Bbar = D_pHbar and finite-difference second derivatives of Bbar.
/// The interpolated Bbar is the exact gradient of the interpolated Hbar,
/// which keeps the characteristic construction self-consistent.
class EffectiveTable {
public:
    EffectiveTable() = default;
    explicit EffectiveTable(TableData data);

    const TableData& data() const noexcept { return data_; }
    int dim() const noexcept { return data_.dim; }
    TorusGrid grid() const { return TorusGrid(data_.dim, data_.N); }
    const Vec& lo() const noexcept { return data_.lo; }
    Vec hi() const;
    double dp() const noexcept { return data_.dp; }
    int count(int axis) const { return data_.counts[axis]; }
    int nodes() const noexcept { return data_.dim == 1 ? data_.counts[0] : data_.counts[0] * data_.counts[1]; }
    Vec node_p(int idx) const;

    double hbar_at(int idx) const { return data_.hbar[idx]; }
    const Vec& bbar_at(int idx) const { return data_.bbar[idx]; }
    const Field& w_at(int idx) const { return data_.w[idx]; }
    const Field& v_at(int idx, int axis) const { return data_.v[idx][axis]; }
    const CellDiagnostics& diagnostics_at(int idx) const { return data_.diag[idx]; }

    bool covers(const Vec& p) const;
    /// Throws CoverageError naming p when it lies outside the box.
    void require(const Vec& p) const;

    double H(const Vec& p) const;
    Vec B(const Vec& p) const;
    Mat D2H(const Vec& p) const;
    /// Cubic Lagrange interpolation in p of w(p,.) and v(p,.)[axis].
    Field w_interp(const Vec& p) const;
    Field v_interp(const Vec& p, int axis) const;

private:
    void build_interpolant();
    // Partial derivative D_{p0}^o0 D_{p1}^o1 of the Hermite interpolant.
    double hermite(const Vec& p, int o0, int o1) const;
    Field lagrange(const Vec& p, const std::function<const Field&(int)>& field) const;

    TableData data_;
    // d_[i + 3 j][node] = D_{p0}^i D_{p1}^j Hbar at the node
    std::array<std::vector<double>, 9> d_;
};

EffectiveTable effective_table(const ProblemSpec& spec, const TorusGrid& grid, const Vec& lo, const Vec& hi,
                               double dp, const CellOptions& opts = {});

struct TableCheckOptions {
    double tol_convex = 1e-8;
    double tol_fd = 1e-5;      // relative: |Bbar - FD| <= tol_fd (1 + |p|)
    double tol_cell = 1e-10;
};

/// Property suite over every table node: growth bounds from the structure
/// constants, midpoint convexity over all grid pairs with a grid midpoint,
/// Bbar against fourth-order central differences of Hbar, cell residuals and
/// the node-0 normalization of w and v.
ValidationReport check_table(const EffectiveTable& table, const ProblemBounds& bounds,
                             const TableCheckOptions& opts = {});

}  // namespace hjh
