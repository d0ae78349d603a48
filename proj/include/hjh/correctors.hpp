#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hjh/cell.hpp"
#include "hjh/effective.hpp"
#include "hjh/problem.hpp"
#include "hjh/torus.hpp"

namespace hjh {

/// Uniform grid in the slow variables (x, t). Spatial nodes are numbered
/// axis 0 fastest; the time index is outermost.
struct SlowGrid {
    int dim = 1;
    Vec lo;
    double hx = 0.0;
    std::array<int, 2> counts{1, 1};
    double T = 0.0;
    int nt = 2;

    double ht() const { return T / (nt - 1); }
    int spatial_size() const { return counts[0] * counts[1]; }
    int size() const { return spatial_size() * nt; }
    int index(int i0, int i1, int it) const { return i0 + counts[0] * (i1 + counts[1] * it); }
    int time_index(int node) const { return node / spatial_size(); }
    std::array<int, 2> spatial_index(int node) const;
    Vec x(int node) const;
    double t(int node) const { return time_index(node) * ht(); }
    Box box() const;
    /// Node shifted by (d0, d1) in space and dt in time, or -1 off the grid.
    int shift(int node, int d0, int d1, int dt) const;
};

/// Slow grid covering the window plus the stencil halo and the upstream
/// transport reach (m - 1) T max|Bbar| on every side.
SlowGrid make_slow_grid(const Box& window, double T, double hx, int nt, int m, double max_speed);

struct CorrectorOptions {
    CellOptions cell;
    double linear_tol = 1e-11;
};

/// Interior correctors w_1..w_m on a slow grid. Each w_k is stored as its
/// y-dependent part wt_k (phi_k plus chi . D_x ubar_{k-1}) and the slow scalar
/// ubar_k, so w_k = wt_k + ubar_k. The top-order ubar_m is taken as zero.
///
/// Invalid entries (outside the reach of finite-difference stencils or of the
/// transport solve) are empty fields or NaN scalars.
class CorrectorHierarchy {
public:
    struct Data {
        std::vector<Vec> p0;                     // Du0
        std::vector<Mat> hess0;                  // D^2 u0
        std::vector<double> gamma;               // cell constant at p0 on this grid
        std::vector<Vec> bbar;                   // from the linear chi solve
        std::vector<Vec> source;                 // foot of the characteristic
        std::vector<Eigen::MatrixXd> B;          // D_pH(p0 + D_y phi_1, y), n x size
        std::vector<std::vector<Field>> chi;     // [node][axis]
        std::vector<std::vector<Field>> phi;     // [k][node], k = 1..m
        std::vector<std::vector<Field>> wt;      // [k][node], k = 1..m
        std::vector<std::vector<double>> ubar;   // [k][node], k = 1..m
        std::vector<std::vector<double>> dtubar;
        std::vector<std::vector<Vec>> dxubar;
        std::vector<std::vector<double>> fbar;   // [k][node], k = 1..m-1
    };

    CorrectorHierarchy(std::shared_ptr<const EffectiveSolution> sol, ProblemSpec spec, TorusGrid grid, SlowGrid slow,
                       int m, Data data);

    int order() const noexcept { return m_; }
    const SlowGrid& slow() const noexcept { return slow_; }
    const TorusGrid& grid() const noexcept { return grid_; }
    const ProblemSpec& spec() const noexcept { return spec_; }
    const EffectiveSolution& effective() const noexcept { return *sol_; }
    std::shared_ptr<const EffectiveSolution> effective_ptr() const noexcept { return sol_; }
    const CellDiscretization& discretization() const noexcept { return *disc_; }
    const Data& data() const noexcept { return d_; }

    const Field& phi(int k, int node) const { return d_.phi.at(k)[node]; }
    const Field& wt(int k, int node) const { return d_.wt.at(k)[node]; }
    double ubar(int k, int node) const { return d_.ubar.at(k)[node]; }
    double fbar(int k, int node) const { return d_.fbar.at(k)[node]; }

    /// Nodal ingredients of the order-`order` expansion at one slow node
    /// (order <= m, default m). The top-order ubar is dropped, so a truncated
    /// expansion matches a hierarchy built at that order. Empty when a stencil
    /// leaves the valid region.
    struct Terms {
        std::vector<Field> dtw;              // d_t w_k, k = 0..m
        std::vector<Eigen::MatrixXd> W;      // W_k (n x size), k = 0..m
        std::vector<Eigen::MatrixXd> X;      // X_k (rows 00[,01,11]), k = 0..m+1
    };
    std::optional<Terms> terms(int node, int order = -1) const;

    /// Bordered linear operator with this node's drift field.
    LinearCellOperator linear_operator(int node) const;

    /// Largest |chi - v_table(p0)| over valid nodes.
    double chi_consistency() const;

    /// Spatial nodes whose x lies in the box, at every time level.
    std::vector<int> nodes_in(const Box& window) const;

private:
    std::shared_ptr<const EffectiveSolution> sol_;
    ProblemSpec spec_;
    TorusGrid grid_;
    SlowGrid slow_;
    int m_;
    Data d_;
    std::shared_ptr<const CellDiscretization> disc_;
};

CorrectorHierarchy build_hierarchy(std::shared_ptr<const EffectiveSolution> sol, const ProblemSpec& spec,
                                   const TorusGrid& grid, const SlowGrid& slow, int m,
                                   const CorrectorOptions& opts = {});

struct ExpansionValue {
    double eta = 0.0;
    Vec grad;         // D eta
    Mat scaled_hess;  // eps D^2 eta
};

/// eta = u0 + sum eps^k w_k(x, t, x/eps). Slow interpolation is cubic
/// Lagrange, the fast variable uses periodic cubic splines.
ExpansionValue evaluate_expansion(const CorrectorHierarchy& h, double eps, const Vec& x, double t,
                                  bool derivatives = false, int order = -1);

struct ResidualResult {
    double eps = 0.0;
    double max_psi = 0.0;
    /// Largest |psi_assembled - psi_direct|; NaN for non-quadratic H.
    double direct_mismatch = 0.0;
    std::vector<int> nodes;
    std::vector<double> node_max;  // max over y of |psi| per node
};

/// psi = d_t eta - eps tr(A D^2 eta) + H(D eta) at slow nodes in the window,
/// maximized over the fast grid. One result per eps.
std::vector<ResidualResult> residual_field(const CorrectorHierarchy& h, std::span<const double> eps,
                                           const Box& window, int order = -1);

void save_hierarchy(const CorrectorHierarchy& h, const std::filesystem::path& path);
CorrectorHierarchy load_hierarchy(const std::filesystem::path& path);

}  // namespace hjh
