#include "hjh/correctors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hjh/errors.hpp"
#include "hjh/parallel.hpp"

namespace hjh {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fourth-order central differences, offsets -2..2.
constexpr double kD1[5] = {1.0, -8.0, 0.0, 8.0, -1.0};     // / 12h
constexpr double kD2[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};  // / 12h^2

bool valid(const Field& f) { return f.size() > 0; }
bool valid(double v) { return !std::isnan(v); }

template <class T>
std::optional<T> gather(const std::vector<T>& F, const int* nodes, const double* c, int count, double scale) {
    std::optional<T> acc;
    for (int i = 0; i < count; ++i) {
        if (c[i] == 0.0) continue;
        if (nodes[i] < 0 || !valid(F[nodes[i]])) return std::nullopt;
        if (!acc) {
            acc = T((c[i] * scale) * F[nodes[i]]);
        } else {
            *acc += (c[i] * scale) * F[nodes[i]];
        }
    }
    return acc;
}

// First derivative along spatial axis 0/1 or time (axis 2).
template <class T>
std::optional<T> slow_d1(const SlowGrid& s, const std::vector<T>& F, int node, int axis) {
    int nodes[5];
    if (axis < 2) {
        for (int i = 0; i < 5; ++i) nodes[i] = s.shift(node, axis == 0 ? i - 2 : 0, axis == 1 ? i - 2 : 0, 0);
        return gather(F, nodes, kD1, 5, 1.0 / (12.0 * s.hx));
    }
    // Fourth order in t, one-sided at the ends of [0, T].
    static constexpr double c0[5] = {-25.0, 48.0, -36.0, 16.0, -3.0};
    static constexpr double c1[5] = {-3.0, -10.0, 18.0, -6.0, 1.0};
    const int it = s.time_index(node);
    const double scale = 1.0 / (12.0 * s.ht());
    const double* c = kD1;
    int first = -2;
    double sign = 1.0;
    if (it < 2 || it > s.nt - 3) {
        const bool low = it < 2;
        const int e = low ? it : s.nt - 1 - it;
        c = e == 0 ? c0 : c1;
        first = low ? -e : e;
        sign = low ? 1.0 : -1.0;
    }
    for (int i = 0; i < 5; ++i) nodes[i] = s.shift(node, 0, 0, sign > 0 ? first + i : first - i);
    return gather(F, nodes, c, 5, sign * scale);
}

template <class T>
std::optional<T> slow_d2(const SlowGrid& s, const std::vector<T>& F, int node, int a, int b) {
    if (a == b) {
        int nodes[5];
        for (int i = 0; i < 5; ++i) nodes[i] = s.shift(node, a == 0 ? i - 2 : 0, a == 1 ? i - 2 : 0, 0);
        return gather(F, nodes, kD2, 5, 1.0 / (12.0 * s.hx * s.hx));
    }
    int nodes[25];
    double c[25];
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            nodes[5 * i + j] = s.shift(node, i - 2, j - 2, 0);
            c[5 * i + j] = kD1[i] * kD1[j];
        }
    return gather(F, nodes, c, 25, 1.0 / (144.0 * s.hx * s.hx));
}

std::array<double, 4> lagrange4(double s) {
    return {-(s - 1) * (s - 2) * (s - 3) / 6.0, s * (s - 2) * (s - 3) / 2.0, -s * (s - 1) * (s - 3) / 2.0,
            s * (s - 1) * (s - 2) / 6.0};
}

// Four-point stencil start and weights for coordinate u on a grid lo + i h, i < count.
std::optional<std::pair<int, std::array<double, 4>>> stencil4(double u, double lo, double h, int count) {
    const double s = (u - lo) / h;
    if (count < 4 || s < -1e-9 || s > count - 1 + 1e-9) return std::nullopt;
    int b = static_cast<int>(std::floor(s)) - 1;
    b = std::clamp(b, 0, count - 4);
    return std::make_pair(b, lagrange4(s - b));
}

std::string where(const SlowGrid& s, int node) {
    std::ostringstream os;
    os.precision(10);
    const Vec x = s.x(node);
    os << "slow node " << node << " (x=";
    for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x(i);
    os << ", t=" << s.t(node) << ")";
    return os.str();
}

// Trace of A against a symmetric matrix field stored as rows 00[,01,11].
Field trace_rows(const CellDiscretization& disc, const Eigen::MatrixXd& M) {
    const int S = disc.size();
    Field r(S);
    for (int j = 0; j < S; ++j) {
        const Mat& A = disc.A()[j];
        r(j) = disc.dim() == 1 ? A(0, 0) * M(0, j) : A(0, 0) * M(0, j) + 2.0 * A(0, 1) * M(1, j) + A(1, 1) * M(2, j);
    }
    return r;
}

int row_of(int n, int a, int b) { return n == 1 ? 0 : a + b; }

// All compositions of `total` into `parts` positive integers.
void compositions(int total, int parts, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (parts == 0) {
        if (total == 0) out.push_back(cur);
        return;
    }
    for (int i = 1; i <= total - (parts - 1); ++i) {
        cur.push_back(i);
        compositions(total - i, parts - 1, cur, out);
        cur.pop_back();
    }
}

double factorial(int l) {
    double f = 1.0;
    for (int i = 2; i <= l; ++i) f *= i;
    return f;
}

// Slow and fast derivatives of the stored hierarchy at one node. `top` is the
// expansion order: ubar_top is treated as zero.
class NodeOps {
public:
    NodeOps(const SlowGrid& s, const TorusGrid& g, const CellDiscretization& disc, const CorrectorHierarchy::Data& d,
            int top)
        : s_(s), g_(g), disc_(disc), d_(d), top_(top), n_(g.dim()), S_(g.size()) {}

    bool has_ubar(int k) const { return k >= 1 && k < top_; }

    std::optional<Field> dx_wt(int k, int node, int a) const { return slow_d1(s_, d_.wt[k], node, a); }

    // D_x w_k along axis a (k >= 1); ubar_k enters as a constant in y.
    std::optional<Field> dx_w(int k, int node, int a) const {
        auto f = dx_wt(k, node, a);
        if (!f) return f;
        if (has_ubar(k)) {
            const Vec& du = d_.dxubar[k][node];
            if (du.size() == 0) return std::nullopt;
            f->array() += du(a);
        }
        return f;
    }

    std::optional<Field> dxx_w(int k, int node, int a, int b) const {
        if (k == 0) return Field::Constant(S_, d_.hess0[node](a, b));
        auto f = slow_d2(s_, d_.wt[k], node, a, b);
        if (!f) return f;
        if (has_ubar(k)) {
            auto u = slow_d2(s_, d_.ubar[k], node, a, b);
            if (!u) return std::nullopt;
            f->array() += *u;
        }
        return f;
    }

    std::optional<Field> dt_w(int k, int node) const {
        if (k == 0) return Field::Constant(S_, -d_.gamma[node]);
        auto f = slow_d1(s_, d_.wt[k], node, 2);
        if (!f) return f;
        if (has_ubar(k)) {
            const double u = d_.dtubar[k][node];
            if (!valid(u)) return std::nullopt;
            f->array() += u;
        }
        return f;
    }

    // W_k = D_y w_{k+1} + D_x w_k, with w_{top+1} = 0.
    std::optional<Eigen::MatrixXd> W(int k, int node) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, S_);
        if (k + 1 <= top_) {
            const Field& f = d_.wt[k + 1][node];
            if (!valid(f)) return std::nullopt;
            out = gradient(g_, f);
        }
        if (k == 0) {
            for (int a = 0; a < n_; ++a) out.row(a).array() += d_.p0[node](a);
        } else {
            for (int a = 0; a < n_; ++a) {
                auto f = dx_w(k, node, a);
                if (!f) return std::nullopt;
                out.row(a) += f->transpose();
            }
        }
        return out;
    }

    // X_k = D_y^2 w_{k+1} + (D_x D_y + D_y D_x) w_k + D_x^2 w_{k-1}.
    std::optional<Eigen::MatrixXd> X(int k, int node) const {
        const int rows = n_ == 1 ? 1 : 3;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, S_);
        if (k + 1 <= top_) {
            const Field& f = d_.wt[k + 1][node];
            if (!valid(f)) return std::nullopt;
            out += hessian(g_, f);
        }
        if (k >= 1 && k <= top_) {
            std::vector<Eigen::MatrixXd> gy(n_);  // gy[b] = D_y (D_{x_b} wt_k)
            for (int b = 0; b < n_; ++b) {
                auto f = dx_wt(k, node, b);
                if (!f) return std::nullopt;
                gy[b] = gradient(g_, *f);
            }
            for (int a = 0; a < n_; ++a)
                for (int b = a; b < n_; ++b) out.row(row_of(n_, a, b)) += gy[b].row(a) + gy[a].row(b);
        }
        if (k >= 1 && k - 1 <= top_) {
            for (int a = 0; a < n_; ++a)
                for (int b = a; b < n_; ++b) {
                    auto f = dxx_w(k - 1, node, a, b);
                    if (!f) return std::nullopt;
                    out.row(row_of(n_, a, b)) += f->transpose();
                }
        }
        return out;
    }

    // sum_{l=2}^{k} 1/l! sum_{i_1+..+i_l = k, i >= 1} B_l(W_{i_1}, .., W_{i_l})
    std::optional<Field> taylor(int k, int node, const std::vector<Eigen::MatrixXd>& W) const {
        Field out = Field::Zero(S_);
        for (int l = 2; l <= k; ++l) {
            std::vector<std::vector<int>> comps;
            std::vector<int> cur;
            compositions(k, l, cur, comps);
            const double w = 1.0 / factorial(l);
            for (int j = 0; j < S_; ++j) {
                const Vec q = W[0].col(j);
                double acc = 0.0;
                for (const auto& c : comps) {
                    std::vector<Vec> dirs;
                    for (int i : c) dirs.push_back(W[i].col(j));
                    acc += disc_.DkH(l, j, q, dirs);
                }
                out(j) += w * acc;
            }
        }
        (void)node;
        return out;
    }

private:
    const SlowGrid& s_;
    const TorusGrid& g_;
    const CellDiscretization& disc_;
    const CorrectorHierarchy::Data& d_;
    int top_;
    int n_;
    int S_;
};

// Interpolates a scalar slow field at time level it and point x.
std::optional<double> interp_row(const SlowGrid& s, const std::vector<double>& F, int it, const Vec& x) {
    const int n = s.dim;
    auto s0 = stencil4(x(0), s.lo(0), s.hx, s.counts[0]);
    if (!s0) return std::nullopt;
    std::optional<std::pair<int, std::array<double, 4>>> s1;
    if (n == 2) {
        s1 = stencil4(x(1), s.lo(1), s.hx, s.counts[1]);
        if (!s1) return std::nullopt;
    }
    double acc = 0.0;
    const int jn = n == 2 ? 4 : 1;
    for (int j = 0; j < jn; ++j)
        for (int i = 0; i < 4; ++i) {
            const int node = s.index(s0->first + i, n == 2 ? s1->first + j : 0, it);
            const double v = F[node];
            if (!valid(v)) return std::nullopt;
            acc += s0->second[i] * (n == 2 ? s1->second[j] : 1.0) * v;
        }
    return acc;
}

// Composite quadrature of f over [0, j h] from samples f_0..f_max(j,3).
double integrate(const std::vector<double>& f, int j, double h) {
    if (j == 0) return 0.0;
    if (j == 1) return h * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0;
    double acc = 0.0;
    const int simpson_end = j % 2 == 0 ? j : j - 3;
    for (int i = 0; i + 2 <= simpson_end; i += 2) acc += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    if (j % 2 == 1) {
        const int i = j - 3;
        acc += 3.0 * h / 8.0 * (f[i] + 3.0 * f[i + 1] + 3.0 * f[i + 2] + f[i + 3]);
    }
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// SlowGrid

std::array<int, 2> SlowGrid::spatial_index(int node) const {
    const int r = node % spatial_size();
    return {r % counts[0], r / counts[0]};
}

Vec SlowGrid::x(int node) const {
    const auto ij = spatial_index(node);
    Vec v = lo;
    v(0) += ij[0] * hx;
    if (dim == 2) v(1) += ij[1] * hx;
    return v;
}

Box SlowGrid::box() const {
    Vec hi = lo;
    for (int a = 0; a < dim; ++a) hi(a) += (counts[a] - 1) * hx;
    return {lo, hi};
}

int SlowGrid::shift(int node, int d0, int d1, int dt) const {
    const auto ij = spatial_index(node);
    const int i0 = ij[0] + d0, i1 = ij[1] + d1, it = time_index(node) + dt;
    if (i0 < 0 || i0 >= counts[0] || i1 < 0 || i1 >= counts[1] || it < 0 || it >= nt) return -1;
    return index(i0, i1, it);
}

SlowGrid make_slow_grid(const Box& window, double T, double hx, int nt, int m, double max_speed) {
    if (!(hx > 0.0)) throw InvalidInput("slow grid: hx must be positive");
    if (nt < 5) throw InvalidInput("slow grid: need at least 5 time levels");
    if (!(T > 0.0)) throw InvalidInput("slow grid: T must be positive");
    if (m < 1) throw InvalidInput("slow grid: order must be >= 1");
    SlowGrid s;
    s.dim = window.dim();
    s.hx = hx;
    s.T = T;
    s.nt = nt;
    // Each level consumes up to four stencil widths of two nodes; the
    // transport solve reaches T max|Bbar| upstream.
    const double ext = (m - 1) * T * max_speed * 1.02 + (8.0 * (m + 1) + 2.0) * hx;
    s.lo = window.lo.array() - ext;
    for (int a = 0; a < s.dim; ++a) {
        const double w = window.hi(a) - window.lo(a) + 2.0 * ext;
        s.counts[a] = static_cast<int>(std::ceil(w / hx - 1e-9)) + 1;
    }
    if (s.dim == 1) s.counts[1] = 1;
    return s;
}

// ---------------------------------------------------------------------------
// CorrectorHierarchy

CorrectorHierarchy::CorrectorHierarchy(std::shared_ptr<const EffectiveSolution> sol, ProblemSpec spec,
                                       TorusGrid grid, SlowGrid slow, int m, Data data)
    : sol_(std::move(sol)),
      spec_(std::move(spec)),
      grid_(grid),
      slow_(std::move(slow)),
      m_(m),
      d_(std::move(data)),
      disc_(std::make_shared<CellDiscretization>(spec_, grid_)) {}

std::optional<CorrectorHierarchy::Terms> CorrectorHierarchy::terms(int node, int order) const {
    const int top = order < 0 ? m_ : order;
    if (top < 1 || top > m_) throw InvalidInput("terms: order must be in 1..m");
    NodeOps ops(slow_, grid_, *disc_, d_, top);
    Terms t;
    for (int k = 0; k <= top; ++k) {
        auto dt = ops.dt_w(k, node);
        auto W = ops.W(k, node);
        if (!dt || !W) return std::nullopt;
        t.dtw.push_back(std::move(*dt));
        t.W.push_back(std::move(*W));
    }
    for (int k = 0; k <= top + 1; ++k) {
        auto X = ops.X(k, node);
        if (!X) return std::nullopt;
        t.X.push_back(std::move(*X));
    }
    return t;
}

LinearCellOperator CorrectorHierarchy::linear_operator(int node) const {
    return LinearCellOperator(grid_, disc_->A(), d_.B[node]);
}

double CorrectorHierarchy::chi_consistency() const {
    double worst = 0.0;
    const auto& table = sol_->table();
    const bool same_grid = table.grid() == grid_;
    if (!same_grid) return kNaN;
    for (int node = 0; node < slow_.size(); ++node) {
        for (int a = 0; a < grid_.dim(); ++a) {
            const Field v = table.v_interp(d_.p0[node], a);
            worst = std::max(worst, (v - d_.chi[node][a]).lpNorm<Eigen::Infinity>());
        }
    }
    return worst;
}

std::vector<int> CorrectorHierarchy::nodes_in(const Box& window) const {
    std::vector<int> out;
    for (int node = 0; node < slow_.size(); ++node)
        if (window.contains(slow_.x(node), 1e-12)) out.push_back(node);
    return out;
}

// ---------------------------------------------------------------------------
// Construction

CorrectorHierarchy build_hierarchy(std::shared_ptr<const EffectiveSolution> sol, const ProblemSpec& spec,
                                   const TorusGrid& grid, const SlowGrid& slow, int m,
                                   const CorrectorOptions& opts) {
    if (!sol) throw InvalidInput("build_hierarchy: missing effective solution");
    const int n = spec.dim;
    if (grid.dim() != n || slow.dim != n || sol->dim() != n)
        throw InvalidInput("build_hierarchy: dimension mismatch");
    const int m_cap = n == 1 ? 3 : 2;
    if (m < 1 || m > m_cap)
        throw InvalidInput("build_hierarchy: order m must be in 1.." + std::to_string(m_cap) + " in dimension " +
                           std::to_string(n));
    if (slow.nt < 5) throw InvalidInput("build_hierarchy: slow grid needs at least 5 time levels");
    if (slow.T > sol->T() * (1.0 + 1e-12)) throw CoverageError("build_hierarchy: slow grid extends past the horizon");
    const Box sbox = slow.box();
    if (!sol->window().contains(sbox.lo, 1e-9) || !sol->window().contains(sbox.hi, 1e-9))
        throw CoverageError("build_hierarchy: effective solution window does not cover the slow grid");

    const CellDiscretization disc(spec, grid);
    const int P = slow.size();
    const int S = grid.size();
    const auto& table = sol->table();

    CorrectorHierarchy::Data d;
    d.p0.resize(P);
    d.hess0.resize(P);
    d.gamma.resize(P);
    d.bbar.resize(P);
    d.source.resize(P);
    d.B.resize(P);
    d.chi.resize(P);
    d.phi.assign(m + 1, std::vector<Field>(P));
    d.wt.assign(m + 1, std::vector<Field>(P));
    d.ubar.assign(m + 1, std::vector<double>(P, kNaN));
    d.dtubar.assign(m + 1, std::vector<double>(P, kNaN));
    d.dxubar.assign(m + 1, std::vector<Vec>(P));
    d.fbar.assign(m + 1, std::vector<double>(P, kNaN));

    // Factorizations are kept in 1D, where they are small.
    std::vector<std::optional<LinearCellOperator>> ops(n == 1 ? P : 0);

    // Level 0: phi_1 = w(Du0), chi = v(Du0), Bbar at every slow node.
    constexpr int chunk = 8;
    const int chunks = (P + chunk - 1) / chunk;
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
        std::optional<CellSolution> prev;
        for (int node = static_cast<int>(c) * chunk; node < std::min(P, static_cast<int>(c + 1) * chunk); ++node) {
            try {
                const U0Eval e = sol->eval(slow.x(node), slow.t(node));
                table.require(e.grad);
                d.p0[node] = e.grad;
                d.hess0[node] = e.hess;
                d.source[node] = e.source;
                CellSolution cs = solve_cell(disc, e.grad, prev ? &*prev : nullptr, opts.cell);
                d.gamma[node] = cs.gamma;
                d.B[node] = drift_coefficients(disc, e.grad, cs.w);
                LinearCellOperator op(grid, disc.A(), d.B[node]);
                const auto r = op.solve(Eigen::MatrixXd::Zero(S, n), Eigen::MatrixXd::Identity(n, n), opts.linear_tol);
                d.bbar[node] = r.gamma;
                d.chi[node].resize(n);
                for (int a = 0; a < n; ++a) d.chi[node][a] = r.v.col(a);
                d.phi[1][node] = cs.w;
                d.wt[1][node] = cs.w;
                if (n == 1) ops[node] = std::move(op);
                prev = std::move(cs);
            } catch (const CoverageError& e) {
                throw CoverageError(where(slow, node) + ": " + e.what());
            } catch (const Error& e) {
                throw Error(where(slow, node) + ": " + e.what());
            }
        }
    });

    for (int k = 1; k <= m - 1; ++k) {
        NodeOps nops(slow, grid, disc, d, m);
        // f_k and the cell problem for (fbar_k, phi_{k+1}).
        parallel_for(static_cast<std::size_t>(P), [&](std::size_t ui) {
            const int node = static_cast<int>(ui);
            if (!valid(d.wt[k][node])) return;
            auto dt = slow_d1(slow, d.wt[k], node, 2);
            if (!dt) return;
            Field f = *dt;
            const Eigen::MatrixXd& B = d.B[node];
            std::vector<Eigen::MatrixXd> gy(n);
            for (int b = 0; b < n; ++b) {
                auto dx = nops.dx_wt(k, node, b);
                if (!dx) return;
                f.array() += B.row(b).transpose().array() * dx->array();
                gy[b] = gradient(grid, *dx);
            }
            Eigen::MatrixXd mixed = Eigen::MatrixXd::Zero(n == 1 ? 1 : 3, S);
            for (int a = 0; a < n; ++a)
                for (int b = a; b < n; ++b) {
                    mixed.row(row_of(n, a, b)) += gy[b].row(a) + gy[a].row(b);
                    auto dxx = nops.dxx_w(k - 1, node, a, b);
                    if (!dxx) return;
                    mixed.row(row_of(n, a, b)) += dxx->transpose();
                }
            f -= trace_rows(disc, mixed);
            if (k >= 2) {
                std::vector<Eigen::MatrixXd> W(k);
                for (int i = 0; i < k; ++i) {
                    auto w = nops.W(i, node);
                    if (!w) return;
                    W[i] = std::move(*w);
                }
                f += *nops.taylor(k, node, W);
            }
            try {
                const LinearCellOperator op = n == 1 ? *ops[node] : LinearCellOperator(grid, disc.A(), B);
                const auto r = op.solve(f, Eigen::MatrixXd::Zero(n, 1), opts.linear_tol);
                d.fbar[k][node] = r.gamma(0);
                d.phi[k + 1][node] = r.v.col(0);
            } catch (const Error& e) {
                throw Error(where(slow, node) + ", level " + std::to_string(k) + ": " + e.what());
            }
        });

        // Transport: ubar_k(xi(t; x0), t) = -int_0^t fbar_k(xi(s; x0), s) ds.
        const double ht = slow.ht();
        parallel_for(static_cast<std::size_t>(P), [&](std::size_t ui) {
            const int node = static_cast<int>(ui);
            const int it = slow.time_index(node);
            if (it == 0) {
                d.ubar[k][node] = 0.0;
                return;
            }
            const int last = it == 1 ? 3 : it;
            if (last > slow.nt - 1) return;
            const Vec& x0 = d.source[node];
            const Vec speed = table.B(sol->g().gradient(x0));
            std::vector<double> f(last + 1);
            for (int i = 0; i <= last; ++i) {
                auto v = interp_row(slow, d.fbar[k], i, Vec(x0 + (i * ht) * speed));
                if (!v) return;
                f[i] = *v;
            }
            d.ubar[k][node] = -integrate(f, it, ht);
        });

        for (int node = 0; node < P; ++node) {
            Vec du(n);
            bool ok = true;
            for (int a = 0; a < n && ok; ++a) {
                auto v = slow_d1(slow, d.ubar[k], node, a);
                if (!v) ok = false;
                else du(a) = *v;
            }
            if (!ok || !valid(d.fbar[k][node])) continue;
            d.dxubar[k][node] = du;
            d.dtubar[k][node] = -d.bbar[node].dot(du) - d.fbar[k][node];
            if (!valid(d.phi[k + 1][node])) continue;
            Field w = d.phi[k + 1][node];
            for (int a = 0; a < n; ++a) w += du(a) * d.chi[node][a];
            d.wt[k + 1][node] = std::move(w);
        }
    }
    // Top order: ubar_m = 0.
    std::fill(d.ubar[m].begin(), d.ubar[m].end(), 0.0);
    std::fill(d.dtubar[m].begin(), d.dtubar[m].end(), 0.0);
    std::fill(d.dxubar[m].begin(), d.dxubar[m].end(), zero_vec(n));

    return CorrectorHierarchy(std::move(sol), spec, grid, slow, m, std::move(d));
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct SlowStencil {
    std::vector<int> nodes;
    std::vector<double> weights;
};

// Cubic Lagrange stencil in (x, t); time interpolation is skipped on t-nodes.
SlowStencil slow_stencil(const SlowGrid& s, const Vec& x, double t) {
    const int n = s.dim;
    auto s0 = stencil4(x(0), s.lo(0), s.hx, s.counts[0]);
    std::optional<std::pair<int, std::array<double, 4>>> s1;
    if (n == 2) s1 = stencil4(x(1), s.lo(1), s.hx, s.counts[1]);
    if (!s0 || (n == 2 && !s1)) throw CoverageError("expansion: point outside the slow grid");
    if (t < -1e-12 || t > s.T * (1.0 + 1e-12)) throw CoverageError("expansion: time outside [0, T]");
    std::vector<std::pair<int, double>> times;
    const double tau = t / s.ht();
    const double r = std::round(tau);
    if (std::abs(tau - r) < 1e-9) {
        times.emplace_back(static_cast<int>(r), 1.0);
    } else {
        auto st = stencil4(t, 0.0, s.ht(), s.nt);
        if (!st) throw CoverageError("expansion: time outside [0, T]");
        for (int i = 0; i < 4; ++i) times.emplace_back(st->first + i, st->second[i]);
    }
    SlowStencil out;
    for (const auto& [it, wt] : times)
        for (int j = 0; j < (n == 2 ? 4 : 1); ++j)
            for (int i = 0; i < 4; ++i) {
                out.nodes.push_back(s.index(s0->first + i, n == 2 ? s1->first + j : 0, it));
                out.weights.push_back(wt * s0->second[i] * (n == 2 ? s1->second[j] : 1.0));
            }
    return out;
}

double periodic_eval(const TorusGrid& g, const Field& f, const Vec& y) { return PeriodicField(g, f)(y); }

}  // namespace

ExpansionValue evaluate_expansion(const CorrectorHierarchy& h, double eps, const Vec& x, double t, bool derivatives,
                                  int order) {
    if (!(eps > 0.0 && eps <= 0.5)) throw InvalidInput("expansion: eps must lie in (0, 1/2]");
    const int top = order < 0 ? h.order() : order;
    if (top < 0 || top > h.order()) throw InvalidInput("expansion: order must be in 0..m");
    const int n = h.slow().dim;
    const auto& grid = h.grid();
    const auto& d = h.data();
    const U0Eval u0 = h.effective().eval(x, t);
    ExpansionValue out;
    out.eta = u0.value;
    out.grad = u0.grad;
    out.scaled_hess = eps * u0.hess;
    if (top == 0) return out;

    const SlowStencil st = slow_stencil(h.slow(), x, t);
    Vec y(n);
    for (int a = 0; a < n; ++a) y(a) = wrap_unit(x(a) / eps);

    for (int k = 1; k <= top; ++k) {
        Field f = Field::Zero(grid.size());
        double u = 0.0;
        for (std::size_t i = 0; i < st.nodes.size(); ++i) {
            const Field& w = d.wt[k][st.nodes[i]];
            if (w.size() == 0) throw CoverageError("expansion: corrector undefined near the requested point");
            f += st.weights[i] * w;
            if (k < top) {
                const double ub = d.ubar[k][st.nodes[i]];
                if (std::isnan(ub)) throw CoverageError("expansion: ubar undefined near the requested point");
                u += st.weights[i] * ub;
            }
        }
        out.eta += std::pow(eps, k) * (periodic_eval(grid, f, y) + u);
    }
    if (!derivatives) return out;

    // D eta = sum eps^k W_k, eps D^2 eta = sum eps^k X_k at x/eps.
    const int rows = n == 1 ? 1 : 3;
    std::vector<Eigen::MatrixXd> Wsum(1, Eigen::MatrixXd::Zero(n, grid.size()));
    Eigen::MatrixXd Xsum = Eigen::MatrixXd::Zero(rows, grid.size());
    for (std::size_t i = 0; i < st.nodes.size(); ++i) {
        auto tm = h.terms(st.nodes[i], top);
        if (!tm) throw CoverageError("expansion: derivative stencil leaves the valid region");
        for (int k = 0; k <= top; ++k) Wsum[0] += st.weights[i] * std::pow(eps, k) * tm->W[k];
        for (int k = 0; k <= top + 1; ++k) Xsum += st.weights[i] * std::pow(eps, k) * tm->X[k];
    }
    for (int a = 0; a < n; ++a) out.grad(a) = periodic_eval(grid, Wsum[0].row(a).transpose(), y);
    Mat H(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
            H(a, b) = H(b, a) = periodic_eval(grid, Xsum.row(row_of(n, a, b)).transpose(), y);
        }
    out.scaled_hess = H;
    return out;
}

std::vector<ResidualResult> residual_field(const CorrectorHierarchy& h, std::span<const double> eps,
                                           const Box& window, int order) {
    const int top = order < 0 ? h.order() : order;
    if (top < 1 || top > h.order()) throw InvalidInput("residual: order must be in 1..m");
    for (double e : eps)
        if (!(e > 0.0 && e <= 0.5)) throw InvalidInput("residual: eps must lie in (0, 1/2]");
    const auto& disc = h.discretization();
    const int n = disc.dim();
    const int S = disc.size();
    const bool quadratic = disc.quadratic();
    const std::vector<int> nodes = h.nodes_in(window);
    if (nodes.empty()) throw CoverageError("residual: no slow nodes inside the window");

    const std::size_t E = eps.size();
    std::vector<std::vector<double>> node_max(E, std::vector<double>(nodes.size(), 0.0));
    std::vector<std::vector<double>> node_mismatch(E, std::vector<double>(nodes.size(), 0.0));

    parallel_for(nodes.size(), [&](std::size_t ni) {
        const int node = nodes[ni];
        auto tm = h.terms(node, top);
        if (!tm) throw CoverageError("residual: " + where(h.slow(), node) + " lies outside the valid corrector region");
        const Eigen::MatrixXd& B = h.data().B[node];
        std::vector<Field> trX(top + 2);
        for (int k = 0; k <= top + 1; ++k) trX[k] = trace_rows(disc, tm->X[k]);
        for (std::size_t e = 0; e < E; ++e) {
            const double ep = eps[e];
            std::vector<double> pw(2 * top + 2, 1.0);
            for (std::size_t i = 1; i < pw.size(); ++i) pw[i] = pw[i - 1] * ep;
            double worst = 0.0, mism = 0.0;
            for (int j = 0; j < S; ++j) {
                Vec q = zero_vec(n);
                double dt = 0.0, tr = 0.0;
                for (int k = 0; k <= top; ++k) {
                    q += pw[k] * tm->W[k].col(j);
                    dt += pw[k] * tm->dtw[k](j);
                }
                for (int k = 0; k <= top + 1; ++k) tr += pw[k] * trX[k](j);
                const double psi = dt - tr + disc.H(j, q);
                worst = std::max(worst, std::abs(psi));
                if (quadratic) {
                    const Vec W0 = tm->W[0].col(j);
                    const Mat D2 = disc.D2H(j, W0);
                    double direct = pw[top] * (tm->dtw[top](j) + B.col(j).dot(tm->W[top].col(j)) - trX[top](j)) -
                                    pw[top + 1] * trX[top + 1](j);
                    for (int a = 1; a <= top; ++a)
                        for (int b = 1; b <= top; ++b)
                            if (a + b >= top)
                                direct += 0.5 * pw[a + b] * tm->W[a].col(j).dot(D2 * tm->W[b].col(j));
                    mism = std::max(mism, std::abs(psi - direct));
                }
            }
            node_max[e][ni] = worst;
            node_mismatch[e][ni] = mism;
        }
    });

    std::vector<ResidualResult> out(E);
    for (std::size_t e = 0; e < E; ++e) {
        out[e].eps = eps[e];
        out[e].nodes = nodes;
        out[e].node_max = node_max[e];
        out[e].max_psi = *std::max_element(node_max[e].begin(), node_max[e].end());
        out[e].direct_mismatch =
            quadratic ? *std::max_element(node_mismatch[e].begin(), node_mismatch[e].end()) : kNaN;
    }
    return out;
}

}  // namespace hjh
