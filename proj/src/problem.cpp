#include "hjh/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "check_util.hpp"
#include "hjh/errors.hpp"

namespace hjh {

void ProblemBounds::check() const {
    if (!(lambda > 0.0 && lambda <= Lambda)) throw InvalidInput("bounds: need 0 < lambda <= Lambda");
    if (!(alpha > 0.0 && alpha <= beta)) throw InvalidInput("bounds: need 0 < alpha <= beta");
    if (!(alpha_prime >= 0.0 && beta_prime >= 0.0)) throw InvalidInput("bounds: alpha', beta' must be >= 0");
    if (!(K > 0.0 && L > 0.0)) throw InvalidInput("bounds: K and L must be positive");
}

// ---------------------------------------------------------------------------
// Diffusion

Diffusion Diffusion::identity(int n) {
    std::vector<std::vector<TrigSeries>> e(n, std::vector<TrigSeries>(n));
    for (int i = 0; i < n; ++i) e[i][i] = TrigSeries(1.0);
    return Diffusion(n, std::move(e));
}

Diffusion::Diffusion(int n, std::vector<std::vector<TrigSeries>> entries) : n_(n), entries_(std::move(entries)) {
    if (n < 1 || n > 2) throw InvalidInput("diffusion: dimension must be 1 or 2");
    if (static_cast<int>(entries_.size()) != n) throw InvalidInput("diffusion: expected n rows");
    for (auto& row : entries_) {
        if (static_cast<int>(row.size()) != n) throw InvalidInput("diffusion: expected n columns");
    }
}

Mat Diffusion::operator()(const Vec& y) const {
    Mat A(n_, n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = i; j < n_; ++j) {
            A(i, j) = entries_[i][j](y);
            A(j, i) = A(i, j);
        }
    }
    return A;
}

bool Diffusion::is_constant() const {
    for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j)
            if (!entries_[i][j].is_constant()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Quadratic Hamiltonians

std::shared_ptr<QuadraticHamiltonian> QuadraticHamiltonian::separable(int n, double c, std::vector<TrigSeries> b,
                                                                      TrigSeries V) {
    if (n < 1 || n > 2) throw InvalidInput("hamiltonian: dimension must be 1 or 2");
    if (b.empty()) b.assign(n, TrigSeries(0.0));
    if (static_cast<int>(b.size()) != n) throw InvalidInput("hamiltonian: drift b needs n components");
    auto h = std::shared_ptr<QuadraticHamiltonian>(new QuadraticHamiltonian());
    h->n_ = n;
    h->family_ = "separable-quadratic";
    h->c_ = c;
    h->b_ = std::move(b);
    h->V_ = std::move(V);
    h->M_.assign(n, std::vector<TrigSeries>(n));
    for (int i = 0; i < n; ++i) h->M_[i][i] = TrigSeries(c);
    return h;
}

std::shared_ptr<QuadraticHamiltonian> QuadraticHamiltonian::anisotropic(int n, std::vector<std::vector<TrigSeries>> M,
                                                                        TrigSeries V) {
    if (n < 1 || n > 2) throw InvalidInput("hamiltonian: dimension must be 1 or 2");
    if (static_cast<int>(M.size()) != n) throw InvalidInput("hamiltonian: M needs n rows");
    for (auto& row : M)
        if (static_cast<int>(row.size()) != n) throw InvalidInput("hamiltonian: M needs n columns");
    auto h = std::shared_ptr<QuadraticHamiltonian>(new QuadraticHamiltonian());
    h->n_ = n;
    h->family_ = "anisotropic-quadratic";
    h->c_ = 0.0;
    h->b_.assign(n, TrigSeries(0.0));
    h->V_ = std::move(V);
    h->M_ = std::move(M);
    return h;
}

QuadraticForm QuadraticHamiltonian::form(const Vec& y) const {
    QuadraticForm q{Mat(n_, n_), Vec(n_), V_(y)};
    for (int i = 0; i < n_; ++i) {
        q.b(i) = b_[i](y);
        for (int j = i; j < n_; ++j) {
            q.M(i, j) = M_[i][j](y);
            q.M(j, i) = q.M(i, j);
        }
    }
    return q;
}

double QuadraticHamiltonian::value(const Vec& p, const Vec& y) const {
    const QuadraticForm q = form(y);
    return p.dot(q.M * p) + q.b.dot(p) + q.V;
}

Vec QuadraticHamiltonian::gradient(const Vec& p, const Vec& y) const {
    const QuadraticForm q = form(y);
    return 2.0 * q.M * p + q.b;
}

Mat QuadraticHamiltonian::hessian(const Vec&, const Vec& y) const { return 2.0 * form(y).M; }

double QuadraticHamiltonian::directional(int k, const Vec& p, const Vec& y, std::span<const Vec> dirs) const {
    if (k == 0) return value(p, y);
    if (k > 2) return 0.0;
    const QuadraticForm q = form(y);
    if (k == 1) return (2.0 * q.M * p + q.b).dot(dirs[0]);
    return 2.0 * dirs[0].dot(q.M * dirs[1]);
}

// ---------------------------------------------------------------------------
// Custom Hamiltonians

CustomHamiltonian::CustomHamiltonian(int n, std::string name, Fn fn) : n_(n), name_(std::move(name)), fn_(std::move(fn)) {
    if (n < 1 || n > 2) throw InvalidInput("hamiltonian: dimension must be 1 or 2");
}

Vec CustomHamiltonian::gradient(const Vec& p, const Vec& y) const {
    const double h = step(p);
    Vec g(n_);
    for (int i = 0; i < n_; ++i) {
        Vec e = unit_vec(n_, i) * h;
        g(i) = (fn_(p + e, y) - fn_(p - e, y)) / (2.0 * h);
    }
    return g;
}

Mat CustomHamiltonian::hessian(const Vec& p, const Vec& y) const {
    Mat Hm(n_, n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = i; j < n_; ++j) {
            const Vec d[2] = {unit_vec(n_, i), unit_vec(n_, j)};
            Hm(i, j) = directional(2, p, y, d);
            Hm(j, i) = Hm(i, j);
        }
    }
    return Hm;
}

double CustomHamiltonian::directional(int k, const Vec& p, const Vec& y, std::span<const Vec> dirs) const {
    if (k == 0) return fn_(p, y);
    const double h = step(p);
    const Vec d = dirs[k - 1] * h;
    return (directional(k - 1, p + d, y, dirs) - directional(k - 1, p - d, y, dirs)) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Initial data

namespace {

// Coefficients of P_k with d^k/dz^k tanh(z) = P_k(tanh z).
const std::vector<std::vector<double>>& tanh_derivative_polys() {
    static const std::vector<std::vector<double>> polys = [] {
        constexpr int kmax = 32;
        std::vector<std::vector<double>> P(kmax + 1);
        P[0] = {0.0, 1.0};
        for (int k = 0; k < kmax; ++k) {
            const auto& a = P[k];
            std::vector<double> da(a.size() > 1 ? a.size() - 1 : 1, 0.0);
            for (std::size_t i = 1; i < a.size(); ++i) da[i - 1] = a[i] * static_cast<double>(i);
            // multiply by (1 - T^2)
            std::vector<double> next(da.size() + 2, 0.0);
            for (std::size_t i = 0; i < da.size(); ++i) {
                next[i] += da[i];
                next[i + 2] -= da[i];
            }
            P[k + 1] = std::move(next);
        }
        return P;
    }();
    return polys;
}

double horner(const std::vector<double>& c, double x) {
    double r = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * x + *it;
    return r;
}

double logcosh(double z) {
    const double a = std::abs(z);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

double RampAxis::value(double x) const {
    return 0.5 * (p_plus + p_minus) * x + 0.5 * (p_plus - p_minus) * sigma * logcosh(x / sigma);
}

double RampAxis::derivative(int k, double x) const {
    const double T = std::tanh(x / sigma);
    if (k == 1) return 0.5 * (p_plus + p_minus) + 0.5 * (p_plus - p_minus) * T;
    const auto& P = tanh_derivative_polys();
    if (k - 1 >= static_cast<int>(P.size())) throw InvalidInput("ramp: derivative order too high");
    return 0.5 * (p_plus - p_minus) * std::pow(sigma, 1 - k) * horner(P[k - 1], T);
}

double RampAxis::asymptote_intercept() const { return -0.5 * (p_plus - p_minus) * sigma * std::numbers::ln2; }

InitialData InitialData::affine(Vec slope) {
    InitialData g;
    g.family_ = Family::affine;
    g.n_ = static_cast<int>(slope.size());
    if (g.n_ < 1 || g.n_ > 2) throw InvalidInput("initial data: dimension must be 1 or 2");
    g.slope_ = std::move(slope);
    return g;
}

InitialData InitialData::logcosh_ramp(std::vector<RampAxis> axes) {
    InitialData g;
    g.family_ = Family::logcosh_ramp;
    g.n_ = static_cast<int>(axes.size());
    if (g.n_ < 1 || g.n_ > 2) throw InvalidInput("initial data: dimension must be 1 or 2");
    for (const auto& a : axes) {
        if (!(a.sigma > 0.0)) throw InvalidInput("initial data: ramp width sigma must be positive");
        if (a.p_plus < a.p_minus) throw InvalidInput("initial data: ramp needs p_minus <= p_plus");
    }
    g.axes_ = std::move(axes);
    g.slope_ = Vec::Zero(g.n_);
    return g;
}

InitialData InitialData::custom(int n, std::function<double(const Vec&)> gf, std::function<Vec(const Vec&)> dg,
                                std::function<Mat(const Vec&)> d2g) {
    InitialData g;
    g.family_ = Family::custom;
    g.n_ = n;
    if (n < 1 || n > 2) throw InvalidInput("initial data: dimension must be 1 or 2");
    g.g_ = std::move(gf);
    g.dg_ = std::move(dg);
    g.d2g_ = std::move(d2g);
    g.slope_ = Vec::Zero(n);
    return g;
}

std::string InitialData::family_name() const {
    switch (family_) {
        case Family::affine: return "affine";
        case Family::logcosh_ramp: return "logcosh-ramp";
        case Family::custom: return "custom";
    }
    return "custom";
}

double InitialData::axis_value(int axis, double xi) const {
    if (family_ == Family::affine) return slope_(axis) * xi;
    if (family_ == Family::logcosh_ramp) return axes_[axis].value(xi);
    throw InvalidInput("initial data: axis evaluation needs a separable family");
}

double InitialData::axis_derivative(int axis, int k, double xi) const {
    if (k == 0) return axis_value(axis, xi);
    if (family_ == Family::affine) return k == 1 ? slope_(axis) : 0.0;
    if (family_ == Family::logcosh_ramp) return axes_[axis].derivative(k, xi);
    throw InvalidInput("initial data: axis evaluation needs a separable family");
}

double InitialData::value(const Vec& x) const {
    if (family_ == Family::custom) return g_(x);
    double v = 0.0;
    for (int i = 0; i < n_; ++i) v += axis_value(i, x(i));
    return v;
}

Vec InitialData::gradient(const Vec& x) const {
    if (family_ == Family::custom) return dg_(x);
    Vec d(n_);
    for (int i = 0; i < n_; ++i) d(i) = axis_derivative(i, 1, x(i));
    return d;
}

Mat InitialData::hessian(const Vec& x) const {
    if (family_ == Family::custom) return d2g_(x);
    Mat h = Mat::Zero(n_, n_);
    for (int i = 0; i < n_; ++i) h(i, i) = axis_derivative(i, 2, x(i));
    return h;
}

double InitialData::derivative_norm(int k, const Vec& x) const {
    if (k == 1) return gradient(x).norm();
    if (family_ == Family::custom) {
        if (k == 2) return hessian(x).operatorNorm();
        throw InvalidInput("initial data: custom family only provides derivatives up to order 2");
    }
    // Diagonal tensors: the norm is the largest axis entry.
    double m = 0.0;
    for (int i = 0; i < n_; ++i) m = std::max(m, std::abs(axis_derivative(i, k, x(i))));
    return m;
}

double InitialData::sigma_max() const {
    double s = 0.0;
    for (const auto& a : axes_) s = std::max(s, a.sigma);
    return s;
}

std::pair<Vec, Vec> InitialData::gradient_range() const {
    if (family_ == Family::affine) return {slope_, slope_};
    if (family_ == Family::logcosh_ramp) {
        Vec lo(n_), hi(n_);
        for (int i = 0; i < n_; ++i) {
            lo(i) = axes_[i].p_minus;
            hi(i) = axes_[i].p_plus;
        }
        return {lo, hi};
    }
    throw InvalidInput("initial data: gradient range unknown for custom family");
}

// ---------------------------------------------------------------------------

void ProblemSpec::check() const {
    if (dim != 1 && dim != 2) throw InvalidInput("problem: dimension must be 1 or 2, got " + std::to_string(dim));
    if (A.dim() != dim) throw InvalidInput("problem: diffusion dimension mismatch");
    if (!H) throw InvalidInput("problem: missing Hamiltonian");
    if (H->dim() != dim) throw InvalidInput("problem: Hamiltonian dimension mismatch");
    if (g && g->dim() != dim) throw InvalidInput("problem: initial data dimension mismatch");
    if (k_max < 2) throw InvalidInput("problem: k_max must be at least 2");
    bounds.check();
}

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Structure-condition validation

namespace {

using detail::describe;
using detail::MarginTracker;

struct Sampler {
    std::mt19937_64 rng;
    int n;

    Vec unit_cell() {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vec y(n);
        for (int i = 0; i < n; ++i) y(i) = u(rng);
        return y;
    }
    Vec ball(double radius) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Vec p(n);
        do {
            for (int i = 0; i < n; ++i) p(i) = u(rng);
        } while (p.norm() > 1.0);
        return p * radius;
    }
    Vec direction() {
        Vec d = ball(1.0);
        while (d.norm() < 1e-3) d = ball(1.0);
        return d / d.norm();
    }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
};

std::vector<Vec> lattice_points(int n, int per_dim) {
    std::vector<Vec> pts;
    if (n == 1) {
        for (int i = 0; i < per_dim; ++i) pts.push_back(Vec::Constant(1, double(i) / per_dim));
    } else {
        for (int i = 0; i < per_dim; ++i)
            for (int j = 0; j < per_dim; ++j) {
                Vec y(2);
                y << double(i) / per_dim, double(j) / per_dim;
                pts.push_back(y);
            }
    }
    return pts;
}

double tensor_probe(const Hamiltonian& H, int k, const Vec& p, const Vec& y, const Vec& u) {
    std::vector<Vec> dirs(static_cast<std::size_t>(std::max(k, 1)), u);
    return H.directional(k, p, y, dirs);
}

}  // namespace

ValidationReport validate_problem(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed) {
    if (spec.dim != 1 && spec.dim != 2)
        throw InvalidInput("validate_problem: dimension must be 1 or 2, got " + std::to_string(spec.dim));
    if (samples < 1) throw InvalidInput("validate_problem: samples must be >= 1");
    spec.check();

    const int n = spec.dim;
    const auto& H = *spec.H;
    const auto& b = spec.bounds;
    Sampler s{std::mt19937_64(seed), n};
    ValidationReport report;
    report.seed = seed;

    std::vector<Vec> ys = lattice_points(n, n == 1 ? 16 : 6);
    for (std::size_t i = 0; i < samples; ++i) ys.push_back(s.unit_cell());

    std::vector<Vec> ps;
    for (double r : {0.0, 0.5, 1.0, 3.0, 10.0}) {
        for (int k = 0; k < n; ++k) {
            ps.push_back(unit_vec(n, k) * r);
            ps.push_back(-unit_vec(n, k) * r);
        }
    }
    for (std::size_t i = 0; i < samples; ++i) ps.push_back(s.ball(10.0));

    const double tol = 1e-12;

    {  // periodicity: exact lattice shifts
        MarginTracker tA("periodicity-A"), tH("periodicity-H");
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const Vec& y = ys[i];
            const Vec& p = ps[i % ps.size()];
            for (int k = 0; k < n; ++k) {
                const Vec ys2 = y + unit_vec(n, k);
                const double dA = (spec.A(y) - spec.A(ys2)).cwiseAbs().maxCoeff();
                const double dH = std::abs(H.value(p, y) - H.value(p, ys2));
                const double scale = 1.0 + std::abs(H.value(p, y));
                tA.add(1e-12 - dA, [&] { return describe("y", y); });
                tH.add(1e-12 * scale - dH, [&] { return describe("y", y) + " " + describe("p", p); });
            }
        }
        report.checks.push_back(tA.finish());
        report.checks.push_back(tH.finish());
    }

    {  // ellipticity and symmetry of A
        MarginTracker t("ellipticity");
        for (const Vec& y : ys) {
            const Mat A = spec.A(y);
            Eigen::SelfAdjointEigenSolver<Mat> es(A);
            const double margin = std::min(es.eigenvalues().minCoeff() - b.lambda, b.Lambda - es.eigenvalues().maxCoeff());
            t.add(margin + tol, [&] { return describe("y", y); });
        }
        report.checks.push_back(t.finish());
    }

    {  // convexity in p: H(tp + (1-t)q) <= tH(p) + (1-t)H(q)
        MarginTracker t("convexity-H");
        for (std::size_t i = 0; i < samples + ys.size(); ++i) {
            const Vec& y = ys[i % ys.size()];
            const Vec p = s.ball(10.0), q = s.ball(10.0);
            const double th = (i % 4 == 0) ? 0.5 : s.unit();
            const double lhs = H.value(th * p + (1.0 - th) * q, y);
            const double rhs = th * H.value(p, y) + (1.0 - th) * H.value(q, y);
            const double scale = 1.0 + std::abs(lhs) + std::abs(rhs);
            t.add(rhs - lhs + tol * scale, [&] {
                std::ostringstream os;
                os << describe("y", y) << " " << describe("p", p) << " " << describe("q", q) << " t=" << th;
                return os.str();
            });
        }
        report.checks.push_back(t.finish());
    }

    {  // quadratic growth for |p| <= 10
        MarginTracker t("growth-H");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                const Vec& p = ps[i];
                const Vec& y = ys[(i * 4 + j) % ys.size()];
                const double h = H.value(p, y);
                const double p2 = p.squaredNorm();
                const double margin = std::min(h - (b.alpha * p2 - b.alpha_prime), (b.beta * p2 + b.beta_prime) - h);
                t.add(margin + tol * (1.0 + std::abs(h)), [&] { return describe("y", y) + " " + describe("p", p); });
            }
        }
        report.checks.push_back(t.finish());
    }

    const double dy = 1e-4;
    {  // ||A||_{C^{0,1}} <= K via sup plus sampled difference quotients
        MarginTracker t("lipschitz-A");
        for (const Vec& y : ys) {
            const Vec u = s.direction();
            const Mat A0 = spec.A(y);
            const double quotient = (spec.A(y + dy * u) - A0).operatorNorm() / dy;
            t.add(b.K - (A0.operatorNorm() + quotient), [&] { return describe("y", y); });
        }
        report.checks.push_back(t.finish());
    }

    // ||D_p^k H(p, .)||_{C^{0,1}} <= K (1 + |p|^{(2-k)+}). Finite-difference
    // derivatives of custom Hamiltonians are not meaningful past order 4.
    const int kmax = H.polynomial_degree() >= 0 ? spec.k_max : std::min(spec.k_max, 4);
    for (int k = 0; k <= kmax; ++k) {
        MarginTracker t("lipschitz-Dp" + std::to_string(k) + "H");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const Vec& p = ps[i];
            const Vec& y = ys[i % ys.size()];
            const Vec u = s.direction();
            const Vec v = s.direction();
            const double f0 = tensor_probe(H, k, p, y, u);
            const double f1 = tensor_probe(H, k, p, y + dy * v, u);
            const double norm = std::abs(f0) + std::abs(f1 - f0) / dy;
            const double bound = b.K * (1.0 + std::pow(p.norm(), std::max(2 - k, 0)));
            t.add(bound - norm, [&] { return describe("y", y) + " " + describe("p", p); });
        }
        report.checks.push_back(t.finish());
    }
    return report;
}

}  // namespace hjh
