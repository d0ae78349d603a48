#include "hjh/effective.hpp"

#include <cmath>
#include <sstream>

#include "hjh/errors.hpp"

namespace hjh {

bool Box::contains(const Vec& x, double slack) const {
    for (int a = 0; a < dim(); ++a)
        if (!(x(a) >= lo(a) - slack && x(a) <= hi(a) + slack)) return false;
    return true;
}

Box Box::inflated(double margin) const {
    return {lo.array() - margin, hi.array() + margin};
}

namespace {

std::string describe(const Vec& x, double t) {
    std::ostringstream os;
    os.precision(12);
    os << "(x=(";
    for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x(i);
    os << "), t=" << t << ")";
    return os.str();
}

}  // namespace

double max_drift_speed(const InitialData& g, const EffectiveTable& table) {
    double m = 0.0;
    if (!g.separable()) {
        for (int i = 0; i < table.nodes(); ++i) m = std::max(m, table.bbar_at(i).norm());
        return m;
    }
    const auto [lo, hi] = g.gradient_range();
    const int n = g.dim();
    constexpr int k = 64;
    const int m1 = n == 2 ? k + 1 : 1;
    for (int j = 0; j < m1; ++j)
        for (int i = 0; i <= k; ++i) {
            Vec p(n);
            p(0) = lo(0) + (hi(0) - lo(0)) * i / k;
            if (n == 2) p(1) = lo(1) + (hi(1) - lo(1)) * j / k;
            m = std::max(m, table.B(p).norm());
        }
    return m;
}

EffectiveSolution::EffectiveSolution(InitialData g, std::shared_ptr<const EffectiveTable> table, Box window, double T,
                                     const EffectiveOptions& opts)
    : g_(std::move(g)), table_(std::move(table)), window_(std::move(window)), opts_(opts) {
    if (!table_) throw InvalidInput("effective: missing table");
    if (g_.dim() != table_->dim() || window_.dim() != g_.dim())
        throw InvalidInput("effective: dimension mismatch between data, table and window");
    if (!(T > 0.0)) throw InvalidInput("effective: horizon T must be positive");
    for (int a = 0; a < window_.dim(); ++a)
        if (!(window_.hi(a) >= window_.lo(a))) throw InvalidInput("effective: empty window");
    fan_.T = T;
    build_fan();
}

void EffectiveSolution::build_fan() {
    const int n = dim();
    const double speed = max_drift_speed(g_, *table_);
    fan_.max_speed = speed;
    const double margin = fan_.T * speed + 5.0 * g_.sigma_max();
    fan_.sources = window_.inflated(margin);
    double full = 0.0;
    for (int a = 0; a < n; ++a) full = std::max(full, fan_.sources.hi(a) - fan_.sources.lo(a));
    fan_.dx = opts_.source_dx > 0.0 ? opts_.source_dx : full / (n == 1 ? 2000.0 : 200.0);
    for (int a = 0; a < n; ++a) {
        const double w = fan_.sources.hi(a) - fan_.sources.lo(a);
        fan_.counts[a] = static_cast<int>(std::ceil(w / fan_.dx - 1e-9)) + 1;
        fan_.sources.hi(a) = fan_.sources.lo(a) + (fan_.counts[a] - 1) * fan_.dx;
    }
    if (n == 1) fan_.counts[1] = 1;
    const int m = fan_.counts[0] * fan_.counts[1];
    fan_.x.resize(m);
    fan_.p.resize(m);
    fan_.speed.resize(m);
    fan_.rate.resize(m);
    fan_.min_jacobian = 1.0;
    for (int idx = 0; idx < m; ++idx) {
        Vec x = fan_.sources.lo;
        x(0) += (idx % fan_.counts[0]) * fan_.dx;
        if (n == 2) x(1) += (idx / fan_.counts[0]) * fan_.dx;
        const Vec p = g_.gradient(x);
        table_->require(p);
        const Vec b = table_->B(p);
        if (b.norm() < opts_.zeta_min) {
            throw AdmissibilityError("effective: |Bbar| = " + std::to_string(b.norm()) + " below zeta_min at source " +
                                     describe(x, 0.0));
        }
        fan_.x[idx] = x;
        fan_.p[idx] = p;
        fan_.speed[idx] = b;
        fan_.rate[idx] = p.dot(b) - table_->H(p);
        const Mat D2g = g_.hessian(x);
        const Mat D2H = table_->D2H(p);
        for (int k = 0; k < opts_.time_samples; ++k) {
            const double t = fan_.T * k / (opts_.time_samples - 1);
            const double det = (Mat::Identity(n, n) + t * D2H * D2g).determinant();
            fan_.min_jacobian = std::min(fan_.min_jacobian, det);
        }
    }
    if (fan_.min_jacobian < 1.0 - 1e-12) {
        throw Error("crossing characteristics: Jacobian " + std::to_string(fan_.min_jacobian) + " below 1");
    }
    // Window coverage at sampled times.
    for (int k = 0; k < opts_.time_samples; ++k) {
        const double t = fan_.T * k / (opts_.time_samples - 1);
        if (n == 1) {
            const double left = fan_.x.front()(0) + t * fan_.speed.front()(0);
            const double right = fan_.x.back()(0) + t * fan_.speed.back()(0);
            if (left > window_.lo(0)) throw CoverageError("effective: window point uncovered " + describe(window_.lo, t));
            if (right < window_.hi(0)) throw CoverageError("effective: window point uncovered " + describe(window_.hi, t));
        } else {
            for (int c = 0; c < 4; ++c) {
                Vec x(2);
                x << ((c & 1) ? window_.hi(0) : window_.lo(0)), ((c & 2) ? window_.hi(1) : window_.lo(1));
                const Vec x0 = invert(x, t);
                if (!fan_.sources.contains(x0, 1e-12))
                    throw CoverageError("effective: window point uncovered " + describe(x, t));
            }
        }
    }
}

Vec EffectiveSolution::forward(const Vec& x0, double t) const { return x0 + t * table_->B(g_.gradient(x0)); }

double EffectiveSolution::jacobian(const Vec& x0, double t) const {
    const int n = dim();
    return (Mat::Identity(n, n) + t * table_->D2H(g_.gradient(x0)) * g_.hessian(x0)).determinant();
}

Vec EffectiveSolution::invert(const Vec& x, double t) const {
    const int n = dim();
    if (x.size() != n) throw InvalidInput("effective: point has the wrong dimension");
    if (t < 0.0 || t > fan_.T * (1.0 + 1e-12)) throw CoverageError("effective: time outside [0,T] " + describe(x, t));
    if (t == 0.0) return x;
    const double tol = 1e-14 * (1.0 + x.norm());
    if (n == 1) {
        const int m = fan_.counts[0];
        auto xi = [&](int i) { return fan_.x[i](0) + t * fan_.speed[i](0); };
        if (x(0) < xi(0) || x(0) > xi(m - 1)) throw CoverageError("effective: point outside the fan " + describe(x, t));
        int lo = 0, hi = m - 1;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            (xi(mid) <= x(0) ? lo : hi) = mid;
        }
        double a = fan_.x[lo](0), b = fan_.x[hi](0);
        const double fa0 = xi(lo) - x(0), fb0 = xi(hi) - x(0);
        double z = fb0 > fa0 ? a + (b - a) * (-fa0) / (fb0 - fa0) : 0.5 * (a + b);
        Vec zv(1);
        for (int it = 0; it < 100; ++it) {
            zv(0) = z;
            const Vec p = g_.gradient(zv);
            const double f = z + t * table_->B(p)(0) - x(0);
            if (std::abs(f) <= tol) break;
            if (f > 0) b = z;
            else a = z;
            const double df = 1.0 + t * table_->D2H(p)(0, 0) * g_.hessian(zv)(0, 0);
            double zn = z - f / df;
            if (!(zn > a && zn < b)) zn = 0.5 * (a + b);
            if (b - a <= 1e-16 * (1.0 + std::abs(z))) break;
            z = zn;
        }
        return Vec::Constant(1, z);
    }
    // Damped Newton on F(x0) = x0 + t Bbar(Dg(x0)) - x.
    Vec z = x - t * table_->B(g_.gradient(x));
    auto F = [&](const Vec& v) { return Vec(forward(v, t) - x); };
    Vec f = F(z);
    for (int it = 0; it < 100 && f.norm() > tol; ++it) {
        const Mat J = Mat::Identity(n, n) + t * table_->D2H(g_.gradient(z)) * g_.hessian(z);
        const Vec step = -J.inverse() * f;
        double alpha = 1.0;
        bool ok = false;
        for (int b = 0; b < 40; ++b, alpha *= 0.5) {
            Vec zn = z + alpha * step;
            if (!table_->covers(g_.gradient(zn))) continue;
            Vec fn = F(zn);
            if (fn.norm() < (1.0 - 1e-4 * alpha) * f.norm() || fn.norm() <= tol) {
                z = zn;
                f = fn;
                ok = true;
                break;
            }
        }
        if (!ok) break;
    }
    if (f.norm() > 1e-11 * (1.0 + x.norm())) throw CoverageError("effective: inversion failed " + describe(x, t));
    return z;
}

U0Eval EffectiveSolution::eval(const Vec& x, double t) const {
    const int n = dim();
    U0Eval r;
    r.source = invert(x, t);
    const Vec p = g_.gradient(r.source);
    const double hb = table_->H(p);
    const Vec b = table_->B(p);
    r.value = g_.value(r.source) + t * (p.dot(b) - hb);
    r.grad = p;
    const Mat D2g = g_.hessian(r.source);
    const Mat J = Mat::Identity(n, n) + t * table_->D2H(p) * D2g;
    r.hess = D2g * J.inverse();
    r.hess = 0.5 * (r.hess + r.hess.transpose()).eval();
    r.dt = -hb;
    return r;
}

double EffectiveSolution::derivative(const Vec& x, double t, std::array<int, 2> alpha, int j) const {
    const int n = dim();
    if (n == 1) alpha[1] = 0;
    const int ord = alpha[0] + alpha[1];
    const double h = fan_.dx;
    if (j == 0 && ord <= 2) {
        const U0Eval e = eval(x, t);
        if (ord == 0) return e.value;
        if (ord == 1) return alpha[0] ? e.grad(0) : e.grad(1);
        if (alpha[0] == 2) return e.hess(0, 0);
        if (alpha[1] == 2) return e.hess(1, 1);
        return e.hess(0, 1);
    }
    if (j == 1 && ord <= 1) {
        const U0Eval e = eval(x, t);
        if (ord == 0) return e.dt;
        // d_t D u0 = -D2u0 Bbar(Du0)
        const Vec dtg = -e.hess * table_->B(e.grad);
        return alpha[0] ? dtg(0) : dtg(1);
    }
    if (j >= 1) {
        // difference in t of one lower time order, one-sided near 0 and T
        auto f = [&](double s) { return derivative(x, s, alpha, j - 1); };
        if (t >= h && t + h <= fan_.T) return (f(t + h) - f(t - h)) / (2 * h);
        if (t < h) return (-3 * f(t) + 4 * f(t + h) - f(t + 2 * h)) / (2 * h);
        return (3 * f(t) - 4 * f(t - h) + f(t - 2 * h)) / (2 * h);
    }
    // x-order above two
    const int axis = alpha[0] > 0 ? 0 : 1;
    auto lower = alpha;
    lower[axis] -= 1;
    const Vec e = unit_vec(n, axis) * h;
    return (derivative(x + e, t, lower, j) - derivative(x - e, t, lower, j)) / (2 * h);
}

Vec EffectiveSolution::drift(const Vec& x, double t) const {
    const Vec b = table_->B(eval(x, t).grad);
    if (b.norm() < opts_.zeta_min)
        throw AdmissibilityError("effective: |Bbar| below zeta_min at " + describe(x, t));
    return b;
}

EffectiveSolution solve_effective(const InitialData& g, std::shared_ptr<const EffectiveTable> table,
                                  const Box& window, double T, const EffectiveOptions& opts) {
    return EffectiveSolution(g, std::move(table), window, T, opts);
}

U0Eval eval_u0(const EffectiveSolution& sol, const Vec& x, double t) { return sol.eval(x, t); }

Vec invert_characteristics(const EffectiveSolution& sol, const Vec& x, double t) { return sol.invert(x, t); }

Vec drift_field(const EffectiveSolution& sol, const Vec& x, double t) { return sol.drift(x, t); }

}  // namespace hjh
