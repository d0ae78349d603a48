#include "hjh/reference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hjh/errors.hpp"
#include "hjh/parallel.hpp"

namespace hjh {

Scheme scheme_from_string(const std::string& s) {
    if (s == "imex" || s == "imex-centered") return Scheme::imex;
    if (s == "explicit" || s == "explicit-centered") return Scheme::explicit_rk2;
    if (s == "lf" || s == "lax-friedrichs") return Scheme::lax_friedrichs;
    throw InvalidInput("unknown scheme \"" + s + "\" (expected imex, explicit or lf)");
}

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::imex: return "imex-centered";
        case Scheme::explicit_rk2: return "explicit-centered";
        case Scheme::lax_friedrichs: return "lax-friedrichs";
    }
    return "imex-centered";
}

int FineGrid1D::points() const { return static_cast<int>(std::llround((x_hi - x_lo) / dx())) + 1; }

FineGrid1D make_fine_grid(double lo, double hi, double eps, int N_per, Scheme scheme) {
    if (!(eps > 0.0 && eps <= 0.5)) throw InvalidInput("fine grid: eps must lie in (0, 1/2]");
    if (N_per < 8 || N_per % 2 != 0) throw InvalidInput("fine grid: N_per must be even and >= 8");
    if (!(hi > lo)) throw InvalidInput("fine grid: empty domain");
    FineGrid1D g;
    g.eps = eps;
    g.N_per = N_per;
    g.scheme = scheme;
    g.x_lo = std::floor(lo / eps) * eps;
    g.x_hi = std::ceil(hi / eps) * eps;
    return g;
}

double boundary_margin(double T, double max_speed, double eps, double Lambda, double sigma) {
    return T * max_speed + 6.0 * std::sqrt(eps * Lambda * T) + 5.0 * sigma;
}

std::vector<double> ReferenceSolution::x() const {
    std::vector<double> xs(grid.points());
    for (int i = 0; i < grid.points(); ++i) xs[i] = grid.x(i);
    return xs;
}

namespace {

// Per-node H and D_pH on the fast grid: quadratic forms when available.
class FastHamiltonian {
public:
    FastHamiltonian(const ProblemSpec& spec, const TorusGrid& tg) : H_(spec.H), N_(tg.N()) {
        for (int j = 0; j < N_; ++j) {
            const Vec y = tg.node(j);
            ys_.push_back(y);
            if (auto q = H_->quadratic_at(y)) {
                M_.push_back(q->M(0, 0));
                b_.push_back(q->b(0));
                V_.push_back(q->V);
            }
            a_.push_back(spec.A(y)(0, 0));
        }
        quadratic_ = static_cast<int>(M_.size()) == N_;
    }

    // Value and derivative at fast node j.
    std::pair<double, double> operator()(int j, double p) const {
        if (quadratic_) return {(M_[j] * p + b_[j]) * p + V_[j], 2.0 * M_[j] * p + b_[j]};
        const Vec q = Vec::Constant(1, p);
        return {H_->value(q, ys_[j]), H_->gradient(q, ys_[j])(0)};
    }
    double a(int j) const { return a_[j]; }

private:
    std::shared_ptr<const Hamiltonian> H_;
    int N_;
    bool quadratic_ = false;
    std::vector<Vec> ys_;
    std::vector<double> M_, b_, V_, a_;
};

struct FarField {
    double p = 0.0;
    double c = 0.0;
    double gamma = 0.0;
    Field w;
};

}  // namespace

ReferenceSolution solve_reference(const ProblemSpec& spec, const InitialData& g, const FineGrid1D& grid,
                                  const std::vector<double>& output_times, const std::vector<double>& initial) {
    if (spec.dim != 1 || g.dim() != 1) throw InvalidInput("reference: only dimension 1 is supported");
    if (output_times.empty()) throw InvalidInput("reference: no output times");
    for (std::size_t i = 0; i < output_times.size(); ++i) {
        if (output_times[i] < 0.0 || (i > 0 && output_times[i] <= output_times[i - 1]))
            throw InvalidInput("reference: output times must be increasing and non-negative");
    }
    const int M = grid.points();
    const int N = grid.N_per;
    const double eps = grid.eps;
    const double dx = grid.dx();
    if (M < 5) throw InvalidInput("reference: grid too small");
    if (std::abs(grid.x_lo / eps - std::round(grid.x_lo / eps)) > 1e-9)
        throw InvalidInput("reference: domain ends must be multiples of eps");
    if (!initial.empty() && static_cast<int>(initial.size()) != M)
        throw InvalidInput("reference: initial profile has the wrong length");

    const TorusGrid tg(1, N);
    const CellDiscretization disc(spec, tg);
    const FastHamiltonian fh(spec, tg);
    // x_lo is a multiple of eps, so fine node i sits on fast node i mod N.
    auto fast = [&](int i) { return i % N; };

    FarField left, right;
    switch (g.family()) {
        case InitialData::Family::affine:
            left.p = right.p = g.slope()(0);
            break;
        case InitialData::Family::logcosh_ramp: {
            const RampAxis& ax = g.axes()[0];
            left.p = ax.p_minus;
            right.p = ax.p_plus;
            left.c = right.c = ax.asymptote_intercept();
            break;
        }
        case InitialData::Family::custom:
            throw InvalidInput("reference: far-field data needs an affine or logcosh-ramp initial profile");
    }
    for (FarField* f : {&left, &right}) {
        const CellSolution cs = solve_cell(disc, Vec::Constant(1, f->p));
        f->gamma = cs.gamma;
        f->w = cs.w;
    }
    auto boundary = [&](int i, double t) {
        const FarField& f = i == 0 ? left : right;
        return f.p * grid.x(i) + f.c - t * f.gamma + eps * f.w(fast(i));
    };

    std::vector<double> u(M);
    for (int i = 0; i < M; ++i) u[i] = initial.empty() ? g.value(Vec::Constant(1, grid.x(i))) : initial[i];

    // Speed bound from the initial gradients and the far-field correctors.
    double maxb = 0.0, amin = HUGE_VAL, amax = 0.0;
    for (int j = 0; j < N; ++j) {
        amin = std::min(amin, fh.a(j));
        amax = std::max(amax, fh.a(j));
    }
    for (int i = 1; i + 1 < M; ++i) maxb = std::max(maxb, std::abs(fh(fast(i), (u[i + 1] - u[i - 1]) / (2 * dx)).second));
    for (const FarField* f : {&left, &right}) {
        const Field dw = diff1(tg, f->w, 0);
        for (int j = 0; j < N; ++j) maxb = std::max(maxb, std::abs(fh(j, f->p + dw(j)).second));
    }
    maxb = std::max(1.25 * maxb, 1e-6);

    ReferenceSolution out;
    out.grid = grid;
    out.peclet = maxb * dx / (eps * amin);
    if (out.peclet >= 2.0) {
        std::ostringstream os;
        os << "reference: mesh Peclet number " << out.peclet << " >= 2; increase N_per";
        throw InvalidInput(os.str());
    }
    double dt_max = grid.c_a * dx / maxb;
    if (grid.scheme != Scheme::imex) dt_max = std::min(dt_max, grid.c_d * dx * dx / (2.0 * eps * amax));

    const double inv_dx2 = 1.0 / (dx * dx);
    const bool lf = grid.scheme == Scheme::lax_friedrichs;
    const int workers = static_cast<int>(std::max(1u, thread_count()));
    const int chunks = M > 20000 ? workers : 1;

    // -H (or its Lax-Friedrichs flux) at interior nodes; returns max|D_pH|.
    auto hamiltonian = [&](const std::vector<double>& v, std::vector<double>& F) {
        std::vector<double> part(chunks, 0.0);
        parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
            const int b = 1 + static_cast<int>((M - 2) * c / chunks);
            const int e = 1 + static_cast<int>((M - 2) * (c + 1) / chunks);
            double mb = 0.0;
            for (int i = b; i < e; ++i) {
                const double p = (v[i + 1] - v[i - 1]) / (2 * dx);
                const auto [h, dh] = fh(fast(i), p);
                F[i] = -h;
                if (lf) F[i] += 0.5 * maxb * (v[i + 1] - 2 * v[i] + v[i - 1]) / dx;
                mb = std::max(mb, std::abs(dh));
            }
            part[c] = mb;
        });
        return *std::max_element(part.begin(), part.end());
    };
    auto diffusion = [&](const std::vector<double>& v, std::vector<double>& F) {
        for (int i = 1; i + 1 < M; ++i) F[i] = eps * fh.a(fast(i)) * (v[i + 1] - 2 * v[i] + v[i - 1]) * inv_dx2;
    };

    // Thomas factorization of I - theta L with Dirichlet ends.
    std::vector<double> lower(M), cprime(M), denom(M);
    double factored_theta = -1.0;
    auto factor = [&](double theta) {
        if (theta == factored_theta) return;
        factored_theta = theta;
        for (int i = 1; i + 1 < M; ++i) {
            const double k = theta * eps * fh.a(fast(i)) * inv_dx2;
            lower[i] = -k;
            const double diag = 1.0 + 2.0 * k;
            const double prev = i == 1 ? 0.0 : cprime[i - 1];
            denom[i] = diag - lower[i] * prev;
            cprime[i] = -k / denom[i];
        }
    };
    // Solves (I - theta L) z = r on the interior with boundary values z[0], z[M-1].
    auto implicit_solve = [&](std::vector<double>& r, std::vector<double>& z) {
        r[1] -= lower[1] * z[0];
        r[M - 2] -= lower[M - 2] * z[M - 1];  // upper coefficient equals lower at each row
        double prev = 0.0;
        for (int i = 1; i + 1 < M; ++i) {
            prev = (r[i] - (i == 1 ? 0.0 : lower[i] * prev)) / denom[i];
            r[i] = prev;
        }
        z[M - 2] = r[M - 2];
        for (int i = M - 3; i >= 1; --i) z[i] = r[i] - cprime[i] * z[i + 1];
    };

    const double gam = 1.0 - 1.0 / std::sqrt(2.0);
    const double del = 1.0 - 1.0 / (2.0 * gam);
    std::vector<double> F1(M, 0.0), F2(M, 0.0), L2(M, 0.0), U2(M), U3(M), r(M);

    double t = 0.0;
    std::size_t next = 0;
    if (output_times[0] == 0.0) {
        out.times.push_back(0.0);
        out.u.push_back(u);
        next = 1;
    } else {
        out.times.push_back(0.0);
        out.u.push_back(u);
    }
    for (; next < output_times.size(); ++next) {
        const double target = output_times[next];
        const long nsteps = std::max(1L, static_cast<long>(std::ceil((target - t) / dt_max - 1e-9)));
        const double dt = (target - t) / nsteps;
        out.dt = std::max(out.dt, dt);
        for (long s = 0; s < nsteps; ++s) {
            const double t0 = t + s * dt;
            double mb = 0.0;
            if (grid.scheme == Scheme::imex) {
                factor(gam * dt);
                mb = std::max(mb, hamiltonian(u, F1));
                for (int i = 1; i + 1 < M; ++i) r[i] = u[i] + dt * gam * F1[i];
                U2[0] = boundary(0, t0 + gam * dt);
                U2[M - 1] = boundary(M - 1, t0 + gam * dt);
                implicit_solve(r, U2);
                mb = std::max(mb, hamiltonian(U2, F2));
                diffusion(U2, L2);
                for (int i = 1; i + 1 < M; ++i)
                    r[i] = u[i] + dt * (del * F1[i] + (1.0 - del) * F2[i] + (1.0 - gam) * L2[i]);
                U3[0] = boundary(0, t0 + dt);
                U3[M - 1] = boundary(M - 1, t0 + dt);
                implicit_solve(r, U3);
                u.swap(U3);
            } else {
                // SSP-RK2 (Heun)
                mb = std::max(mb, hamiltonian(u, F1));
                diffusion(u, L2);
                for (int i = 1; i + 1 < M; ++i) U2[i] = u[i] + dt * (F1[i] + L2[i]);
                U2[0] = boundary(0, t0 + dt);
                U2[M - 1] = boundary(M - 1, t0 + dt);
                mb = std::max(mb, hamiltonian(U2, F2));
                diffusion(U2, L2);
                for (int i = 1; i + 1 < M; ++i) u[i] = 0.5 * (u[i] + U2[i] + dt * (F2[i] + L2[i]));
                u[0] = U2[0];
                u[M - 1] = U2[M - 1];
            }
            out.max_cfl = std::max(out.max_cfl, mb * dt / dx);
            ++out.steps;
            if (out.steps % 64 == 0 || s + 1 == nsteps) {
                for (int i = 0; i < M; ++i)
                    if (!std::isfinite(u[i]))
                        throw SolverError("reference: non-finite solution at step " + std::to_string(out.steps), HUGE_VAL);
            }
        }
        t = target;
        out.times.push_back(target);
        out.u.push_back(u);
    }
    return out;
}

std::vector<double> prepared_profile(const CorrectorHierarchy& h, const FineGrid1D& grid, int order) {
    const int M = grid.points();
    std::vector<double> u(M);
    const std::size_t chunks = std::max(1u, thread_count());
    parallel_for(chunks, [&](std::size_t c) {
        const int b = static_cast<int>(M * c / chunks), e = static_cast<int>(M * (c + 1) / chunks);
        for (int i = b; i < e; ++i) u[i] = evaluate_expansion(h, grid.eps, Vec::Constant(1, grid.x(i)), 0.0, false, order).eta;
    });
    return u;
}

CompareResult compare(const ReferenceSolution& ref, const CorrectorHierarchy& h, const Box& window, int order) {
    if (window.dim() != 1) throw InvalidInput("compare: window must be one-dimensional");
    const auto& grid = ref.grid;
    const double T = ref.times.back();
    const double margin = boundary_margin(T, h.effective().fan().max_speed, grid.eps, h.spec().bounds.Lambda,
                                          h.effective().g().sigma_max());
    if (window.lo(0) - grid.x_lo < margin || grid.x_hi - window.hi(0) < margin) {
        std::ostringstream os;
        os << "compare: window [" << window.lo(0) << ", " << window.hi(0) << "] is closer than " << margin
           << " to the domain ends [" << grid.x_lo << ", " << grid.x_hi << "]";
        throw CoverageError(os.str());
    }
    CompareResult out;
    out.eps = grid.eps;
    out.order = order;
    std::vector<int> idx;
    for (int i = 0; i < grid.points(); ++i) {
        const double x = grid.x(i);
        if (x >= window.lo(0) - 1e-12 && x <= window.hi(0) + 1e-12) {
            idx.push_back(i);
            out.x.push_back(x);
        }
    }
    for (std::size_t k = 0; k < ref.times.size(); ++k) {
        if (ref.times[k] <= 0.0) continue;
        std::vector<double> err(idx.size());
        const double t = ref.times[k];
        const std::size_t chunks = std::max(1u, thread_count());
        parallel_for(chunks, [&](std::size_t c) {
            const std::size_t b = idx.size() * c / chunks, e = idx.size() * (c + 1) / chunks;
            for (std::size_t i = b; i < e; ++i) {
                const double eta = evaluate_expansion(h, grid.eps, Vec::Constant(1, out.x[i]), t, false, order).eta;
                err[i] = std::abs(ref.u[k][idx[i]] - eta);
            }
        });
        for (double e : err) out.sup_error = std::max(out.sup_error, e);
        out.error.push_back(std::move(err));
    }
    return out;
}

}  // namespace hjh
