#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjh/linalg.hpp"
#include "hjh/trig_series.hpp"

namespace hjh {

/// Structure-condition constants of the viscous Hamilton-Jacobi problem.
struct ProblemBounds {
    double lambda = 1.0;       // ellipticity lower bound
    double Lambda = 1.0;       // ellipticity upper bound
    double alpha = 1.0;        // alpha|p|^2 - alpha' <= H
    double alpha_prime = 0.0;
    double beta = 1.0;         // H <= beta|p|^2 + beta'
    double beta_prime = 0.0;
    double K = 1.0;            // coefficient regularity constant
    double L = 1.0;            // initial-data derivative bound

    /// Throws InvalidInput unless 0 < lambda <= Lambda, 0 < alpha <= beta,
    /// alpha', beta' >= 0 and K, L > 0.
    void check() const;
};

/// Periodic, symmetric diffusion matrix A(y) with trigonometric-series entries.
class Diffusion {
public:
    /// Identity diffusion in dimension n.
    static Diffusion identity(int n);
    /// entries[i][j] for j >= i is used; the lower triangle is mirrored.
    Diffusion(int n, std::vector<std::vector<TrigSeries>> entries);

    int dim() const noexcept { return n_; }
    Mat operator()(const Vec& y) const;
    bool is_constant() const;
    const TrigSeries& entry(int i, int j) const { return entries_[std::min(i, j)][std::max(i, j)]; }

private:
    int n_ = 1;
    std::vector<std::vector<TrigSeries>> entries_;
};

/// Coefficients of a Hamiltonian that is quadratic in p at a fixed y:
///   H(p) = p.M p + b.p + V
struct QuadraticForm {
    Mat M;
    Vec b;
    double V = 0.0;
};

/// H(p, y): periodic in y, convex in p. Derivatives in p are exposed both as
/// gradient/Hessian and as multilinear forms D_p^k H(p,y)[d_1, ..., d_k].
class Hamiltonian {
public:
    virtual ~Hamiltonian() = default;

    virtual int dim() const = 0;
    virtual std::string family() const = 0;
    virtual double value(const Vec& p, const Vec& y) const = 0;
    virtual Vec gradient(const Vec& p, const Vec& y) const = 0;
    virtual Mat hessian(const Vec& p, const Vec& y) const = 0;
    virtual double directional(int k, const Vec& p, const Vec& y,
                               std::span<const Vec> dirs) const = 0;
    /// Degree in p when H is a polynomial in p, otherwise -1.
    virtual int polynomial_degree() const = 0;
    /// Coefficients at y when H is quadratic in p.
    virtual std::optional<QuadraticForm> quadratic_at(const Vec& y) const = 0;
};

/// H(p,y) = p.M(y)p + b(y).p + V(y) with trigonometric-series coefficients.
/// The "separable-quadratic" family is M = c I; "anisotropic-quadratic" has
/// general symmetric M(y) and b = 0.
class QuadraticHamiltonian final : public Hamiltonian {
public:
    static std::shared_ptr<QuadraticHamiltonian> separable(int n, double c, std::vector<TrigSeries> b,
                                                          TrigSeries V);
    static std::shared_ptr<QuadraticHamiltonian> anisotropic(int n, std::vector<std::vector<TrigSeries>> M,
                                                            TrigSeries V);

    int dim() const override { return n_; }
    std::string family() const override { return family_; }
    double value(const Vec& p, const Vec& y) const override;
    Vec gradient(const Vec& p, const Vec& y) const override;
    Mat hessian(const Vec& p, const Vec& y) const override;
    double directional(int k, const Vec& p, const Vec& y, std::span<const Vec> dirs) const override;
    int polynomial_degree() const override { return 2; }
    std::optional<QuadraticForm> quadratic_at(const Vec& y) const override { return form(y); }

    QuadraticForm form(const Vec& y) const;

    double c() const noexcept { return c_; }
    const std::vector<TrigSeries>& drift() const noexcept { return b_; }
    const std::vector<std::vector<TrigSeries>>& matrix() const noexcept { return M_; }
    const TrigSeries& potential() const noexcept { return V_; }

private:
    QuadraticHamiltonian() = default;

    int n_ = 1;
    std::string family_;
    double c_ = 1.0;
    std::vector<TrigSeries> b_;
    std::vector<std::vector<TrigSeries>> M_;
    TrigSeries V_;
};

/// User-supplied H(p,y) without analytic p-derivatives. Derivatives come from
/// nested central differences with step 1e-3 (1 + |p|) per order, so accuracy
/// degrades quickly beyond second order.
class CustomHamiltonian final : public Hamiltonian {
public:
    using Fn = std::function<double(const Vec& p, const Vec& y)>;

    CustomHamiltonian(int n, std::string name, Fn fn);

    int dim() const override { return n_; }
    std::string family() const override { return "custom:" + name_; }
    double value(const Vec& p, const Vec& y) const override { return fn_(p, y); }
    Vec gradient(const Vec& p, const Vec& y) const override;
    Mat hessian(const Vec& p, const Vec& y) const override;
    double directional(int k, const Vec& p, const Vec& y, std::span<const Vec> dirs) const override;
    int polynomial_degree() const override { return -1; }
    std::optional<QuadraticForm> quadratic_at(const Vec&) const override { return std::nullopt; }

    static double step(const Vec& p) { return 1e-3 * (1.0 + p.norm()); }

private:
    int n_;
    std::string name_;
    Fn fn_;
};

/// One-dimensional convex ramp g(x) = (p+ + p-)/2 x + (p+ - p-)/2 sigma logcosh(x/sigma).
struct RampAxis {
    double p_minus = 0.0;
    double p_plus = 0.0;
    double sigma = 1.0;

    double value(double x) const;
    /// k-th derivative, k >= 1.
    double derivative(int k, double x) const;
    /// Intercept of the affine asymptote on the side s = +1 or -1.
    double asymptote_intercept() const;
};

/// Initial data g with g(0) = 0. Builtin families are sums of one-dimensional
/// terms per coordinate, which makes every derivative tensor diagonal.
class InitialData {
public:
    enum class Family { affine, logcosh_ramp, custom };

    static InitialData affine(Vec slope);
    static InitialData logcosh_ramp(std::vector<RampAxis> axes);
    static InitialData custom(int n, std::function<double(const Vec&)> g,
                              std::function<Vec(const Vec&)> dg, std::function<Mat(const Vec&)> d2g);

    Family family() const noexcept { return family_; }
    std::string family_name() const;
    int dim() const noexcept { return n_; }
    bool separable() const noexcept { return family_ != Family::custom; }

    double value(const Vec& x) const;
    Vec gradient(const Vec& x) const;
    Mat hessian(const Vec& x) const;
    /// k-th derivative of the axis-i term (separable families only).
    double axis_derivative(int axis, int k, double xi) const;
    double axis_value(int axis, double xi) const;
    /// Norm of the k-th derivative tensor at x.
    double derivative_norm(int k, const Vec& x) const;

    const std::vector<RampAxis>& axes() const noexcept { return axes_; }
    const Vec& slope() const noexcept { return slope_; }
    /// Largest smoothing width (0 for affine data).
    double sigma_max() const;
    /// Gradient range per axis: [min, max] of Dg over R^n (separable families).
    std::pair<Vec, Vec> gradient_range() const;

private:
    Family family_ = Family::affine;
    int n_ = 1;
    Vec slope_;
    std::vector<RampAxis> axes_;
    std::function<double(const Vec&)> g_;
    std::function<Vec(const Vec&)> dg_;
    std::function<Mat(const Vec&)> d2g_;
};

/// A complete problem instance.
struct ProblemSpec {
    int dim = 1;
    Diffusion A = Diffusion::identity(1);
    std::shared_ptr<const Hamiltonian> H;
    ProblemBounds bounds;
    std::optional<InitialData> g;
    int k_max = 6;

    /// Throws InvalidInput for inconsistent dimensions or bounds.
    void check() const;
};

/// Default derivative depth for a requested corrector order m.
constexpr int default_k_max(int m) { return 2 * m + 4; }

struct CheckResult {
    std::string name;
    std::size_t samples = 0;
    double worst_margin = 0.0;
    bool pass = true;
    std::string violation;  // describes the worst sample when pass is false
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    std::uint64_t seed = 0;

    bool passed() const;
    const CheckResult* find(const std::string& name) const;
};

/// Sampled check of the structure conditions on A and H: periodicity,
/// ellipticity, convexity and quadratic growth of H in p, and the Lipschitz
/// bounds on A and on D_p^k H. Failed conditions are reported, not thrown.
ValidationReport validate_problem(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed);

class EffectiveTable;

struct InitialDataCheckOptions {
    double zeta_min = 1e-2;
    double L = 1.0;
    int k_max = 6;
    std::uint64_t seed = 7;
};

/// Checks g against an effective-Hamiltonian table over a window: g(0) = 0,
/// convexity, derivative bounds, and min |D_p Hbar(Dg(x))| >= zeta_min.
/// Throws CoverageError when Dg leaves the tabulated p-range.
ValidationReport validate_initial_data(const InitialData& g, const EffectiveTable& table, const Vec& window_lo,
                                       const Vec& window_hi, std::size_t samples,
                                       const InitialDataCheckOptions& opts);

}  // namespace hjh
