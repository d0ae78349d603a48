#pragma once

// Independent reference computations used only by the tests.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

/// Principal eigenvalue gamma of phi'' + V phi = gamma phi with
/// phi(y + 1) = exp(-p) phi(y), for V(y) = sum_k (a_k cos 2 pi k y + b_k sin 2 pi k y).
///
/// With phi = exp(-w - p y) this is the 1D cell problem
/// -w'' + (p + w')^2 + V = gamma. Writing phi = exp(-p y) psi with psi
/// periodic, psi is expanded in Fourier modes |k| <= K (Galerkin, dense).
inline double hopf_cole(double p, const std::vector<double>& a, const std::vector<double>& b, int K = 48) {
    using C = std::complex<double>;
    const int n = 2 * K + 1;
    const double tau = 2.0 * M_PI;
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const double k = i - K;
        // psi'' - 2 p psi' + p^2 psi on exp(2 pi i k y)
        M(i, i) = C(-tau * tau * k * k + p * p, -2.0 * p * tau * k);
        for (std::size_t j = 0; j < a.size(); ++j) {
            const int q = static_cast<int>(j) + 1;
            // cos = (e^{iq} + e^{-iq}) / 2, sin = (e^{iq} - e^{-iq}) / 2i
            const C up = 0.5 * a[j] + C(0.0, -0.5) * b[j];
            const C dn = 0.5 * a[j] + C(0.0, 0.5) * b[j];
            if (i + q < n) M(i + q, i) += up;
            if (i - q >= 0) M(i - q, i) += dn;
        }
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(M, false);
    double best = -HUGE_VAL;
    for (int i = 0; i < n; ++i) best = std::max(best, es.eigenvalues()(i).real());
    return best;
}

}  // namespace oracle
