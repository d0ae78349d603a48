#pragma once

#include <vector>

#include "hjh/linalg.hpp"

namespace hjh {

/// Finite trigonometric series on the unit torus:
///   f(y) = c0 + sum_j [a_j cos(2 pi k_j . y) + b_j sin(2 pi k_j . y)]
/// with integer wave vectors k_j. Periodic under every lattice shift.
class TrigSeries {
public:
    struct Term {
        std::vector<int> k;
        double cos_coef = 0.0;
        double sin_coef = 0.0;
    };

    TrigSeries() = default;
    explicit TrigSeries(double constant) : constant_(constant) {}
    TrigSeries(double constant, std::vector<Term> terms);

    double operator()(const Vec& y) const;
    Vec gradient(const Vec& y) const;

    double constant() const noexcept { return constant_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }
    bool is_constant() const noexcept { return terms_.empty(); }

    /// Upper bounds from the coefficients: sup|f| and sup|grad f|.
    double sup_bound() const;
    double lipschitz_bound() const;

private:
    double constant_ = 0.0;
    std::vector<Term> terms_;
};

}  // namespace hjh
