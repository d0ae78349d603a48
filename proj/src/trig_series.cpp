#include "hjh/trig_series.hpp"

#include <cmath>
#include <numbers>

namespace hjh {

TrigSeries::TrigSeries(double constant, std::vector<Term> terms)
    : constant_(constant), terms_(std::move(terms)) {}

double TrigSeries::operator()(const Vec& y) const {
    double f = constant_;
    for (const auto& t : terms_) {
        double phase = 0.0;
        for (int i = 0; i < y.size(); ++i) phase += t.k[i] * y(i);
        phase *= 2.0 * std::numbers::pi;
        f += t.cos_coef * std::cos(phase) + t.sin_coef * std::sin(phase);
    }
    return f;
}

Vec TrigSeries::gradient(const Vec& y) const {
    Vec g = Vec::Zero(y.size());
    for (const auto& t : terms_) {
        double phase = 0.0;
        for (int i = 0; i < y.size(); ++i) phase += t.k[i] * y(i);
        phase *= 2.0 * std::numbers::pi;
        const double d = -t.cos_coef * std::sin(phase) + t.sin_coef * std::cos(phase);
        for (int i = 0; i < y.size(); ++i) g(i) += 2.0 * std::numbers::pi * t.k[i] * d;
    }
    return g;
}

double TrigSeries::sup_bound() const {
    double s = std::abs(constant_);
    for (const auto& t : terms_) s += std::hypot(t.cos_coef, t.sin_coef);
    return s;
}

double TrigSeries::lipschitz_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) {
        double knorm = 0.0;
        for (int ki : t.k) knorm += double(ki) * ki;
        s += 2.0 * std::numbers::pi * std::sqrt(knorm) * std::hypot(t.cos_coef, t.sin_coef);
    }
    return s;
}

}  // namespace hjh
