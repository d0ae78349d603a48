#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "hjh/problem.hpp"

namespace hjh::detail {

inline std::string describe(const char* label, const Vec& v) {
    std::ostringstream os;
    os.precision(10);
    os << label << "=(";
    for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v(i);
    os << ")";
    return os.str();
}

// Accumulates the worst (smallest) margin; a check fails when margin < 0.
class MarginTracker {
public:
    explicit MarginTracker(std::string name) { r_.name = std::move(name); r_.worst_margin = HUGE_VAL; }

    void add(double margin, const std::function<std::string()>& where) {
        ++r_.samples;
        if (margin < r_.worst_margin || std::isnan(margin)) {
            r_.worst_margin = margin;
            worst_where_ = where();
        }
    }

    CheckResult finish() {
        if (r_.samples == 0) r_.worst_margin = 0.0;
        r_.pass = !(r_.worst_margin < 0.0) && !std::isnan(r_.worst_margin);
        if (!r_.pass) r_.violation = worst_where_;
        return r_;
    }

private:
    CheckResult r_;
    std::string worst_where_;
};

}  // namespace hjh::detail
