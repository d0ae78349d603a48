#include <cmath>

#include "check_util.hpp"
#include "hjh/cell.hpp"

namespace hjh {

using detail::describe;
using detail::MarginTracker;

ValidationReport check_table(const EffectiveTable& table, const ProblemBounds& bounds, const TableCheckOptions& opts) {
    const TableData& d = table.data();
    const int n = d.dim;
    const int c0 = d.counts[0];
    const int c1 = n == 1 ? 1 : d.counts[1];
    auto idx = [&](int i0, int i1) { return i0 + c0 * i1; };
    ValidationReport rep;

    MarginTracker growth("cell-bounds");
    for (int k = 0; k < table.nodes(); ++k) {
        const Vec p = table.node_p(k);
        const double q = p.squaredNorm(), h = d.hbar[k];
        const double lower = h - (bounds.alpha * q - bounds.alpha_prime);
        const double upper = bounds.beta * q + bounds.beta_prime - h;
        growth.add(std::min(lower, upper), [&] { return describe("p", p); });
    }
    rep.checks.push_back(growth.finish());

    MarginTracker convex("midpoint-convexity");
    for (int a1 = 0; a1 < c1; ++a1)
        for (int a0 = 0; a0 < c0; ++a0)
            for (int b1 = a1; b1 < c1; b1 += 2)
                for (int b0 = (b1 == a1 ? a0 + 2 : a0 % 2); b0 < c0; b0 += 2) {
                    const double mid = d.hbar[idx((a0 + b0) / 2, (a1 + b1) / 2)];
                    const double avg = 0.5 * (d.hbar[idx(a0, a1)] + d.hbar[idx(b0, b1)]);
                    convex.add(avg + opts.tol_convex - mid, [&] {
                        return describe("p", table.node_p(idx(a0, a1))) + " " + describe("q", table.node_p(idx(b0, b1)));
                    });
                }
    rep.checks.push_back(convex.finish());

    // Fourth-order central differences need two neighbours on each side.
    MarginTracker fd("bbar-fd");
    for (int i1 = 0; i1 < c1; ++i1)
        for (int i0 = 0; i0 < c0; ++i0) {
            const Vec p = table.node_p(idx(i0, i1));
            for (int a = 0; a < n; ++a) {
                const int i = a == 0 ? i0 : i1, c = a == 0 ? c0 : c1;
                if (i < 2 || i + 2 >= c) continue;
                auto at = [&](int s) { return d.hbar[a == 0 ? idx(i0 + s, i1) : idx(i0, i1 + s)]; };
                const double diff = (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * d.dp);
                const double err = std::abs(d.bbar[idx(i0, i1)](a) - diff);
                fd.add(opts.tol_fd * (1.0 + p.norm()) - err, [&] { return describe("p", p); });
            }
        }
    rep.checks.push_back(fd.finish());

    MarginTracker resid("cell-residual");
    MarginTracker norm("normalization");
    for (int k = 0; k < table.nodes(); ++k) {
        resid.add(opts.tol_cell - d.diag[k].residual, [&] { return describe("p", table.node_p(k)); });
        double z = std::abs(d.w[k](0));
        for (int a = 0; a < n; ++a) z = std::max(z, std::abs(d.v[k][a](0)));
        norm.add(-z, [&] { return describe("p", table.node_p(k)); });
    }
    rep.checks.push_back(resid.finish());
    rep.checks.push_back(norm.finish());
    return rep;
}

}  // namespace hjh
