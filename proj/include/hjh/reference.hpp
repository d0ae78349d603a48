#pragma once

#include <string>
#include <vector>

#include "hjh/correctors.hpp"
#include "hjh/problem.hpp"

namespace hjh {

enum class Scheme { imex, explicit_rk2, lax_friedrichs };

Scheme scheme_from_string(const std::string& s);
std::string to_string(Scheme s);

/// Uniform grid for the one-dimensional eps-problem. The ends are integer
/// multiples of eps, so x_i / eps falls on the nodes of an N_per-point
/// torus grid.
struct FineGrid1D {
    double x_lo = 0.0;
    double x_hi = 0.0;
    double eps = 0.5;
    int N_per = 128;
    Scheme scheme = Scheme::imex;
    double c_a = 0.4;
    double c_d = 0.4;

    double dx() const { return eps / N_per; }
    int points() const;
    double x(int i) const { return x_lo + i * dx(); }
};

/// Smallest eps-aligned grid containing [lo, hi].
FineGrid1D make_fine_grid(double lo, double hi, double eps, int N_per, Scheme scheme = Scheme::imex);

/// Distance the window must keep from the domain ends:
/// T max|Bbar| + 6 sqrt(eps Lambda T) + 5 sigma.
double boundary_margin(double T, double max_speed, double eps, double Lambda, double sigma);

struct ReferenceSolution {
    FineGrid1D grid;
    std::vector<double> times;
    std::vector<std::vector<double>> u;  // one snapshot per time, times[0] = 0
    long steps = 0;
    double dt = 0.0;
    double max_cfl = 0.0;       // max|D_pH| dt / dx over the run
    double peclet = 0.0;        // max|D_pH| dx / (eps lambda)

    std::vector<double> x() const;
};

/// Marches u_t = eps tr(A(x/eps) D^2 u) - H(Du, x/eps) with centered
/// differences. Boundary values are the exact discrete far-field solution
/// p x + c - t Hbar_h(p) + eps w_h(p, x/eps) for the asymptotic slopes of g.
/// `initial` overrides g on the grid when non-empty.
ReferenceSolution solve_reference(const ProblemSpec& spec, const InitialData& g, const FineGrid1D& grid,
                                  const std::vector<double>& output_times, const std::vector<double>& initial = {});

/// eta_m^eps(., 0) on the fine grid.
std::vector<double> prepared_profile(const CorrectorHierarchy& h, const FineGrid1D& grid, int order);

struct CompareResult {
    double eps = 0.0;
    int order = 0;
    double sup_error = 0.0;
    std::vector<double> x;                  // window nodes
    std::vector<std::vector<double>> error; // per output time (t > 0)
};

/// sup over window nodes and output times t > 0 of |u^eps - eta_m^eps|.
/// Throws CoverageError when the window is closer to the domain ends than
/// boundary_margin.
CompareResult compare(const ReferenceSolution& ref, const CorrectorHierarchy& h, const Box& window, int order);

}  // namespace hjh
