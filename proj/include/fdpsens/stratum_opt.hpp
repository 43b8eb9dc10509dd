#ifndef FDPSENS_STRATUM_OPT_HPP
#define FDPSENS_STRATUM_OPT_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fdpsens {

// Exact optimization primitives over a single stratum's assignment polytope
// { rho >= 0, sum rho = 1, max rho <= gamma * min rho }.

// Euclidean projection onto the probability simplex.
void simplex_project(std::span<double> x);

// Minimize a smooth convex function over the probability simplex by projected
// gradient with Barzilai-Borwein steps and an Armijo safeguard. `x` holds the
// starting point and receives the solution.
double minimize_over_simplex(
    std::vector<double>& x,
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& value_and_grad,
    int max_iter = 400, double grad_tol = 1e-12);

// Exact minimum of c . rho over the stratum polytope (vertex search after
// sorting). rho_out, when non-null, receives the minimizing vertex.
double stratum_linear_min(std::span<const double> c, double gamma,
                          std::vector<double>* rho_out = nullptr);

// Range of q . rho over the polytope.
struct MeanRange {
    double lo = 0.0;
    double hi = 0.0;
};
MeanRange stratum_mean_range(std::span<const double> q, double gamma);

// Among vertices attaining the extreme of q . rho (maximum if `maximize`),
// return the one with the largest variance q-dot moments; used by the
// separable single-outcome construction.
std::vector<double> stratum_extreme_vertex_maxvar(std::span<const double> q, double gamma,
                                                  bool maximize);

// Minimize  lin . rho + sum_k beta_k (q_k . rho)^2  over the stratum polytope.
// q is n x J row-major (unit-major). The reported `gap` certifies
// value - gap <= true minimum (zero for pairs, a Frank-Wolfe bound otherwise).
struct QuadMinResult {
    double value = 0.0;
    double gap = 0.0;
};
QuadMinResult stratum_quad_min(std::size_t n, std::size_t J, const double* q,
                               std::span<const double> beta, std::span<const double> lin,
                               double gamma, std::vector<double>& rho_out);

}  // namespace fdpsens

#endif
