#ifndef FDPSENS_SINGLE_PVALUE_HPP
#define FDPSENS_SINGLE_PVALUE_HPP

#include "fdpsens/design.hpp"
#include "fdpsens/gamma_model.hpp"
#include "fdpsens/stratum_opt.hpp"

namespace fdpsens {

struct DegenerateScoresError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Worst-case two-sided p-value sup over rho in P_Gamma, chi-squared(1) deviate
// convention. Returns 1 when the observed statistic lies inside the attainable
// mean range; otherwise minimizes the squared deviate exactly (Dinkelbach
// iteration on the ratio, each step a certified convex subproblem).
double worst_case_single_pvalue(const MatchedDesign& design, const ScoreMatrix& scores,
                                std::size_t k, GammaBound gamma);

// Classical per-stratum construction: extreme expectation vertex, variance
// maximized among the expectation-optimal vertices. Asymptotically equivalent
// to the exact route; kept as an independent cross-check.
double worst_case_single_pvalue_separable(const MatchedDesign& design, const ScoreMatrix& scores,
                                           std::size_t k, GammaBound gamma);

// Attainable range of mu_k over P_Gamma.
MeanRange single_mu_range(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                          GammaBound gamma);

struct SensitivityValue {
    double gamma = 1.0;
    bool saturated = false;
};

// Smallest Gamma at which the worst-case p-value exceeds alpha, by bisection
// to absolute tolerance tol on Gamma. Saturates at gamma_hi.
SensitivityValue single_sensitivity_value(const MatchedDesign& design, const ScoreMatrix& scores,
                                          std::size_t k, double alpha, double gamma_hi = 10.0,
                                          double tol = 1e-3);

}  // namespace fdpsens

#endif
