#ifndef FDPSENS_GAMMA_MODEL_HPP
#define FDPSENS_GAMMA_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "fdpsens/design.hpp"

namespace fdpsens {

// Bound on the within-stratum treatment-assignment odds ratio.
struct GammaBound {
    double value = 1.0;
    explicit GammaBound(double g) : value(g) {
        if (!(g >= 1.0) || !std::isfinite(g)) {
            throw std::invalid_argument("GammaBound: gamma must be finite and >= 1");
        }
    }
};

// Per-stratum treatment probabilities, aligned with a MatchedDesign.
struct AssignmentProbabilities {
    std::vector<std::vector<double>> rho;  // rho[i][j], one vector per stratum

    static AssignmentProbabilities zeros_like(const MatchedDesign& design);
};

struct MomentPair {
    double mu = 0.0;
    double sigma2 = 0.0;
};

AssignmentProbabilities uniform_assignment(const MatchedDesign& design);

// rho_ij proportional to gamma^{u_ij}.
std::vector<double> vertex_assignment(std::size_t n, GammaBound gamma,
                                      const std::vector<int>& u);

bool membership_check(const MatchedDesign& design, const AssignmentProbabilities& rho,
                      GammaBound gamma, double tol = 1e-9);

MomentPair moments(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                   const AssignmentProbabilities& rho);

enum class TailSide { upper, two_sided };

// Exact randomization tail by enumerating all assignments. Guarded by
// |Omega| <= 10^6; larger designs are directed to the normal approximation.
double exact_tail_probability(const MatchedDesign& design, const ScoreMatrix& scores,
                              std::size_t k, const AssignmentProbabilities& rho, double a,
                              TailSide side);

// Two-sided p-value for outcome k at a fully specified rho, using the
// chi-squared(1) deviate convention.
double p_value_at_rho(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                      const AssignmentProbabilities& rho);

}  // namespace fdpsens

#endif
