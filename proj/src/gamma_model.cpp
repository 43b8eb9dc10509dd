#include "fdpsens/gamma_model.hpp"

#include <cmath>
#include <functional>

#include "fdpsens/stats.hpp"

namespace fdpsens {

AssignmentProbabilities AssignmentProbabilities::zeros_like(const MatchedDesign& design) {
    AssignmentProbabilities p;
    p.rho.resize(design.n_strata());
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        p.rho[i].assign(design.stratum_size(i), 0.0);
    }
    return p;
}

AssignmentProbabilities uniform_assignment(const MatchedDesign& design) {
    AssignmentProbabilities p = AssignmentProbabilities::zeros_like(design);
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const double v = 1.0 / static_cast<double>(design.stratum_size(i));
        std::fill(p.rho[i].begin(), p.rho[i].end(), v);
    }
    return p;
}

std::vector<double> vertex_assignment(std::size_t n, GammaBound gamma,
                                      const std::vector<int>& u) {
    if (u.size() != n) throw std::invalid_argument("vertex_assignment: u length mismatch");
    std::vector<double> rho(n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        rho[j] = u[j] ? gamma.value : 1.0;
        total += rho[j];
    }
    for (auto& v : rho) v /= total;
    return rho;
}

bool membership_check(const MatchedDesign& design, const AssignmentProbabilities& rho,
                      GammaBound gamma, double tol) {
    if (rho.rho.size() != design.n_strata()) {
        throw std::invalid_argument("membership_check: stratum count mismatch");
    }
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const auto& r = rho.rho[i];
        if (r.size() != design.stratum_size(i)) {
            throw std::invalid_argument("membership_check: stratum " + std::to_string(i) +
                                        " size mismatch");
        }
        double sum = 0.0;
        double lo = r[0], hi = r[0];
        for (double v : r) {
            if (v < -tol) return false;
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (std::abs(sum - 1.0) > tol) return false;
        if (hi > gamma.value * lo + tol) return false;
    }
    return true;
}

MomentPair moments(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                   const AssignmentProbabilities& rho) {
    if (k >= scores.n_outcomes) throw std::out_of_range("moments: outcome index out of range");
    if (rho.rho.size() != design.n_strata()) {
        throw std::invalid_argument("moments: stratum count mismatch");
    }
    MomentPair m;
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const auto& r = rho.rho[i];
        if (r.size() != design.stratum_size(i)) {
            throw std::invalid_argument("moments: stratum " + std::to_string(i) +
                                        " size mismatch");
        }
        const std::size_t off = design.offset(i);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double q = scores.at(off + j, k);
            m1 += r[j] * q;
            m2 += r[j] * q * q;
        }
        m.mu += m1;
        m.sigma2 += std::max(0.0, m2 - m1 * m1);
    }
    return m;
}

double exact_tail_probability(const MatchedDesign& design, const ScoreMatrix& scores,
                              std::size_t k, const AssignmentProbabilities& rho, double a,
                              TailSide side) {
    constexpr unsigned long long kMaxAssignments = 1000000ULL;
    if (design.assignment_count() > kMaxAssignments) {
        throw std::runtime_error(
            "exact_tail_probability: assignment space exceeds 10^6; use the normal "
            "approximation instead");
    }
    if (k >= scores.n_outcomes) {
        throw std::out_of_range("exact_tail_probability: outcome index out of range");
    }

    double threshold = a;
    double mu = 0.0;
    if (side == TailSide::two_sided) {
        mu = moments(design, scores, k, rho).mu;
        threshold = std::abs(a - mu);
    }

    double prob = 0.0;
    const std::size_t B = design.n_strata();
    std::function<void(std::size_t, double, double)> recurse = [&](std::size_t i, double weight,
                                                                   double stat) {
        if (i == B) {
            const bool in_tail = side == TailSide::upper ? stat >= a
                                                         : std::abs(stat - mu) >= threshold;
            if (in_tail) prob += weight;
            return;
        }
        const std::size_t off = design.offset(i);
        for (std::size_t j = 0; j < design.stratum_size(i); ++j) {
            recurse(i + 1, weight * rho.rho[i][j], stat + scores.at(off + j, k));
        }
    };
    recurse(0, 1.0, 0.0);
    return prob;
}

double p_value_at_rho(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                      const AssignmentProbabilities& rho) {
    const double t = sum_statistic(design, scores, k);
    const MomentPair m = moments(design, scores, k, rho);
    const double d = t - m.mu;
    if (m.sigma2 <= 0.0) {
        return d == 0.0 ? 1.0 : 0.0;
    }
    return chi2_sf1(d * d / m.sigma2);
}

}  // namespace fdpsens
