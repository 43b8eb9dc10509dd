#include "fdpsens/single_pvalue.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "fdpsens/minimax.hpp"
#include "fdpsens/stats.hpp"
#include "fdpsens/stratum_opt.hpp"

namespace fdpsens {

namespace {

struct SingleProblem {
    std::vector<detail::PackedStratum> strata;  // one column each
    double t = 0.0;
    bool any_nonconstant = false;
};

SingleProblem pack_single(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                          bool negate) {
    SingleProblem p;
    p.strata.resize(design.n_strata());
    const double sign = negate ? -1.0 : 1.0;
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const std::size_t n = design.stratum_size(i);
        const std::size_t off = design.offset(i);
        p.strata[i].n = n;
        p.strata[i].q.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            p.strata[i].q[j] = sign * scores.at(off + j, k);
        }
        for (std::size_t j = 1; j < n; ++j) {
            if (p.strata[i].q[j] != p.strata[i].q[0]) {
                p.any_nonconstant = true;
                break;
            }
        }
    }
    p.t = sign * sum_statistic(design, scores, k);
    return p;
}

MeanRange mu_range_of(const SingleProblem& p, double gamma) {
    MeanRange total;
    for (const auto& st : p.strata) {
        const MeanRange r =
            stratum_mean_range(std::span<const double>(st.q.data(), st.n), gamma);
        total.lo += r.lo;
        total.hi += r.hi;
    }
    return total;
}

struct MuSigma {
    double mu = 0.0;
    double sig2 = 0.0;
};

MuSigma moments_of(const SingleProblem& p, const std::vector<std::vector<double>>& rho) {
    MuSigma m;
    for (std::size_t i = 0; i < p.strata.size(); ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < p.strata[i].n; ++j) {
            const double q = p.strata[i].q[j];
            m1 += rho[i][j] * q;
            m2 += rho[i][j] * q * q;
        }
        m.mu += m1;
        m.sig2 += std::max(0.0, m2 - m1 * m1);
    }
    return m;
}

// Minimum squared deviate min over rho of (t - mu)^2 / sigma2, assuming t lies
// strictly above the attainable mean range of the packed (possibly negated)
// problem. Dinkelbach: each step minimizes (t - mu)^2 - s * sigma2 exactly.
double min_squared_deviate(const SingleProblem& p, double gamma) {
    // Start from the mean-extreme, variance-maximal vertex.
    std::vector<std::vector<double>> rho(p.strata.size());
    for (std::size_t i = 0; i < p.strata.size(); ++i) {
        rho[i] = stratum_extreme_vertex_maxvar(
            std::span<const double>(p.strata[i].q.data(), p.strata[i].n), gamma, true);
    }
    MuSigma m = moments_of(p, rho);
    double d = p.t - m.mu;
    if (m.sig2 <= 0.0) {
        throw DegenerateScoresError("worst_case_single_pvalue: zero variance at the extreme "
                                    "assignment (degenerate scores)");
    }
    double s = d * d / m.sig2;

    MinimaxOptions options;
    options.decide_only = false;
    for (int it = 0; it < 80; ++it) {
        detail::MinimaxCore core(p.strata, {p.t}, s, gamma);
        MinimaxResult r = core.solve(options, nullptr);
        m = moments_of(p, r.argmin_rho.rho);
        d = p.t - m.mu;
        if (m.sig2 <= 0.0) break;  // cannot happen for Gamma finite with nonconstant strata
        const double s_new = d * d / m.sig2;
        if (s - s_new <= 1e-13 * std::max(1.0, s)) {
            s = std::min(s, s_new);
            break;
        }
        s = s_new;
    }
    return s;
}

}  // namespace

MeanRange single_mu_range(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
                          GammaBound gamma) {
    return mu_range_of(pack_single(design, scores, k, false), gamma.value);
}

double worst_case_single_pvalue(const MatchedDesign& design, const ScoreMatrix& scores,
                                std::size_t k, GammaBound gamma) {
    SingleProblem p = pack_single(design, scores, k, false);
    if (!p.any_nonconstant) {
        throw DegenerateScoresError(
            "worst_case_single_pvalue: all strata have constant scores for this outcome");
    }
    const MeanRange range = mu_range_of(p, gamma.value);
    if (p.t >= range.lo && p.t <= range.hi) return 1.0;
    if (p.t < range.lo) p = pack_single(design, scores, k, true);
    const double s = min_squared_deviate(p, gamma.value);
    return chi2_sf1(s);
}

double worst_case_single_pvalue_separable(const MatchedDesign& design, const ScoreMatrix& scores,
                                           std::size_t k, GammaBound gamma) {
    SingleProblem p = pack_single(design, scores, k, false);
    if (!p.any_nonconstant) {
        throw DegenerateScoresError(
            "worst_case_single_pvalue_separable: all strata have constant scores");
    }
    const MeanRange range = mu_range_of(p, gamma.value);
    if (p.t >= range.lo && p.t <= range.hi) return 1.0;
    if (p.t < range.lo) p = pack_single(design, scores, k, true);

    std::vector<std::vector<double>> rho(p.strata.size());
    for (std::size_t i = 0; i < p.strata.size(); ++i) {
        rho[i] = stratum_extreme_vertex_maxvar(
            std::span<const double>(p.strata[i].q.data(), p.strata[i].n), gamma.value, true);
    }
    const MuSigma m = moments_of(p, rho);
    const double d = p.t - m.mu;
    if (m.sig2 <= 0.0) {
        throw DegenerateScoresError("worst_case_single_pvalue_separable: zero variance at the "
                                    "extreme assignment");
    }
    return chi2_sf1(d * d / m.sig2);
}

SensitivityValue single_sensitivity_value(const MatchedDesign& design, const ScoreMatrix& scores,
                                          std::size_t k, double alpha, double gamma_hi,
                                          double tol) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("single_sensitivity_value: alpha must lie in (0,1)");
    }
    if (!(gamma_hi >= 1.0)) {
        throw std::invalid_argument("single_sensitivity_value: gamma_hi must be >= 1");
    }
    auto exceeds = [&](double g) {
        return worst_case_single_pvalue(design, scores, k, GammaBound(g)) > alpha;
    };
    if (exceeds(1.0)) return SensitivityValue{1.0, false};
    if (!exceeds(gamma_hi)) return SensitivityValue{gamma_hi, true};
    double lo = 1.0, hi = gamma_hi;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (exceeds(mid) ? hi : lo) = mid;
    }
    return SensitivityValue{0.5 * (lo + hi), false};
}

}  // namespace fdpsens
