#include "fdpsens/closed_fdp.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

namespace fdpsens {

namespace {

void validate_subset(const std::vector<std::size_t>& subset, std::size_t K) {
    if (subset.empty()) throw std::invalid_argument("subset must be nonempty");
    std::vector<bool> seen(K, false);
    for (auto k : subset) {
        if (k >= K) throw std::out_of_range("subset index out of range");
        if (seen[k]) throw std::invalid_argument("subset contains duplicate indices");
        seen[k] = true;
    }
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

std::vector<bool> holm_rejections(const std::vector<double>& p_values, double alpha) {
    const std::size_t K = p_values.size();
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::vector<bool> reject(K, false);
    for (std::size_t i = 0; i < K; ++i) {
        if (p_values[order[i]] <= alpha / static_cast<double>(K - i)) {
            reject[order[i]] = true;
        } else {
            break;
        }
    }
    return reject;
}

int v_known_rho(const MatchedDesign& design, const ScoreMatrix& scores,
                const std::vector<std::size_t>& subset, const AssignmentProbabilities& rho,
                double alpha) {
    validate_subset(subset, scores.n_outcomes);
    std::vector<double> p(scores.n_outcomes);
    for (std::size_t k = 0; k < scores.n_outcomes; ++k) {
        p[k] = p_value_at_rho(design, scores, k, rho);
    }
    const auto reject = holm_rejections(p, alpha);
    int v = 0;
    for (auto k : subset) {
        if (!reject[k]) ++v;
    }
    return v;
}

ScreeningVerdict screen(const MatchedDesign& design, const ScoreMatrix& scores,
                        const ClosedTestConfig& config) {
    ClosedSensitivityEngine engine(design, scores, config);
    return engine.screening();
}

CandidatePool candidate_pool(const ScreeningVerdict& verdict,
                             const std::vector<std::size_t>& subset,
                             const ClosedTestConfig& config) {
    const std::size_t K = verdict.worst_case_p.size();
    validate_subset(subset, K);
    CandidatePool out;
    const double thresh = config.alpha / static_cast<double>(K);
    std::vector<bool> in_subset(K, false);
    for (auto k : subset) in_subset[k] = true;
    for (std::size_t k = 0; k < K; ++k) {
        if (verdict.worst_case_p[k] > thresh) {
            out.pool.push_back(k);
            if (in_subset[k]) ++out.r_max;
        }
    }
    return out;
}

ClosedSensitivityEngine::ClosedSensitivityEngine(const MatchedDesign& design,
                                                 const ScoreMatrix& scores,
                                                 const ClosedTestConfig& config)
    : design_(&design), scores_(&scores), config_(config),
      worst_p_(scores.n_outcomes) {
    if (scores.n_outcomes > 57) {
        throw std::invalid_argument("ClosedSensitivityEngine: more than 57 outcomes unsupported");
    }
}

double ClosedSensitivityEngine::worst_p(std::size_t k) {
    if (!worst_p_[k]) {
        worst_p_[k] = worst_case_single_pvalue(*design_, *scores_, k, GammaBound(config_.gamma));
    }
    return *worst_p_[k];
}

ScreeningVerdict ClosedSensitivityEngine::screening() {
    const std::size_t K = scores_->n_outcomes;
    ScreeningVerdict v;
    v.decision.resize(K);
    v.worst_case_p.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double p = worst_p(k);
        v.worst_case_p[k] = p;
        if (p <= config_.alpha / static_cast<double>(K)) {
            v.decision[k] = ScreenDecision::Reject;
        } else if (p > config_.alpha) {
            v.decision[k] = ScreenDecision::FailToReject;
        } else {
            v.decision[k] = ScreenDecision::Undecided;
        }
    }
    return v;
}

bool ClosedSensitivityEngine::local_test_fails(std::uint64_t mask, std::size_t v) {
    LocalRange& range = local_memo_[mask];
    const int vi = static_cast<int>(v);
    // phi*_J is monotone in the superset cardinality: the local level alpha/v
    // tightens as v grows, so a failure at v persists for larger v and a
    // rejection persists for smaller v. Only the crossover needs solving.
    if (vi >= range.min_v_failing) return true;
    if (vi <= range.max_v_rejected) return false;

    std::vector<std::size_t> J;
    for (std::size_t k = 0; k < scores_->n_outcomes; ++k) {
        if (mask & (1ull << k)) J.push_back(k);
    }
    ZetaProblem problem(*design_, *scores_, J, config_.alpha / static_cast<double>(v),
                        config_.gamma);
    MinimaxOptions options;
    options.decide_only = true;
    const MinimaxResult res = minimax_zeta(problem, options);
    ++diag_.ip_invocations;
    const bool fails = res.certificate == Certificate::feasible;
    if (fails) {
        range.min_v_failing = std::min(range.min_v_failing, vi);
    } else {
        range.max_v_rejected = std::max(range.max_v_rejected, vi);
    }
    return fails;
}

bool ClosedSensitivityEngine::stage_feasible(const std::vector<std::size_t>& ordered_pool,
                                             const std::vector<bool>& in_subset, int r, int v) {
    const int P = static_cast<int>(ordered_pool.size());
    std::vector<int> rem_total(P + 1, 0), rem_r(P + 1, 0);
    for (int pos = P - 1; pos >= 0; --pos) {
        rem_total[pos] = rem_total[pos + 1] + 1;
        rem_r[pos] = rem_r[pos + 1] + (in_subset[pos] ? 1 : 0);
    }
    std::function<bool(int, std::uint64_t, int, int)> dfs = [&](int pos, std::uint64_t mask,
                                                                int n_in, int n_in_r) -> bool {
        ++diag_.nodes_explored;
        if (n_in + rem_total[pos] < v) return false;
        if (n_in_r + rem_r[pos] < r) return false;
        if (n_in == v) {
            return n_in_r >= r && local_test_fails(mask, static_cast<std::size_t>(v));
        }
        // Interior bounds prune whole subtrees; on a single-completion chain
        // the bound costs as much as the leaf itself, so skip it there.
        const bool worth_bounding = rem_total[pos] > v - n_in;
        if (n_in > 0 && worth_bounding && !local_test_fails(mask, static_cast<std::size_t>(v))) {
            return false;
        }
        if (pos >= P) return false;
        const std::uint64_t bit = 1ull << ordered_pool[pos];
        if (dfs(pos + 1, mask | bit, n_in + 1, n_in_r + (in_subset[pos] ? 1 : 0))) return true;
        return dfs(pos + 1, mask, n_in, n_in_r);
    };
    return dfs(0, 0ull, 0, 0);
}

int ClosedSensitivityEngine::v_star_search(const std::vector<std::size_t>& subset,
                                           int stop_at_r) {
    const std::size_t K = scores_->n_outcomes;
    validate_subset(subset, K);
    std::vector<bool> member(K, false);
    for (auto k : subset) member[k] = true;

    // Candidate pool: outcomes whose worst-case p-value exceeds alpha/K. Any
    // intersection containing an excluded outcome is rejected at every rho.
    std::vector<std::size_t> pool;
    const double thresh = config_.alpha / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
        if (worst_p(k) > thresh) pool.push_back(k);
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) { return worst_p(a) < worst_p(b); });
    std::vector<bool> in_subset(pool.size(), false);
    int r_max = 0;
    for (std::size_t p = 0; p < pool.size(); ++p) {
        in_subset[p] = member[pool[p]];
        if (in_subset[p]) ++r_max;
    }
    const int pool_minus_r = static_cast<int>(pool.size()) - r_max;
    const int r_start = std::min<int>(r_max, static_cast<int>(subset.size()));
    for (int r = r_start; r >= std::max(1, stop_at_r); --r) {
        const int v_hi = std::min<int>(r + pool_minus_r, static_cast<int>(pool.size()));
        for (int v = r; v <= v_hi; ++v) {
            if (stage_feasible(pool, in_subset, r, v)) return r;
        }
    }
    return 0;
}

int ClosedSensitivityEngine::enumerative_v(const std::vector<std::size_t>& subset,
                                           bool pool_restricted, bool early_exit) {
    const std::size_t K = scores_->n_outcomes;
    validate_subset(subset, K);
    std::vector<std::size_t> indices;
    if (pool_restricted) {
        const double thresh = config_.alpha / static_cast<double>(K);
        for (std::size_t k = 0; k < K; ++k) {
            if (worst_p(k) > thresh) indices.push_back(k);
        }
    } else {
        if (K > 12) {
            throw std::invalid_argument(
                "enumerative_v: unrestricted enumeration requires K <= 12");
        }
        indices.resize(K);
        std::iota(indices.begin(), indices.end(), 0);
    }
    if (indices.size() > 25) {
        throw std::invalid_argument("enumerative_v: candidate set too large to enumerate");
    }
    std::uint64_t subset_mask = 0;
    for (auto k : subset) subset_mask |= 1ull << k;

    const int cap = static_cast<int>(subset.size());
    int best = 0;
    const std::uint64_t m = indices.size();
    for (std::uint64_t sub = 1; sub < (1ull << m); ++sub) {
        std::uint64_t mask = 0;
        for (std::uint64_t b = 0; b < m; ++b) {
            if (sub & (1ull << b)) mask |= 1ull << indices[b];
        }
        const int v = std::popcount(mask);
        const int overlap = std::popcount(mask & subset_mask);
        if (early_exit && overlap <= best) continue;
        if (local_test_fails(mask, static_cast<std::size_t>(v))) {
            best = std::max(best, overlap);
            if (early_exit && best >= cap) break;
        }
    }
    return best;
}

bool ClosedSensitivityEngine::singleton_unrejected_bb(std::size_t k) {
    const std::size_t K = scores_->n_outcomes;
    const double thresh = config_.alpha / static_cast<double>(K);
    if (!(worst_p(k) > thresh)) return false;
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < K; ++j) {
        if (j != k && worst_p(j) > thresh) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return worst_p(a) < worst_p(b); });
    const std::uint64_t base = 1ull << k;
    if (local_test_fails(base, 1)) return true;
    const int m = static_cast<int>(others.size());
    // With a thin pool an interior bound can never beat plain enumeration.
    const bool use_bounds = m >= 4;
    for (int v = 2; v <= m + 1; ++v) {
        std::function<bool(int, std::uint64_t, int)> dfs = [&](int pos, std::uint64_t mask,
                                                               int count) -> bool {
            ++diag_.nodes_explored;
            if (count == v) return local_test_fails(mask, static_cast<std::size_t>(v));
            if (count + (m - pos) < v) return false;
            if (use_bounds && m - pos > v - count &&
                !local_test_fails(mask, static_cast<std::size_t>(v))) {
                return false;
            }
            const std::uint64_t bit = 1ull << others[pos];
            if (dfs(pos + 1, mask | bit, count + 1)) return true;
            return dfs(pos + 1, mask, count);
        };
        if (dfs(0, base, 1)) return true;
    }
    return false;
}

bool ClosedSensitivityEngine::singleton_unrejected_enumerative(std::size_t k) {
    const std::size_t K = scores_->n_outcomes;
    const double thresh = config_.alpha / static_cast<double>(K);
    if (!(worst_p(k) > thresh)) return false;  // every superset is rejected
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < K; ++j) {
        if (j != k && worst_p(j) > thresh) others.push_back(j);
    }
    // Same candidate order as the pruned search, so the two routes differ
    // only in bounding.
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return worst_p(a) < worst_p(b); });
    const std::uint64_t base = 1ull << k;
    if (local_test_fails(base, 1)) return true;
    // Supersets by increasing cardinality.
    for (std::size_t extra = 1; extra <= others.size(); ++extra) {
        std::vector<std::size_t> comb(extra);
        std::iota(comb.begin(), comb.end(), 0);
        while (true) {
            std::uint64_t mask = base;
            for (auto c : comb) mask |= 1ull << others[c];
            if (local_test_fails(mask, extra + 1)) return true;
            // next combination
            std::size_t i = extra;
            while (i > 0 && comb[i - 1] == others.size() - (extra - i) - 1) --i;
            if (i == 0) break;
            ++comb[i - 1];
            for (std::size_t j = i; j < extra; ++j) comb[j] = comb[j - 1] + 1;
        }
    }
    return false;
}

VStarResult v_star(const MatchedDesign& design, const ScoreMatrix& scores,
                   const std::vector<std::size_t>& subset, const ClosedTestConfig& config) {
    Timer timer;
    ClosedSensitivityEngine engine(design, scores, config);
    VStarResult res;
    res.v = engine.v_star_search(subset, 1);
    res.diagnostics = engine.diagnostics();
    res.diagnostics.wall_time_seconds = timer.seconds();
    return res;
}

int enumerative_oracle_v(const MatchedDesign& design, const ScoreMatrix& scores,
                         const std::vector<std::size_t>& subset, const ClosedTestConfig& config) {
    ClosedSensitivityEngine engine(design, scores, config);
    return engine.enumerative_v(subset, false, false);
}

int naive_v(const MatchedDesign& design, const ScoreMatrix& scores,
            const std::vector<std::size_t>& subset, const ClosedTestConfig& config) {
    validate_subset(subset, scores.n_outcomes);
    ClosedSensitivityEngine engine(design, scores, config);
    std::vector<double> p(scores.n_outcomes);
    for (std::size_t k = 0; k < scores.n_outcomes; ++k) p[k] = engine.worst_p(k);
    const auto reject = holm_rejections(p, config.alpha);
    int v = 0;
    for (auto k : subset) {
        if (!reject[k]) ++v;
    }
    return v;
}

GsvResult gsv(const MatchedDesign& design, const ScoreMatrix& scores,
              const std::vector<std::size_t>& subset, int r, double alpha, double gamma_hi,
              double tol) {
    validate_subset(subset, scores.n_outcomes);
    if (r < 0 || r >= static_cast<int>(subset.size())) {
        throw std::invalid_argument("gsv: r must lie in [0, |subset| - 1]");
    }
    if (!(gamma_hi >= 1.0)) throw std::invalid_argument("gsv: gamma_hi must be >= 1");
    Timer timer;
    GsvResult out;
    auto exceeds = [&](double g) {
        ClosedSensitivityEngine engine(design, scores, ClosedTestConfig(alpha, g));
        const int found = engine.v_star_search(subset, r + 1);
        out.diagnostics += engine.diagnostics();
        return found > r;
    };
    if (exceeds(1.0)) {
        out.gamma = 1.0;
    } else if (!exceeds(gamma_hi)) {
        out.gamma = gamma_hi;
        out.saturated = true;
    } else {
        double lo = 1.0, hi = gamma_hi;
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            (exceeds(mid) ? hi : lo) = mid;
        }
        out.gamma = 0.5 * (lo + hi);
    }
    out.diagnostics.wall_time_seconds = timer.seconds();
    return out;
}

std::vector<RankedSubset> subset_search(const MatchedDesign& design, const ScoreMatrix& scores,
                                        std::size_t subset_size, int r,
                                        const SubsetSearchOptions& options) {
    const std::size_t K = scores.n_outcomes;
    if (subset_size == 0 || subset_size > K) {
        throw std::invalid_argument("subset_search: invalid subset size");
    }
    if (r < 0 || r >= static_cast<int>(subset_size)) {
        throw std::invalid_argument("subset_search: r must lie in [0, subset_size - 1]");
    }

    std::vector<std::size_t> candidates;
    if (options.prefilter_alpha) {
        const AssignmentProbabilities unif = uniform_assignment(design);
        for (std::size_t k = 0; k < K; ++k) {
            if (p_value_at_rho(design, scores, k, unif) <= *options.prefilter_alpha) {
                candidates.push_back(k);
            }
        }
    } else {
        candidates.resize(K);
        std::iota(candidates.begin(), candidates.end(), 0);
    }
    if (candidates.size() < subset_size) return {};

    // Count combinations against the cap before enumerating.
    double count = 1.0;
    for (std::size_t i = 0; i < subset_size; ++i) {
        count *= static_cast<double>(candidates.size() - i) / static_cast<double>(i + 1);
    }
    if (count > static_cast<double>(options.cap)) {
        throw std::invalid_argument(
            "subset_search: candidate count exceeds the cap; restrict the outcome set "
            "(prefilter) or lower the subset size");
    }

    std::vector<RankedSubset> results;
    std::vector<std::size_t> pick(subset_size);
    std::function<void(std::size_t, std::size_t)> enumerate = [&](std::size_t start,
                                                                  std::size_t depth) {
        if (depth == subset_size) {
            std::vector<std::size_t> subset(pick);
            GsvResult g = gsv(design, scores, subset, r, options.alpha, options.gamma_hi,
                              options.tol);
            results.push_back(RankedSubset{std::move(subset), g.gamma, g.saturated});
            return;
        }
        for (std::size_t i = start; i < candidates.size(); ++i) {
            pick[depth] = candidates[i];
            enumerate(i + 1, depth + 1);
        }
    };
    enumerate(0, 0);

    std::stable_sort(results.begin(), results.end(), [](const RankedSubset& a,
                                                        const RankedSubset& b) {
        if (a.gsv != b.gsv) return a.gsv > b.gsv;
        return a.subset < b.subset;
    });
    return results;
}

std::vector<double> sensitivity_set_from_v(int v, std::size_t subset_size) {
    std::vector<double> set;
    for (int i = 0; i <= v; ++i) {
        set.push_back(static_cast<double>(i) / static_cast<double>(subset_size));
    }
    return set;
}

}  // namespace fdpsens
