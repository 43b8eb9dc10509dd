#ifndef FDPSENS_CLOSED_FDP_HPP
#define FDPSENS_CLOSED_FDP_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>

#include "fdpsens/design.hpp"
#include "fdpsens/gamma_model.hpp"
#include "fdpsens/minimax.hpp"
#include "fdpsens/single_pvalue.hpp"

namespace fdpsens {

struct ClosedTestConfig {
    double alpha = 0.05;
    double gamma = 1.0;

    ClosedTestConfig() = default;
    ClosedTestConfig(double a, double g) : alpha(a), gamma(g) {
        if (!(a > 0.0 && a < 1.0)) {
            throw std::invalid_argument("ClosedTestConfig: alpha must lie in (0,1)");
        }
        if (!(g >= 1.0)) throw std::invalid_argument("ClosedTestConfig: gamma must be >= 1");
    }
};

enum class ScreenDecision { Reject, FailToReject, Undecided };

struct ScreeningVerdict {
    std::vector<ScreenDecision> decision;  // per outcome
    std::vector<double> worst_case_p;      // per outcome
};

struct Diagnostics {
    long long ip_invocations = 0;  // inner minimax solves (cache misses)
    long long nodes_explored = 0;  // branch-and-bound nodes
    double wall_time_seconds = 0.0;

    Diagnostics& operator+=(const Diagnostics& other) {
        ip_invocations += other.ip_invocations;
        nodes_explored += other.nodes_explored;
        wall_time_seconds += other.wall_time_seconds;
        return *this;
    }
};

// Step-down Holm rejections at level alpha; ties broken by index order.
std::vector<bool> holm_rejections(const std::vector<double>& p_values, double alpha);

// Known-assignment v(R): Holm count of unrejected members of R using the
// chi-squared deviate p-values at the supplied rho.
int v_known_rho(const MatchedDesign& design, const ScoreMatrix& scores,
                const std::vector<std::size_t>& subset, const AssignmentProbabilities& rho,
                double alpha);

ScreeningVerdict screen(const MatchedDesign& design, const ScoreMatrix& scores,
                        const ClosedTestConfig& config);

struct CandidatePool {
    int r_max = 0;
    std::vector<std::size_t> pool;
};

CandidatePool candidate_pool(const ScreeningVerdict& verdict, const std::vector<std::size_t>& subset,
                             const ClosedTestConfig& config);

// Shared evaluation engine: memoizes worst-case local tests phi*_J across the
// branch-and-bound and the enumerative oracle.
class ClosedSensitivityEngine {
  public:
    ClosedSensitivityEngine(const MatchedDesign& design, const ScoreMatrix& scores,
                            const ClosedTestConfig& config);

    std::size_t n_outcomes() const { return scores_->n_outcomes; }
    const ClosedTestConfig& config() const { return config_; }

    // Exact singleton worst-case p-values (lazy, cached).
    double worst_p(std::size_t k);
    ScreeningVerdict screening();

    // True iff some rho in P_Gamma fails the level-(alpha/v) local test for
    // the outcome set encoded in `mask`.
    bool local_test_fails(std::uint64_t mask, std::size_t v);

    // Worst-case v over subsets of `subset`, searching stages r down to
    // `stop_at_r`; returns the first feasible stage (0 if none).
    int v_star_search(const std::vector<std::size_t>& subset, int stop_at_r);

    // Definitional computation over all (optionally pool-restricted)
    // intersections; requires n_outcomes <= 12 unless restricted.
    int enumerative_v(const std::vector<std::size_t>& subset, bool pool_restricted,
                      bool early_exit);

    // Closed-testing decision for an elementary hypothesis: unrejected iff
    // some superset intersection fails its worst-case local test. Two routes
    // sharing the screening pool: pruned search vs. superset enumeration.
    bool singleton_unrejected_bb(std::size_t k);
    bool singleton_unrejected_enumerative(std::size_t k);

    const Diagnostics& diagnostics() const { return diag_; }

  private:
    const MatchedDesign* design_;
    const ScoreMatrix* scores_;
    ClosedTestConfig config_;
    std::vector<std::optional<double>> worst_p_;
    // Failure is monotone in the superset cardinality v (the local level
    // alpha/v tightens), so per mask it suffices to track the crossover.
    struct LocalRange {
        int max_v_rejected = 0;   // largest v known with phi* = 1
        int min_v_failing = 1 << 20;  // smallest v known with phi* = 0
    };
    std::unordered_map<std::uint64_t, LocalRange> local_memo_;
    Diagnostics diag_;

    bool stage_feasible(const std::vector<std::size_t>& ordered_pool,
                        const std::vector<bool>& in_subset, int r, int v);
};

struct VStarResult {
    int v = 0;
    Diagnostics diagnostics;
};

VStarResult v_star(const MatchedDesign& design, const ScoreMatrix& scores,
                   const std::vector<std::size_t>& subset, const ClosedTestConfig& config);

// Brute-force closed-testing oracle (guarded to K <= 12).
int enumerative_oracle_v(const MatchedDesign& design, const ScoreMatrix& scores,
                         const std::vector<std::size_t>& subset, const ClosedTestConfig& config);

// Holm applied to the per-outcome worst-case p-values.
int naive_v(const MatchedDesign& design, const ScoreMatrix& scores,
            const std::vector<std::size_t>& subset, const ClosedTestConfig& config);

struct GsvResult {
    double gamma = 1.0;
    bool saturated = false;
    Diagnostics diagnostics;
};

// Generalized sensitivity value: smallest Gamma with v*_Gamma(subset) > r.
GsvResult gsv(const MatchedDesign& design, const ScoreMatrix& scores,
              const std::vector<std::size_t>& subset, int r, double alpha,
              double gamma_hi = 10.0, double tol = 1e-3);

struct RankedSubset {
    std::vector<std::size_t> subset;
    double gsv = 1.0;
    bool saturated = false;
};

struct SubsetSearchOptions {
    double alpha = 0.05;
    double gamma_hi = 10.0;
    double tol = 1e-3;
    std::size_t cap = 20000;
    // When set, restrict candidates to outcomes with p <= prefilter_alpha at
    // Gamma = 1 (uniform assignment).
    std::optional<double> prefilter_alpha;
};

std::vector<RankedSubset> subset_search(const MatchedDesign& design, const ScoreMatrix& scores,
                                        std::size_t subset_size, int r,
                                        const SubsetSearchOptions& options);

struct FdpReport {
    std::vector<std::size_t> subset;
    double gamma = 1.0;
    double alpha = 0.05;
    int v_star = 0;
    std::vector<double> sensitivity_set;  // {0, 1/|R|, ..., v*/|R|}
    std::optional<int> naive_v;
    std::map<int, double> gsv_table;  // r -> Gamma*(R, r)
    Diagnostics diagnostics;
};

std::vector<double> sensitivity_set_from_v(int v, std::size_t subset_size);

}  // namespace fdpsens

#endif
