#ifndef FDPSENS_MINIMAX_HPP
#define FDPSENS_MINIMAX_HPP

#include <optional>
#include <vector>

#include "fdpsens/design.hpp"
#include "fdpsens/gamma_model.hpp"

namespace fdpsens {

// zeta_k(rho; c) = (T_k - mu_k(rho))^2 - chi2q(1-c) * sigma2_k(rho).
// Negative values encode acceptance of the level-c local test at rho.
double zeta(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k,
            const AssignmentProbabilities& rho, double c);

struct ZetaProblem {
    const MatchedDesign* design = nullptr;
    const ScoreMatrix* scores = nullptr;
    std::vector<std::size_t> outcomes;  // nonempty index set J
    double critical_level = 0.05;       // c in (0,1)
    double gamma = 1.0;

    ZetaProblem(const MatchedDesign& d, const ScoreMatrix& s, std::vector<std::size_t> J,
                double c, double g);
};

enum class Certificate { feasible, infeasible };

struct MinimaxResult {
    double value = 0.0;        // max_k zeta_k(argmin_rho; c)
    double lower_bound = 0.0;  // certified dual bound: lower_bound <= true minimum <= value
    AssignmentProbabilities argmin_rho;
    int iterations = 0;
    int evaluations = 0;
    Certificate certificate = Certificate::feasible;

    double gap() const { return value - lower_bound; }
};

struct MinimaxOptions {
    double delta = 1e-7;     // certificate band around zero
    double rel_gap = 1e-8;   // relative primal-dual gap target
    double abs_gap = 1e-9;   // absolute gap target near zero
    int max_iterations = 10000;
    bool decide_only = false;  // stop once the sign of the value is certified
};

struct MinimaxWarmStart {
    std::vector<double> lambda;
    std::vector<double> w;
};

struct SolverStall : std::runtime_error {
    double lower_bound;
    double upper_bound;
    SolverStall(const std::string& msg, double lo, double hi)
        : std::runtime_error(msg), lower_bound(lo), upper_bound(hi) {}
};

// Solves min over rho in P_Gamma of max_{k in J} zeta_k(rho; c).
MinimaxResult minimax_zeta(const ZetaProblem& problem, const MinimaxOptions& options = {},
                           MinimaxWarmStart* warm = nullptr);

namespace detail {

// A packed subproblem over per-stratum score blocks. The explicit-statistics
// constructor lets tests drive the solver on synthetic configurations that a
// (design, scores) pair cannot produce.
struct PackedStratum {
    std::size_t n = 0;
    std::vector<double> q;  // n x J row-major
};

class MinimaxCore {
  public:
    MinimaxCore(const MatchedDesign& design, const ScoreMatrix& scores,
                const std::vector<std::size_t>& outcomes, double c, double gamma);
    MinimaxCore(std::vector<PackedStratum> strata, std::vector<double> observed_t, double h,
                double gamma);

    MinimaxResult solve(const MinimaxOptions& options, MinimaxWarmStart* warm,
                        const MatchedDesign* inflate_to = nullptr,
                        const std::vector<std::size_t>* kept = nullptr);

    double h() const { return h_; }

  private:
    struct Eval {
        double g_raw = 0.0;    // dual value at (lambda, w)
        double g_lower = 0.0;  // g_raw minus per-stratum certification gaps
        double f = 0.0;        // max_k zeta at the recovered rho
        double inner_residual = 0.0;  // l1 norm of the final inner gradient
        std::vector<double> mu, sig2;
    };

    Eval evaluate(const std::vector<double>& lambda, const std::vector<double>& w,
                  std::vector<std::vector<double>>& rho) const;
    double f_value(const std::vector<std::vector<double>>& rho, std::vector<double>* mu_out,
                   std::vector<double>* sig2_out) const;
    // Maximizes the dual in w at fixed lambda (strongly concave).
    Eval inner_solve(const std::vector<double>& lambda, std::vector<double>& w,
                     std::vector<std::vector<double>>& rho, int* evals) const;
    // Cyclic exact coordinate descent of max_k zeta_k over the pair strata.
    double polish_pairs(std::vector<std::vector<double>>& rho, int max_sweeps = 25) const;
    // Exact minimization of max_k zeta_k along the segment between two
    // feasible assignments (a max of quadratics in the step).
    double segment_min(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b,
                       std::vector<std::vector<double>>& out) const;

    std::vector<PackedStratum> strata_;
    std::vector<double> t_;
    double h_ = 0.0;
    double gamma_ = 1.0;
    std::size_t j_ = 0;
    double t_scale_ = 1.0;
    double w_bound_ = 1.0;  // bound on |w| at any dual optimum

    void finish_setup();
};

}  // namespace detail

}  // namespace fdpsens

#endif
