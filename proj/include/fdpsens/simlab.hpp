#ifndef FDPSENS_SIMLAB_HPP
#define FDPSENS_SIMLAB_HPP

#include <cstdint>
#include <functional>
#include <optional>

#include "fdpsens/closed_fdp.hpp"
#include "fdpsens/design.hpp"
#include "fdpsens/rng.hpp"

namespace fdpsens {

struct ExperimentSpec {
    std::size_t B = 500;
    std::size_t K = 4;

    enum class TauKind { linspace, half } tau_kind = TauKind::linspace;
    double tau_lo = 0.15;
    double tau_hi = 0.35;
    double tau_half = 0.3;

    enum class SigmaKind { identity, equicorrelated } sigma_kind = SigmaKind::identity;
    double equicorrelation = 0.2;

    std::vector<double> gamma_grid{1.0, 1.25, 1.5, 1.75};
    double alpha = 0.05;
    std::size_t replicates = 200;
    std::uint64_t seed = 20240501;
};

struct ConfoundedAssignmentSpec {
    double bias_strength = 2.0;                // Gamma_true >= 1
    std::vector<std::size_t> driver_outcomes;  // must be true-null outcomes
};

std::vector<double> tau_vector(const ExperimentSpec& spec);
std::vector<double> sigma_matrix(const ExperimentSpec& spec);  // K x K

struct PairData {
    MatchedDesign design;
    OutcomeMatrix outcomes;
    std::vector<bool> truth;  // per outcome: tau_k != 0
};

// Core matched-pairs generator. Control potentials are i.i.d. N(0, Sigma);
// treated potentials add tau. Unconfounded assignment is uniform within the
// pair; a confounded spec tilts treatment toward the unit with the larger
// driver-outcome sum with odds bias_strength.
PairData generate_pairs(std::size_t B, const std::vector<double>& tau,
                        const std::vector<double>& sigma, std::uint64_t seed,
                        const ConfoundedAssignmentSpec* confound = nullptr);

PairData gen_matched_pairs(const ExperimentSpec& spec);
PairData gen_matched_pairs(const ExperimentSpec& spec, std::uint64_t seed);
PairData gen_confounded_pairs(const ExperimentSpec& spec, const ConfoundedAssignmentSpec& confound);
PairData gen_confounded_pairs(const ExperimentSpec& spec, const ConfoundedAssignmentSpec& confound,
                              std::uint64_t seed);

// Mean spurious treated-minus-control difference on driver outcomes when all
// effects are zero, estimated on a pilot replicate; used to match effect sizes
// across outcomes in the confounded design.
double calibrate_confounded_effect(std::size_t pilot_pairs, const std::vector<double>& sigma,
                                   const ConfoundedAssignmentSpec& confound, std::uint64_t seed);

// ---- Experiment runners ----

struct Table2Result {
    std::vector<double> gammas;
    std::vector<std::vector<double>> exact_props;  // [gamma][v] for v = 0..K
    std::vector<std::vector<double>> naive_props;
    std::vector<double> equal_fraction;  // fraction of replicates with exact == naive
    std::size_t replicates = 0;
    std::size_t K = 0;
};
Table2Result run_table2(const ExperimentSpec& spec);

struct ScreeningCell {
    double gamma = 1.0;
    std::size_t B = 0;
    double called_fraction = 0.0;  // replicates with at least one Undecided outcome
    double mean_frequency = 0.0;   // mean share of Undecided outcomes per replicate
};
std::vector<ScreeningCell> run_screening_study(const ExperimentSpec& spec,
                                               const std::vector<std::size_t>& b_grid,
                                               const std::vector<double>& gammas);

struct SelectorCell {
    double rho12 = 0.0;
    double naive_success = 0.0;
    double gsv_success = 0.0;
    std::size_t replicates = 0;
    double calibrated_effect = 0.0;
};
std::vector<SelectorCell> run_selector_study(const ExperimentSpec& spec,
                                             const ConfoundedAssignmentSpec& confound,
                                             const std::vector<double>& rho12_grid);

struct RuntimeSetting {
    int tau_variant = 1;    // 1: linspace, 2: half
    int sigma_variant = 1;  // 1: identity, 2: equicorrelated
    double gamma = 1.25;
    double seconds_bb = 0.0;
    double seconds_enum = 0.0;
    int timed_replicates = 0;
    bool screening_indecisive = false;  // at least one timed replicate was indecisive

    double speedup() const { return seconds_bb > 0.0 ? seconds_enum / seconds_bb : 1.0; }
};
std::vector<RuntimeSetting> run_runtime_study(const ExperimentSpec& spec,
                                              int timed_replicates_per_setting = 3,
                                              int max_attempts_per_setting = 40);

struct CoverageResult {
    double coverage = 0.0;  // frequency of V(R) <= v*(R) simultaneously over the family
    std::size_t replicates = 0;
    std::vector<std::vector<std::size_t>> family;
};
CoverageResult run_coverage_study(const ExperimentSpec& spec, double gamma_eval = 1.0,
                                  const ConfoundedAssignmentSpec* confound = nullptr);

// Runs fn(0..n-1) across a small thread pool; results must be written to
// per-index slots for determinism.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fdpsens

#endif
