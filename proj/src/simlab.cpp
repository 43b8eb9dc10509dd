#include "fdpsens/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace fdpsens {

std::vector<double> tau_vector(const ExperimentSpec& spec) {
    std::vector<double> tau(spec.K, 0.0);
    if (spec.tau_kind == ExperimentSpec::TauKind::linspace) {
        if (spec.K == 1) {
            tau[0] = spec.tau_lo;
        } else {
            for (std::size_t k = 0; k < spec.K; ++k) {
                tau[k] = spec.tau_lo + (spec.tau_hi - spec.tau_lo) * static_cast<double>(k) /
                                           static_cast<double>(spec.K - 1);
            }
        }
    } else {
        for (std::size_t k = 0; k < spec.K / 2; ++k) tau[k] = spec.tau_half;
    }
    return tau;
}

std::vector<double> sigma_matrix(const ExperimentSpec& spec) {
    std::vector<double> sigma(spec.K * spec.K, 0.0);
    const double rho =
        spec.sigma_kind == ExperimentSpec::SigmaKind::equicorrelated ? spec.equicorrelation : 0.0;
    for (std::size_t i = 0; i < spec.K; ++i) {
        for (std::size_t j = 0; j < spec.K; ++j) {
            sigma[i * spec.K + j] = i == j ? 1.0 : rho;
        }
    }
    return sigma;
}

PairData generate_pairs(std::size_t B, const std::vector<double>& tau,
                        const std::vector<double>& sigma, std::uint64_t seed,
                        const ConfoundedAssignmentSpec* confound) {
    const std::size_t K = tau.size();
    if (sigma.size() != K * K) throw std::invalid_argument("generate_pairs: sigma size mismatch");
    if (confound) {
        if (!(confound->bias_strength >= 1.0)) {
            throw std::invalid_argument("generate_pairs: bias_strength must be >= 1");
        }
        for (auto d : confound->driver_outcomes) {
            if (d >= K) throw std::out_of_range("generate_pairs: driver outcome out of range");
            if (tau[d] != 0.0) {
                throw std::invalid_argument(
                    "generate_pairs: driver outcomes must be true nulls (tau = 0)");
            }
        }
    }
    const std::vector<double> chol = cholesky_lower(sigma, K);
    Rng rng(seed);

    std::vector<Stratum> strata;
    strata.reserve(B);
    OutcomeMatrix outcomes;
    outcomes.n_units = 2 * B;
    outcomes.n_outcomes = K;
    outcomes.values.resize(2 * B * K);
    outcomes.names.resize(K);
    for (std::size_t k = 0; k < K; ++k) outcomes.names[k] = "y" + std::to_string(k + 1);
    outcomes.kinds.assign(K, OutcomeKind::continuous);

    for (std::size_t i = 0; i < B; ++i) {
        const std::vector<double> rc1 = rng.normal_vector(chol, K);
        const std::vector<double> rc2 = rng.normal_vector(chol, K);

        bool first_treated;
        if (confound && !confound->driver_outcomes.empty() && confound->bias_strength > 1.0) {
            double s1 = 0.0, s2 = 0.0;
            for (auto d : confound->driver_outcomes) {
                s1 += rc1[d];
                s2 += rc2[d];
            }
            const double p_high = confound->bias_strength / (1.0 + confound->bias_strength);
            if (s1 == s2) {
                first_treated = rng.bernoulli(0.5);
            } else {
                const bool high_first = s1 > s2;
                const bool high_treated = rng.bernoulli(p_high);
                first_treated = high_first == high_treated;
            }
        } else {
            first_treated = rng.bernoulli(0.5);
        }

        std::ostringstream sid;
        sid << "s" << (i + 1);
        Stratum s;
        s.stratum_id = sid.str();
        s.units.push_back(Unit{"u1", first_treated});
        s.units.push_back(Unit{"u2", !first_treated});
        strata.push_back(std::move(s));

        for (std::size_t k = 0; k < K; ++k) {
            const double y1 = rc1[k] + (first_treated ? tau[k] : 0.0);
            const double y2 = rc2[k] + (first_treated ? 0.0 : tau[k]);
            outcomes.values[(2 * i) * K + k] = y1;
            outcomes.values[(2 * i + 1) * K + k] = y2;
        }
    }

    PairData data;
    data.design = MatchedDesign::from_strata(std::move(strata));
    data.outcomes = std::move(outcomes);
    data.truth.resize(K);
    for (std::size_t k = 0; k < K; ++k) data.truth[k] = tau[k] != 0.0;
    return data;
}

PairData gen_matched_pairs(const ExperimentSpec& spec) {
    return gen_matched_pairs(spec, spec.seed);
}

PairData gen_matched_pairs(const ExperimentSpec& spec, std::uint64_t seed) {
    return generate_pairs(spec.B, tau_vector(spec), sigma_matrix(spec), seed, nullptr);
}

PairData gen_confounded_pairs(const ExperimentSpec& spec,
                              const ConfoundedAssignmentSpec& confound) {
    return gen_confounded_pairs(spec, confound, spec.seed);
}

PairData gen_confounded_pairs(const ExperimentSpec& spec, const ConfoundedAssignmentSpec& confound,
                              std::uint64_t seed) {
    return generate_pairs(spec.B, tau_vector(spec), sigma_matrix(spec), seed, &confound);
}

double calibrate_confounded_effect(std::size_t pilot_pairs, const std::vector<double>& sigma,
                                   const ConfoundedAssignmentSpec& confound, std::uint64_t seed) {
    const std::size_t K2 = sigma.size();
    std::size_t K = 0;
    while (K * K < K2) ++K;
    const std::vector<double> tau(K, 0.0);
    const PairData pilot = generate_pairs(pilot_pairs, tau, sigma, seed, &confound);
    double acc = 0.0;
    std::size_t count = 0;
    for (auto d : confound.driver_outcomes) {
        for (std::size_t i = 0; i < pilot.design.n_strata(); ++i) {
            const std::size_t off = pilot.design.offset(i);
            const std::size_t tj = pilot.design.treated_index(i);
            const double yt = pilot.outcomes.at(off + tj, d);
            const double yc = pilot.outcomes.at(off + (1 - tj), d);
            acc += yt - yc;
        }
        count += pilot.design.n_strata();
    }
    if (count == 0) throw std::invalid_argument("calibrate_confounded_effect: no drivers");
    return acc / static_cast<double>(count);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        threads.emplace_back([&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    if (error) std::rethrow_exception(error);
}

Table2Result run_table2(const ExperimentSpec& spec) {
    Table2Result out;
    out.gammas = spec.gamma_grid;
    out.replicates = spec.replicates;
    out.K = spec.K;
    const std::size_t G = out.gammas.size();
    out.exact_props.assign(G, std::vector<double>(spec.K + 1, 0.0));
    out.naive_props.assign(G, std::vector<double>(spec.K + 1, 0.0));
    out.equal_fraction.assign(G, 0.0);

    std::vector<std::size_t> all(spec.K);
    std::iota(all.begin(), all.end(), 0);

    struct RepResult {
        std::vector<int> exact, naive;
    };
    std::vector<RepResult> results(spec.replicates);
    parallel_for(spec.replicates, [&](std::size_t rep) {
        const PairData data = gen_matched_pairs(spec, derive_seed(spec.seed, rep));
        const ScoreMatrix scores = build_scores(data.design, data.outcomes);
        RepResult r;
        r.exact.resize(G);
        r.naive.resize(G);
        for (std::size_t g = 0; g < G; ++g) {
            ClosedSensitivityEngine engine(data.design, scores,
                                           ClosedTestConfig(spec.alpha, out.gammas[g]));
            r.exact[g] = engine.v_star_search(all, 1);
            std::vector<double> p(spec.K);
            for (std::size_t k = 0; k < spec.K; ++k) p[k] = engine.worst_p(k);
            const auto reject = holm_rejections(p, spec.alpha);
            int nv = 0;
            for (std::size_t k = 0; k < spec.K; ++k) {
                if (!reject[k]) ++nv;
            }
            r.naive[g] = nv;
        }
        results[rep] = std::move(r);
    });

    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t rep = 0; rep < spec.replicates; ++rep) {
            out.exact_props[g][results[rep].exact[g]] += 1.0;
            out.naive_props[g][results[rep].naive[g]] += 1.0;
            if (results[rep].exact[g] == results[rep].naive[g]) out.equal_fraction[g] += 1.0;
        }
        for (auto& v : out.exact_props[g]) v /= static_cast<double>(spec.replicates);
        for (auto& v : out.naive_props[g]) v /= static_cast<double>(spec.replicates);
        out.equal_fraction[g] /= static_cast<double>(spec.replicates);
    }
    return out;
}

std::vector<ScreeningCell> run_screening_study(const ExperimentSpec& spec,
                                               const std::vector<std::size_t>& b_grid,
                                               const std::vector<double>& gammas) {
    std::vector<ScreeningCell> cells;
    for (double gamma : gammas) {
        for (std::size_t B : b_grid) {
            ExperimentSpec local = spec;
            local.B = B;
            std::vector<int> undecided_counts(spec.replicates, 0);
            parallel_for(spec.replicates, [&](std::size_t rep) {
                const PairData data =
                    gen_matched_pairs(local, derive_seed(spec.seed, rep * 1000003ULL + B));
                const ScoreMatrix scores = build_scores(data.design, data.outcomes);
                const ScreeningVerdict verdict =
                    screen(data.design, scores, ClosedTestConfig(spec.alpha, gamma));
                int undecided = 0;
                for (auto d : verdict.decision) {
                    if (d == ScreenDecision::Undecided) ++undecided;
                }
                undecided_counts[rep] = undecided;
            });
            ScreeningCell cell;
            cell.gamma = gamma;
            cell.B = B;
            for (auto c : undecided_counts) {
                if (c > 0) cell.called_fraction += 1.0;
                cell.mean_frequency += static_cast<double>(c) / static_cast<double>(spec.K);
            }
            cell.called_fraction /= static_cast<double>(spec.replicates);
            cell.mean_frequency /= static_cast<double>(spec.replicates);
            cells.push_back(cell);
        }
    }
    return cells;
}

std::vector<SelectorCell> run_selector_study(const ExperimentSpec& spec,
                                             const ConfoundedAssignmentSpec& confound,
                                             const std::vector<double>& rho12_grid) {
    if (spec.K != 4) throw std::invalid_argument("run_selector_study: requires K = 4");
    std::vector<SelectorCell> cells;
    for (double rho12 : rho12_grid) {
        // Outcomes 0,1 carry the true effects with correlation rho12; outcomes
        // 2,3 are confounded nulls with correlation 0.2.
        std::vector<double> sigma(16, 0.0);
        sigma[0 * 4 + 0] = sigma[1 * 4 + 1] = sigma[2 * 4 + 2] = sigma[3 * 4 + 3] = 1.0;
        sigma[0 * 4 + 1] = sigma[1 * 4 + 0] = rho12;
        sigma[2 * 4 + 3] = sigma[3 * 4 + 2] = 0.2;

        const double tau_eff = calibrate_confounded_effect(
            20000, sigma, confound, derive_seed(spec.seed, 777));
        std::vector<double> tau{tau_eff, tau_eff, 0.0, 0.0};

        std::vector<std::vector<std::size_t>> pairs_of_outcomes;
        for (std::size_t a = 0; a < 4; ++a) {
            for (std::size_t b = a + 1; b < 4; ++b) pairs_of_outcomes.push_back({a, b});
        }

        std::vector<int> naive_hit(spec.replicates, 0), gsv_hit(spec.replicates, 0);
        parallel_for(spec.replicates, [&](std::size_t rep) {
            const PairData data = generate_pairs(
                spec.B, tau, sigma,
                derive_seed(spec.seed, 10000007ULL * (rep + 1) + std::llround(rho12 * 10) + 100),
                &confound);
            const ScoreMatrix scores = build_scores(data.design, data.outcomes);
            const AssignmentProbabilities unif = uniform_assignment(data.design);

            // Naive selector: the two smallest p-values at Gamma = 1.
            std::vector<std::pair<double, std::size_t>> ranked;
            for (std::size_t k = 0; k < 4; ++k) {
                ranked.emplace_back(p_value_at_rho(data.design, scores, k, unif), k);
            }
            std::stable_sort(ranked.begin(), ranked.end());
            const bool naive_ok = ranked[0].second <= 1 || ranked[1].second <= 1;

            // GSV selector: maximize Gamma*(R, 1) over the six pairs.
            double best_gamma = -1.0;
            std::size_t best_pair = 0;
            for (std::size_t pi = 0; pi < pairs_of_outcomes.size(); ++pi) {
                const GsvResult g = gsv(data.design, scores, pairs_of_outcomes[pi], 1, spec.alpha,
                                        8.0, 1e-3);
                if (g.gamma > best_gamma + 1e-12) {
                    best_gamma = g.gamma;
                    best_pair = pi;
                }
            }
            const auto& chosen = pairs_of_outcomes[best_pair];
            const bool gsv_ok = chosen[0] <= 1 || chosen[1] <= 1;

            naive_hit[rep] = naive_ok ? 1 : 0;
            gsv_hit[rep] = gsv_ok ? 1 : 0;
        });

        SelectorCell cell;
        cell.rho12 = rho12;
        cell.replicates = spec.replicates;
        cell.calibrated_effect = tau_eff;
        cell.naive_success =
            std::accumulate(naive_hit.begin(), naive_hit.end(), 0) /
            static_cast<double>(spec.replicates);
        cell.gsv_success = std::accumulate(gsv_hit.begin(), gsv_hit.end(), 0) /
                           static_cast<double>(spec.replicates);
        cells.push_back(cell);
    }
    return cells;
}

std::vector<RuntimeSetting> run_runtime_study(const ExperimentSpec& spec,
                                              int timed_replicates_per_setting,
                                              int max_attempts_per_setting) {
    std::vector<RuntimeSetting> settings;
    const std::vector<double> gammas{1.25, 1.5, 1.75};
    int setting_index = 0;
    for (int tau_variant : {1, 2}) {
        for (int sigma_variant : {1, 2}) {
            for (double gamma : gammas) {
                RuntimeSetting s;
                s.tau_variant = tau_variant;
                s.sigma_variant = sigma_variant;
                s.gamma = gamma;

                ExperimentSpec local = spec;
                local.tau_kind = tau_variant == 1 ? ExperimentSpec::TauKind::linspace
                                                  : ExperimentSpec::TauKind::half;
                local.sigma_kind = sigma_variant == 1 ? ExperimentSpec::SigmaKind::identity
                                                      : ExperimentSpec::SigmaKind::equicorrelated;

                bool warmed = false;
                for (int attempt = 0;
                     attempt < max_attempts_per_setting &&
                     s.timed_replicates < timed_replicates_per_setting;
                     ++attempt) {
                    const PairData data = gen_matched_pairs(
                        local, derive_seed(spec.seed, 424242ULL + 1000ULL * setting_index +
                                                          static_cast<std::uint64_t>(attempt)));
                    const ScoreMatrix scores = build_scores(data.design, data.outcomes);
                    const ClosedTestConfig config(spec.alpha, gamma);
                    const ScreeningVerdict verdict = screen(data.design, scores, config);
                    int undecided = 0;
                    for (auto d : verdict.decision) {
                        if (d == ScreenDecision::Undecided) ++undecided;
                    }
                    if (undecided > 0) s.screening_indecisive = true;

                    auto task = [&](bool use_bb) {
                        ClosedSensitivityEngine engine(data.design, scores, config);
                        const ScreeningVerdict v = engine.screening();
                        int unrejected = 0;
                        for (std::size_t k = 0; k < spec.K; ++k) {
                            bool u;
                            if (v.decision[k] == ScreenDecision::Reject) {
                                u = false;
                            } else if (v.decision[k] == ScreenDecision::FailToReject) {
                                u = true;
                            } else if (use_bb) {
                                u = engine.singleton_unrejected_bb(k);
                            } else {
                                u = engine.singleton_unrejected_enumerative(k);
                            }
                            if (u) ++unrejected;
                        }
                        return unrejected;
                    };

                    if (!warmed) {
                        task(true);
                        task(false);
                        warmed = true;
                    }
                    // Paired, best-of-two timings to suppress scheduler noise.
                    auto timed = [&](bool use_bb, int* result) {
                        double best = std::numeric_limits<double>::infinity();
                        for (int pass = 0; pass < 2; ++pass) {
                            const auto t0 = std::chrono::steady_clock::now();
                            *result = task(use_bb);
                            const auto t1 = std::chrono::steady_clock::now();
                            best = std::min(best,
                                            std::chrono::duration<double>(t1 - t0).count());
                        }
                        return best;
                    };
                    int r_bb = 0, r_enum = 0;
                    const double t_bb = timed(true, &r_bb);
                    const double t_enum = timed(false, &r_enum);
                    if (r_bb != r_enum) {
                        throw std::runtime_error(
                            "run_runtime_study: pruned and enumerative decisions disagree");
                    }
                    s.seconds_bb += t_bb;
                    s.seconds_enum += t_enum;
                    ++s.timed_replicates;
                    // When screening keeps deciding everything, stop early;
                    // the comparison is then dominated by screening cost.
                    if (!s.screening_indecisive && attempt >= 5 &&
                        s.timed_replicates >= timed_replicates_per_setting) {
                        break;
                    }
                }
                settings.push_back(s);
                ++setting_index;
            }
        }
    }
    return settings;
}

CoverageResult run_coverage_study(const ExperimentSpec& spec, double gamma_eval,
                                  const ConfoundedAssignmentSpec* confound) {
    CoverageResult out;
    out.replicates = spec.replicates;
    const std::size_t K = spec.K;
    // A fixed family of subsets spanning sizes and truth mixtures.
    std::vector<std::vector<std::size_t>> family;
    family.push_back({0});
    family.push_back({K - 1});
    family.push_back({0, K / 2});
    family.push_back({1, K - 1});
    family.push_back({0, 1 % K, K - 2});
    {
        std::vector<std::size_t> first, last, odds, evens, all;
        for (std::size_t k = 0; k < K / 2; ++k) first.push_back(k);
        for (std::size_t k = K - K / 2; k < K; ++k) last.push_back(k);
        for (std::size_t k = 0; k < K; ++k) {
            (k % 2 ? odds : evens).push_back(k);
            all.push_back(k);
        }
        family.push_back(first);
        family.push_back(last);
        family.push_back(odds);
        family.push_back(evens);
        family.push_back(all);
    }
    // Deduplicate while preserving order, then trim to ten.
    std::vector<std::vector<std::size_t>> dedup;
    for (auto& f : family) {
        if (std::find(dedup.begin(), dedup.end(), f) == dedup.end()) dedup.push_back(f);
    }
    if (dedup.size() > 10) dedup.resize(10);
    out.family = dedup;

    std::vector<int> covered(spec.replicates, 0);
    parallel_for(spec.replicates, [&](std::size_t rep) {
        const std::uint64_t seed = derive_seed(spec.seed, 555000ULL + rep);
        const PairData data = confound ? gen_confounded_pairs(spec, *confound, seed)
                                       : gen_matched_pairs(spec, seed);
        const ScoreMatrix scores = build_scores(data.design, data.outcomes);
        bool all_ok = true;
        if (gamma_eval <= 1.0) {
            const AssignmentProbabilities unif = uniform_assignment(data.design);
            for (const auto& subset : out.family) {
                int truth_nulls = 0;
                for (auto k : subset) {
                    if (!data.truth[k]) ++truth_nulls;
                }
                const int v = v_known_rho(data.design, scores, subset, unif, spec.alpha);
                if (truth_nulls > v) {
                    all_ok = false;
                    break;
                }
            }
        } else {
            ClosedSensitivityEngine engine(data.design, scores,
                                           ClosedTestConfig(spec.alpha, gamma_eval));
            for (const auto& subset : out.family) {
                int truth_nulls = 0;
                for (auto k : subset) {
                    if (!data.truth[k]) ++truth_nulls;
                }
                const int v = engine.v_star_search(subset, 1);
                if (truth_nulls > v) {
                    all_ok = false;
                    break;
                }
            }
        }
        covered[rep] = all_ok ? 1 : 0;
    });
    out.coverage = std::accumulate(covered.begin(), covered.end(), 0) /
                   static_cast<double>(spec.replicates);
    return out;
}

}  // namespace fdpsens
