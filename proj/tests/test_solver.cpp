#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fdpsens/minimax.hpp"
#include "fdpsens/single_pvalue.hpp"
#include "fdpsens/stats.hpp"
#include "oracles.hpp"

using namespace fdpsens;

namespace {

DesignData pair_design(const std::vector<std::array<double, 2>>& pair_scores) {
    std::vector<Stratum> strata;
    std::vector<double> values;
    for (std::size_t i = 0; i < pair_scores.size(); ++i) {
        Stratum s;
        s.stratum_id = "s" + std::to_string(i + 1);
        s.units.push_back(Unit{"t", true});
        s.units.push_back(Unit{"c", false});
        strata.push_back(std::move(s));
        values.push_back(pair_scores[i][0]);
        values.push_back(pair_scores[i][1]);
    }
    DesignData d;
    d.design = MatchedDesign::from_strata(std::move(strata));
    d.outcomes.n_units = d.design.n_units();
    d.outcomes.n_outcomes = 1;
    d.outcomes.names = {"y"};
    d.outcomes.kinds = {OutcomeKind::continuous};
    d.outcomes.values = std::move(values);
    return d;
}

ScoreMatrix raw(const DesignData& d) {
    return build_scores(d.design, d.outcomes, StatisticChoice{StatisticChoice::Kind::raw, 0.0});
}

// Random member of P_Gamma for a pairs design.
AssignmentProbabilities random_pair_rho(const MatchedDesign& design, double gamma,
                                        std::mt19937_64& gen) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    AssignmentProbabilities rho = uniform_assignment(design);
    const double lo = 1.0 / (1.0 + gamma), hi = gamma / (1.0 + gamma);
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const double x = lo + (hi - lo) * unif(gen);
        rho.rho[i] = {x, 1.0 - x};
    }
    return rho;
}

}  // namespace

TEST_CASE("zeta reproduces the hand-computed single-pair value") {
    const auto d = pair_design({{1.0, 0.0}});
    const auto scores = raw(d);
    const auto unif = uniform_assignment(d.design);
    // (1 - 0.5)^2 - 3.8415 * 0.25
    CHECK(zeta(d.design, scores, 0, unif, 0.05) == doctest::Approx(-0.7104).epsilon(1e-4));
}

TEST_CASE("zeta is nonnegative whenever the variance vanishes") {
    const auto d = pair_design({{2.0, 2.0}});
    const auto scores = raw(d);
    const auto unif = uniform_assignment(d.design);
    CHECK(zeta(d.design, scores, 0, unif, 0.05) == doctest::Approx(0.0));
}

TEST_CASE("minimax with one outcome matches the worst-case p-value decision") {
    std::mt19937_64 gen(101);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto inst = testing::random_instance(gen, 8 + trial % 8, 1, 2, 0.3);
        const double gamma = 1.0 + 0.1 * (trial % 12);
        const double c = 0.05;
        const double p = worst_case_single_pvalue(inst.design, inst.scores, 0, GammaBound(gamma));
        if (std::abs(p - c) < 1e-6) continue;  // knife-edge: skip
        ZetaProblem problem(inst.design, inst.scores, {0}, c, gamma);
        const auto res = minimax_zeta(problem);
        CHECK((res.certificate == Certificate::feasible) == (p > c));
        ++checked;
    }
    CHECK(checked > 40);
}

TEST_CASE("synthetic statistics with zero variance and off-center T are infeasible") {
    // Constant scores in every stratum force sigma2 == 0 for all rho; with the
    // observed statistic displaced, zeta stays strictly positive everywhere.
    std::vector<detail::PackedStratum> strata(3);
    for (auto& s : strata) {
        s.n = 2;
        s.q = {1.5, 1.5};
    }
    detail::MinimaxCore core(std::move(strata), {4.5 + 2.0}, chi2_quantile1(0.95), 2.0);
    MinimaxOptions options;
    const auto res = core.solve(options, nullptr);
    CHECK(res.certificate == Certificate::infeasible);
    CHECK(res.value == doctest::Approx(4.0));
    CHECK(res.gap() <= 1e-9);
}

TEST_CASE("minimax value matches a symmetric lattice search on duplicated pairs") {
    // Three distinct pair profiles, duplicated once each: by symmetry the
    // optimum has equal probabilities within each duplicate group, so a
    // three-dimensional lattice is an exhaustive oracle.
    const double gamma = 1.5;
    const std::size_t K = 3;
    // Per distinct pair: scores for (treated unit, control unit) per outcome.
    const double q1[3][2] = {{0.9, -0.2}, {0.1, 0.5}, {-0.3, 0.4}};
    const double q2[3][2] = {{0.2, 0.1}, {0.8, -0.5}, {0.4, -0.1}};
    const double q3[3][2] = {{-0.4, 0.3}, {0.3, 0.2}, {0.7, 0.0}};

    std::vector<Stratum> strata;
    std::vector<double> values;
    const double (*profiles[3])[2] = {q1, q2, q3};
    for (int g = 0; g < 3; ++g) {
        for (int copy = 0; copy < 2; ++copy) {
            Stratum s;
            s.stratum_id = "g" + std::to_string(g) + "c" + std::to_string(copy);
            s.units.push_back(Unit{"t", true});
            s.units.push_back(Unit{"c", false});
            strata.push_back(std::move(s));
            for (std::size_t k = 0; k < K; ++k) values.push_back(profiles[g][k][0]);
            for (std::size_t k = 0; k < K; ++k) values.push_back(profiles[g][k][1]);
        }
    }
    DesignData d;
    d.design = MatchedDesign::from_strata(std::move(strata));
    d.outcomes.n_units = 12;
    d.outcomes.n_outcomes = K;
    d.outcomes.names = {"a", "b", "c"};
    d.outcomes.kinds.assign(K, OutcomeKind::continuous);
    d.outcomes.values = values;
    const auto scores = raw(d);

    const double c = 0.05;
    ZetaProblem problem(d.design, scores, {0, 1, 2}, c, gamma);
    const auto res = minimax_zeta(problem);

    // Lattice oracle over the three group probabilities.
    const double h = chi2_quantile1(1.0 - c);
    std::array<double, 3> T{};
    for (std::size_t k = 0; k < K; ++k) {
        T[k] = 2.0 * (profiles[0][k][0] + profiles[1][k][0] + profiles[2][k][0]);
    }
    const double lo = 1.0 / (1.0 + gamma), hi = gamma / (1.0 + gamma);
    const int G = 201;
    double best = 1e300;
    for (int a = 0; a < G; ++a) {
        const double xa = lo + (hi - lo) * a / (G - 1);
        for (int b = 0; b < G; ++b) {
            const double xb = lo + (hi - lo) * b / (G - 1);
            for (int cc = 0; cc < G; ++cc) {
                const double xc = lo + (hi - lo) * cc / (G - 1);
                const double x[3] = {xa, xb, xc};
                double worst = -1e300;
                for (std::size_t k = 0; k < K; ++k) {
                    double mu = 0.0, var = 0.0;
                    for (int g = 0; g < 3; ++g) {
                        const double qt = profiles[g][k][0], qc = profiles[g][k][1];
                        const double dk = qt - qc;
                        mu += 2.0 * (qc + x[g] * dk);
                        var += 2.0 * dk * dk * x[g] * (1.0 - x[g]);
                    }
                    const double dev = T[k] - mu;
                    worst = std::max(worst, dev * dev - h * var);
                }
                best = std::min(best, worst);
            }
        }
    }
    CHECK(res.value == doctest::Approx(best).epsilon(1e-3));
    CHECK(res.value <= best + 1e-9);  // solver must not be beaten by the lattice
    CHECK(res.gap() <= std::max(1e-9, 1e-8 * std::abs(res.value)));
}

TEST_CASE("self-consistency: reported value equals max zeta at the reported argmin") {
    std::mt19937_64 gen(211);
    // Pairs designs close the primal-dual gap to the tight target; designs
    // with larger strata keep a certified (honest) residual that must stay
    // small relative to the value scale.
    for (std::size_t max_stratum : {2, 3}) {
        for (int trial = 0; trial < 25; ++trial) {
            auto inst = testing::random_instance(gen, 10, 3, max_stratum, 0.25);
            const double gamma = 1.0 + 0.2 * (trial % 6);
            const double c = 0.03 + 0.01 * (trial % 3);
            ZetaProblem problem(inst.design, inst.scores, {0, 1, 2}, c, gamma);
            const auto res = minimax_zeta(problem);
            CHECK(membership_check(inst.design, res.argmin_rho, GammaBound(gamma), 1e-9));
            double mx = -1e300;
            for (std::size_t k = 0; k < 3; ++k) {
                mx = std::max(mx, zeta(inst.design, inst.scores, k, res.argmin_rho, c));
            }
            CHECK(res.value == doctest::Approx(mx).epsilon(1e-8));
            CHECK(res.lower_bound <= res.value);
            if (max_stratum == 2) {
                CHECK(res.gap() <= std::max(1e-9, 1e-8 * std::abs(res.value)) + 1e-12);
            } else {
                CHECK(res.gap() <= 1e-4 * std::max(1.0, std::abs(res.value)));
            }
        }
    }
}

TEST_CASE("convexity witness: max zeta is convex along segments in P_Gamma") {
    std::mt19937_64 gen(223);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        auto inst = testing::random_instance(gen, 8, 2, 2, 0.2);
        const double gamma = 1.4;
        const double c = 0.05;
        auto rho1 = random_pair_rho(inst.design, gamma, gen);
        auto rho2 = random_pair_rho(inst.design, gamma, gen);
        const double lam = unif(gen);
        AssignmentProbabilities mix = rho1;
        for (std::size_t i = 0; i < mix.rho.size(); ++i) {
            for (std::size_t j = 0; j < mix.rho[i].size(); ++j) {
                mix.rho[i][j] = lam * rho1.rho[i][j] + (1.0 - lam) * rho2.rho[i][j];
            }
        }
        auto maxzeta = [&](const AssignmentProbabilities& r) {
            double mx = -1e300;
            for (std::size_t k = 0; k < 2; ++k) {
                mx = std::max(mx, zeta(inst.design, inst.scores, k, r, c));
            }
            return mx;
        };
        CHECK(maxzeta(mix) <= lam * maxzeta(rho1) + (1.0 - lam) * maxzeta(rho2) + 1e-9);
    }
}

TEST_CASE("minimax value is monotone in the outcome set at fixed level") {
    std::mt19937_64 gen(227);
    for (int trial = 0; trial < 15; ++trial) {
        auto inst = testing::random_instance(gen, 9, 3, 2, 0.2);
        const double gamma = 1.3, c = 0.04;
        const auto r1 = minimax_zeta(ZetaProblem(inst.design, inst.scores, {0}, c, gamma));
        const auto r12 = minimax_zeta(ZetaProblem(inst.design, inst.scores, {0, 1}, c, gamma));
        const auto r123 =
            minimax_zeta(ZetaProblem(inst.design, inst.scores, {0, 1, 2}, c, gamma));
        CHECK(r1.value <= r12.value + 1e-7);
        CHECK(r12.value <= r123.value + 1e-7);
    }
}

TEST_CASE("minimax value is nonincreasing in Gamma") {
    std::mt19937_64 gen(229);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = testing::random_instance(gen, 10, 2, 3, 0.3);
        const double c = 0.05;
        double prev = 1e300;
        for (double gamma : {1.0, 1.2, 1.5, 2.0, 3.0}) {
            const auto res =
                minimax_zeta(ZetaProblem(inst.design, inst.scores, {0, 1}, c, gamma));
            CHECK(res.value <= prev + 1e-7);
            prev = res.value;
        }
    }
}

TEST_CASE("worst-case single p-value at Gamma 1 equals the uniform two-sided p") {
    std::mt19937_64 gen(233);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testing::random_instance(gen, 12, 1, 3, 0.4);
        const auto unif = uniform_assignment(inst.design);
        const double p_unif = p_value_at_rho(inst.design, inst.scores, 0, unif);
        const double p_star = worst_case_single_pvalue(inst.design, inst.scores, 0,
                                                       GammaBound(1.0));
        CHECK(p_star == doctest::Approx(p_unif).epsilon(1e-10));
    }
}

TEST_CASE("worst-case single p-value saturates at 1 for large Gamma") {
    std::mt19937_64 gen(239);
    auto inst = testing::random_instance(gen, 10, 1, 2, 0.5);
    CHECK(worst_case_single_pvalue(inst.design, inst.scores, 0, GammaBound(50.0)) ==
          doctest::Approx(1.0));
}

TEST_CASE("worst-case single p-value matches the pairwise grid oracle on 8 pairs") {
    std::mt19937_64 gen(241);
    for (int trial = 0; trial < 8; ++trial) {
        auto inst = testing::random_instance(gen, 8, 1, 2, 0.8);
        for (double gamma : {1.25, 1.75, 2.5}) {
            const double p_star =
                worst_case_single_pvalue(inst.design, inst.scores, 0, GammaBound(gamma));
            // Oracle: coordinate-descent over a fine per-pair grid of the
            // squared deviate (convex in the pair probabilities).
            const double T = sum_statistic(inst.design, inst.scores, 0);
            std::vector<double> qt(8), qc(8);
            for (std::size_t i = 0; i < 8; ++i) {
                const std::size_t off = inst.design.offset(i);
                const std::size_t tj = inst.design.treated_index(i);
                qt[i] = inst.scores.at(off + tj, 0);
                qc[i] = inst.scores.at(off + (1 - tj), 0);
            }
            auto deviate = [&](const std::vector<double>& x) {
                double mu = 0.0, var = 0.0;
                for (std::size_t i = 0; i < 8; ++i) {
                    // x[i] is the treated unit's probability.
                    const double dk = qt[i] - qc[i];
                    mu += qc[i] + x[i] * dk;
                    var += dk * dk * x[i] * (1.0 - x[i]);
                }
                const double d = T - mu;
                if (var <= 0.0) return d == 0.0 ? 0.0 : 1e12;
                return d * d / var;
            };
            const double lo = 1.0 / (1.0 + gamma), hi = gamma / (1.0 + gamma);
            double best = 1e300;
            for (int start = 0; start < 3; ++start) {
                std::vector<double> x0 = testing::grid_coordinate_descent(
                    8, lo, hi, 200, deviate, 80);
                best = std::min(best, deviate(x0));
            }
            const double p_grid = chi2_sf1(best);
            CHECK(p_star >= p_grid - 1e-6);
            CHECK(std::abs(p_star - p_grid) <= 1e-3);
        }
    }
}

TEST_CASE("worst-case single p-value is nondecreasing in Gamma") {
    std::mt19937_64 gen(251);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = testing::random_instance(gen, 15, 1, 3, 0.4);
        double prev = 0.0;
        for (double gamma : {1.0, 1.1, 1.3, 1.6, 2.0, 3.0, 5.0}) {
            const double p =
                worst_case_single_pvalue(inst.design, inst.scores, 0, GammaBound(gamma));
            CHECK(p >= prev - 1e-10);
            prev = p;
        }
    }
}

TEST_CASE("separable construction lower-bounds and tracks the exact p-value") {
    std::mt19937_64 gen(257);
    for (int trial = 0; trial < 12; ++trial) {
        auto inst = testing::random_instance(gen, 60, 1, 2, 0.35);
        for (double gamma : {1.2, 1.5, 2.0}) {
            const double exact =
                worst_case_single_pvalue(inst.design, inst.scores, 0, GammaBound(gamma));
            const double separable = worst_case_single_pvalue_separable(inst.design, inst.scores,
                                                                        0, GammaBound(gamma));
            CHECK(separable <= exact + 1e-10);
            CHECK(exact - separable <= 0.02);
        }
    }
}

TEST_CASE("degenerate designs raise the undefined-deviate error") {
    const auto d = pair_design({{1.0, 1.0}, {2.0, 2.0}});
    const auto scores = raw(d);
    CHECK_THROWS_AS(worst_case_single_pvalue(d.design, scores, 0, GammaBound(2.0)),
                    DegenerateScoresError);
}

TEST_CASE("sensitivity value returns 1 when already insensitive at Gamma 1") {
    // One pair with the statistic at its null expectation: p = 1 > alpha.
    const auto d = pair_design({{0.5, -0.5}, {-0.5, 0.5}});
    const auto scores = raw(d);
    const auto sv = single_sensitivity_value(d.design, scores, 0, 0.05);
    CHECK(sv.gamma == doctest::Approx(1.0));
    CHECK_FALSE(sv.saturated);
}

TEST_CASE("sensitivity value brackets the alpha crossing") {
    std::mt19937_64 gen(263);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = testing::random_instance(gen, 40, 1, 2, 0.55);
        const double alpha = 0.05;
        const auto sv = single_sensitivity_value(inst.design, inst.scores, 0, alpha, 10.0, 1e-3);
        if (sv.gamma <= 1.0 || sv.saturated) continue;
        const double below = worst_case_single_pvalue(inst.design, inst.scores, 0,
                                                      GammaBound(sv.gamma - 2e-3));
        const double above = worst_case_single_pvalue(inst.design, inst.scores, 0,
                                                      GammaBound(sv.gamma + 2e-3));
        CHECK(below <= alpha + 1e-9);
        CHECK(above > alpha - 1e-9);
        ++checked;
    }
    CHECK(checked >= 5);
}

TEST_CASE("strong signal on 100 pairs is insensitive beyond Gamma 1.5") {
    std::mt19937_64 gen(1234);
    std::normal_distribution<double> normal;
    // All treated-minus-control differences positive.
    std::vector<std::array<double, 2>> pairs;
    for (int i = 0; i < 100; ++i) {
        const double base = normal(gen);
        pairs.push_back({base + 1.2 + 0.2 * std::abs(normal(gen)), base});
    }
    const auto d = pair_design(pairs);
    const auto scores = build_scores(d.design, d.outcomes);
    const auto sv = single_sensitivity_value(d.design, scores, 0, 0.05);
    CHECK(sv.gamma > 1.5);
}
