// Acceptance criteria 2, 3, 6, 9: property suites over random instances and
// the pinned non-consonance fixture. One PASS/FAIL line per criterion.

#include <cstdio>
#include <random>

#include "fdpsens/closed_fdp.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fdpsens;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& what, const std::string& detail) {
    std::printf("[criterion %2d] %s  %s (%s)\n", criterion, ok ? "PASS" : "FAIL", what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

}  // namespace

int main() {
    // Criterion 2: minimax dominance, naive_v >= v_star on >= 1000 random
    // instances with K <= 6.
    {
        std::mt19937_64 gen(910);
        int checked = 0, violations = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t K = 1 + gen() % 6;
            auto inst = testing::random_instance(gen, 8 + gen() % 23, K, 2, 0.35);
            const double gamma = 1.0 + (gen() % 13) * 0.16;
            ClosedTestConfig config(0.05, gamma);
            std::vector<std::size_t> subset;
            for (std::size_t k = 0; k < K; ++k) {
                if (gen() & 1) subset.push_back(k);
            }
            if (subset.empty()) subset.push_back(gen() % K);
            const int nv = naive_v(inst.design, inst.scores, subset, config);
            const int vs = v_star(inst.design, inst.scores, subset, config).v;
            ++checked;
            if (nv < vs) ++violations;
        }
        report(2, violations == 0 && checked >= 1000, "minimax dominance naive_v >= v_star",
               std::to_string(checked) + " instances, " + std::to_string(violations) +
                   " violations");
    }

    // Criterion 3: oracle equivalence on 50 instances per Gamma in
    // {1.25, 1.5}, K = 5, B = 20.
    {
        std::mt19937_64 gen(930);
        int mismatches = 0, checked = 0;
        for (double gamma : {1.25, 1.5}) {
            for (int trial = 0; trial < 50; ++trial) {
                auto inst = testing::random_instance(gen, 20, 5, 2, 0.30);
                ClosedTestConfig config(0.05, gamma);
                std::vector<std::size_t> subset;
                for (std::size_t k = 0; k < 5; ++k) {
                    if (gen() % 3) subset.push_back(k);
                }
                if (subset.empty()) subset = {0, 1};
                const int vs = v_star(inst.design, inst.scores, subset, config).v;
                const int oracle = enumerative_oracle_v(inst.design, inst.scores, subset, config);
                ++checked;
                if (vs != oracle) ++mismatches;
            }
        }
        report(3, mismatches == 0 && checked == 100, "v_star equals the enumerative oracle",
               std::to_string(checked) + " instances, " + std::to_string(mismatches) +
                   " mismatches");
    }

    // Criterion 6: monotonicity suite.
    {
        std::mt19937_64 gen(960);
        int violations = 0, checks = 0;
        for (int trial = 0; trial < 30; ++trial) {
            auto inst = testing::random_instance(gen, 15 + gen() % 10, 4, 2, 0.35);
            const std::vector<std::size_t> full{0, 1, 2, 3};
            // v* nondecreasing in Gamma.
            int prev = -1;
            for (double gamma : {1.0, 1.2, 1.45, 1.7, 2.0, 2.6}) {
                const int v = v_star(inst.design, inst.scores, full,
                                     ClosedTestConfig(0.05, gamma)).v;
                ++checks;
                if (v < prev) ++violations;
                prev = v;
            }
            // Gamma*(R, r) nondecreasing in r.
            double prev_g = 0.0;
            for (int r = 0; r < 4; ++r) {
                const auto g = gsv(inst.design, inst.scores, full, r, 0.05, 5.0, 1e-3);
                ++checks;
                if (g.gamma < prev_g - 1e-12) ++violations;
                prev_g = g.gamma;
            }
            // Subset monotonicity along a chain.
            const double gamma = 1.25 + 0.25 * (trial % 3);
            const ClosedTestConfig config(0.05, gamma);
            const int v1 = v_star(inst.design, inst.scores, {2}, config).v;
            const int v2 = v_star(inst.design, inst.scores, {1, 2}, config).v;
            const int v3 = v_star(inst.design, inst.scores, {1, 2, 3}, config).v;
            const int v4 = v_star(inst.design, inst.scores, full, config).v;
            checks += 3;
            if (v1 > v2) ++violations;
            if (v2 > v3) ++violations;
            if (v3 > v4) ++violations;
        }
        report(6, violations == 0,
               "monotone in Gamma, in r, and in the subset",
               std::to_string(checks) + " comparisons, " + std::to_string(violations) +
                   " violations");
    }

    // Criterion 9: pinned non-consonance fixture.
    {
        const auto d = testing::nonconsonance_fixture();
        const auto scores = build_scores(d.design, d.outcomes);
        const ClosedTestConfig config(testing::kNonconsonanceAlpha,
                                      testing::kNonconsonanceGamma);
        ClosedSensitivityEngine engine(d.design, scores, config);
        const bool singleton1_kept = engine.worst_p(1) > config.alpha;
        const bool singleton2_kept = engine.worst_p(2) > config.alpha;
        const int vs = v_star(d.design, scores, {1, 2}, config).v;
        const int oracle = enumerative_oracle_v(d.design, scores, {1, 2}, config);
        const int nv = naive_v(d.design, scores, {1, 2}, config);
        const bool ok = singleton1_kept && singleton2_kept && vs == 1 && oracle == 1 && nv == 2;
        report(9, ok, "non-consonant rejection extracts v*({2,3}) = 1",
               "v_star=" + std::to_string(vs) + " oracle=" + std::to_string(oracle) +
                   " naive=" + std::to_string(nv));
    }

    std::printf("%s\n", failures == 0 ? "ALL PROPERTY CRITERIA PASSED"
                                      : "PROPERTY CRITERIA FAILURES PRESENT");
    return failures == 0 ? 0 : 1;
}
