#ifndef FDPSENS_TESTS_FIXTURES_HPP
#define FDPSENS_TESTS_FIXTURES_HPP

// Pinned data fixtures shared by the unit and acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "fdpsens/design.hpp"

namespace fdpsens::testing {

// Three-outcome fixture exhibiting a non-consonant rejection: outcome 0 is
// strongly affected; outcomes 1 and 2 carry moderate effects whose pair
// differences are anti-aligned, so a bias pattern that rescues one of them
// condemns the other. Found by seed search over this generator and pinned:
// at gamma = 1.5, alpha = 0.05 the closed sensitivity analysis rejects the
// intersection {1,2} (and every superset of {0}) while neither singleton 1
// nor 2 is rejected.
inline DesignData nonconsonance_fixture() {
    const std::uint64_t seed = 8;
    const std::size_t B = 80;
    const double strong = 1.5, m = 0.25, a = 0.8;
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    std::vector<Stratum> strata;
    std::vector<double> values;
    for (std::size_t i = 0; i < B; ++i) {
        Stratum s;
        s.stratum_id = "s" + std::to_string(i + 1);
        const bool first_treated = g() & 1;
        s.units.push_back(Unit{"u1", first_treated});
        s.units.push_back(Unit{"u2", !first_treated});
        strata.push_back(std::move(s));
        const double c0 = nd(g), c1 = nd(g), c2 = nd(g);
        const double u = nd(g);
        const double d0 = strong + 0.3 * nd(g);
        const double d1 = m + a * u;
        const double d2 = m - a * u;
        if (first_treated) {
            values.insert(values.end(), {c0 + d0, c1 + d1, c2 + d2, c0, c1, c2});
        } else {
            values.insert(values.end(), {c0, c1, c2, c0 + d0, c1 + d1, c2 + d2});
        }
    }
    DesignData d;
    d.design = MatchedDesign::from_strata(std::move(strata));
    d.outcomes.n_units = 2 * B;
    d.outcomes.n_outcomes = 3;
    d.outcomes.names = {"y0", "y1", "y2"};
    d.outcomes.kinds.assign(3, OutcomeKind::continuous);
    d.outcomes.values = std::move(values);
    return d;
}

constexpr double kNonconsonanceGamma = 1.5;
constexpr double kNonconsonanceAlpha = 0.05;

// Two-outcome variant of the same antagonism: worst-case assignments exist for
// each outcome separately but no single assignment rescues both at level
// alpha/2, so the naive count reports 2 while the exact count is 1.
inline DesignData antagonistic_pair_fixture() {
    const std::uint64_t seed = 8;
    const std::size_t B = 80;
    const double m = 0.25, a = 0.8;
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    std::vector<Stratum> strata;
    std::vector<double> values;
    for (std::size_t i = 0; i < B; ++i) {
        Stratum s;
        s.stratum_id = "s" + std::to_string(i + 1);
        const bool first_treated = g() & 1;
        s.units.push_back(Unit{"u1", first_treated});
        s.units.push_back(Unit{"u2", !first_treated});
        strata.push_back(std::move(s));
        const double c1 = nd(g), c2 = nd(g);
        const double u = nd(g);
        const double d1 = m + a * u;
        const double d2 = m - a * u;
        if (first_treated) {
            values.insert(values.end(), {c1 + d1, c2 + d2, c1, c2});
        } else {
            values.insert(values.end(), {c1, c2, c1 + d1, c2 + d2});
        }
    }
    DesignData d;
    d.design = MatchedDesign::from_strata(std::move(strata));
    d.outcomes.n_units = 2 * B;
    d.outcomes.n_outcomes = 2;
    d.outcomes.names = {"y1", "y2"};
    d.outcomes.kinds.assign(2, OutcomeKind::continuous);
    d.outcomes.values = std::move(values);
    return d;
}

}  // namespace fdpsens::testing

#endif
