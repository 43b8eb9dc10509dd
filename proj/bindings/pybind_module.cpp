#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fdpsens/closed_fdp.hpp"
#include "fdpsens/minimax.hpp"
#include "fdpsens/report.hpp"
#include "fdpsens/simlab.hpp"
#include "fdpsens/single_pvalue.hpp"
#include "fdpsens/stats.hpp"

namespace py = pybind11;
using namespace fdpsens;

namespace {

DesignData design_from_rows(const std::vector<std::string>& stratum_ids,
                            const std::vector<std::string>& unit_ids,
                            const std::vector<int>& treated,
                            const std::vector<std::vector<double>>& outcome_rows,
                            std::vector<std::string> names) {
    const std::size_t n = stratum_ids.size();
    if (unit_ids.size() != n || treated.size() != n || outcome_rows.size() != n) {
        throw std::invalid_argument("design_from_rows: column lengths differ");
    }
    std::vector<Stratum> strata;
    OutcomeMatrix outcomes;
    outcomes.n_units = n;
    outcomes.n_outcomes = outcome_rows.empty() ? 0 : outcome_rows.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (strata.empty() || strata.back().stratum_id != stratum_ids[i]) {
            strata.push_back(Stratum{stratum_ids[i], {}});
        }
        strata.back().units.push_back(Unit{unit_ids[i], treated[i] != 0});
        if (outcome_rows[i].size() != outcomes.n_outcomes) {
            throw std::invalid_argument("design_from_rows: ragged outcome rows");
        }
        outcomes.values.insert(outcomes.values.end(), outcome_rows[i].begin(),
                               outcome_rows[i].end());
    }
    if (names.empty()) {
        for (std::size_t k = 0; k < outcomes.n_outcomes; ++k) {
            names.push_back("y" + std::to_string(k + 1));
        }
    }
    outcomes.names = std::move(names);
    outcomes.kinds.assign(outcomes.n_outcomes, OutcomeKind::continuous);
    for (std::size_t k = 0; k < outcomes.n_outcomes; ++k) {
        bool binary = true;
        for (std::size_t i = 0; i < n && binary; ++i) {
            const double v = outcomes.at(i, k);
            binary = v == 0.0 || v == 1.0;
        }
        if (binary) outcomes.kinds[k] = OutcomeKind::binary;
    }
    return DesignData{MatchedDesign::from_strata(std::move(strata)), std::move(outcomes)};
}

StatisticChoice choice_from(const std::string& statistic, double trim) {
    StatisticChoice c;
    c.trim = trim;
    if (statistic == "auto") {
        c.kind = StatisticChoice::Kind::auto_dispatch;
    } else if (statistic == "raw") {
        c.kind = StatisticChoice::Kind::raw;
    } else if (statistic == "mh") {
        c.kind = StatisticChoice::Kind::mh;
    } else if (statistic == "huber") {
        c.kind = StatisticChoice::Kind::huber;
    } else {
        throw std::invalid_argument("statistic must be auto|raw|mh|huber");
    }
    return c;
}

py::dict diagnostics_dict(const Diagnostics& d) {
    py::dict out;
    out["ip_invocations"] = d.ip_invocations;
    out["nodes_explored"] = d.nodes_explored;
    out["wall_time"] = d.wall_time_seconds;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sensitivity sets for the false discovery proportion in matched designs";
    m.attr("__version__") = kArtifactVersion;

    py::class_<MatchedDesign>(m, "MatchedDesign")
        .def_property_readonly("n_strata", &MatchedDesign::n_strata)
        .def_property_readonly("n_units", &MatchedDesign::n_units)
        .def("stratum_size", &MatchedDesign::stratum_size)
        .def("treated_index", &MatchedDesign::treated_index);

    py::class_<OutcomeMatrix>(m, "OutcomeMatrix")
        .def_readonly("names", &OutcomeMatrix::names)
        .def_property_readonly("n_outcomes", [](const OutcomeMatrix& o) { return o.n_outcomes; })
        .def("column", &OutcomeMatrix::column);

    py::class_<ScoreMatrix>(m, "ScoreMatrix")
        .def_readonly("statistic_labels", &ScoreMatrix::statistic_labels)
        .def("column", &ScoreMatrix::column);

    py::class_<DesignData>(m, "DesignData")
        .def_readonly("design", &DesignData::design)
        .def_readonly("outcomes", &DesignData::outcomes);

    py::class_<AssignmentProbabilities>(m, "AssignmentProbabilities")
        .def_readonly("rho", &AssignmentProbabilities::rho);

    m.def(
        "load_design_csv",
        [](const std::string& path) { return load_design_csv(path); }, py::arg("path"));
    m.def("write_design_csv", &write_design_csv, py::arg("path"), py::arg("design"),
          py::arg("outcomes"));
    m.def("design_from_rows", &design_from_rows, py::arg("stratum_ids"), py::arg("unit_ids"),
          py::arg("treated"), py::arg("outcomes"), py::arg("names") = std::vector<std::string>{});

    m.def(
        "build_scores",
        [](const MatchedDesign& d, const OutcomeMatrix& o, const std::string& statistic,
           double trim) { return build_scores(d, o, choice_from(statistic, trim)); },
        py::arg("design"), py::arg("outcomes"), py::arg("statistic") = "auto",
        py::arg("trim") = 2.5);
    m.def("sum_statistic", &sum_statistic);
    m.def("uniform_assignment", &uniform_assignment);
    m.def(
        "membership_check",
        [](const MatchedDesign& d, const AssignmentProbabilities& rho, double gamma, double tol) {
            return membership_check(d, rho, GammaBound(gamma), tol);
        },
        py::arg("design"), py::arg("rho"), py::arg("gamma"), py::arg("tol") = 1e-9);
    m.def(
        "moments",
        [](const MatchedDesign& d, const ScoreMatrix& s, std::size_t k,
           const AssignmentProbabilities& rho) {
            const auto mm = moments(d, s, k, rho);
            return py::make_tuple(mm.mu, mm.sigma2);
        },
        py::arg("design"), py::arg("scores"), py::arg("k"), py::arg("rho"));
    m.def("p_value_at_rho", &p_value_at_rho);
    m.def(
        "worst_case_single_pvalue",
        [](const MatchedDesign& d, const ScoreMatrix& s, std::size_t k, double gamma) {
            return worst_case_single_pvalue(d, s, k, GammaBound(gamma));
        },
        py::arg("design"), py::arg("scores"), py::arg("k"), py::arg("gamma"));
    m.def(
        "single_sensitivity_value",
        [](const MatchedDesign& d, const ScoreMatrix& s, std::size_t k, double alpha,
           double gamma_hi, double tol) {
            const auto sv = single_sensitivity_value(d, s, k, alpha, gamma_hi, tol);
            py::dict out;
            out["gamma"] = sv.gamma;
            out["saturated"] = sv.saturated;
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("k"), py::arg("alpha"),
        py::arg("gamma_hi") = 10.0, py::arg("tol") = 1e-3);

    m.def("zeta", &zeta, py::arg("design"), py::arg("scores"), py::arg("k"), py::arg("rho"),
          py::arg("c"));
    m.def(
        "minimax_zeta",
        [](const MatchedDesign& d, const ScoreMatrix& s, const std::vector<std::size_t>& J,
           double c, double gamma) {
            const auto res = minimax_zeta(ZetaProblem(d, s, J, c, gamma));
            py::dict out;
            out["value"] = res.value;
            out["lower_bound"] = res.lower_bound;
            out["feasible"] = res.certificate == Certificate::feasible;
            out["iterations"] = res.iterations;
            out["evaluations"] = res.evaluations;
            out["argmin_rho"] = res.argmin_rho.rho;
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("outcomes"), py::arg("critical_level"),
        py::arg("gamma"));

    m.def(
        "screen",
        [](const MatchedDesign& d, const ScoreMatrix& s, double alpha, double gamma) {
            const auto v = screen(d, s, ClosedTestConfig(alpha, gamma));
            py::list decisions;
            for (auto dec : v.decision) {
                decisions.append(dec == ScreenDecision::Reject
                                     ? "reject"
                                     : dec == ScreenDecision::FailToReject ? "fail_to_reject"
                                                                           : "undecided");
            }
            py::dict out;
            out["decisions"] = decisions;
            out["worst_case_p"] = v.worst_case_p;
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("alpha"), py::arg("gamma"));
    m.def(
        "v_star",
        [](const MatchedDesign& d, const ScoreMatrix& s, const std::vector<std::size_t>& subset,
           double alpha, double gamma) {
            const auto res = v_star(d, s, subset, ClosedTestConfig(alpha, gamma));
            py::dict out;
            out["v"] = res.v;
            out["sensitivity_set"] = sensitivity_set_from_v(res.v, subset.size());
            out["diagnostics"] = diagnostics_dict(res.diagnostics);
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("subset"), py::arg("alpha"),
        py::arg("gamma"));
    m.def(
        "naive_v",
        [](const MatchedDesign& d, const ScoreMatrix& s, const std::vector<std::size_t>& subset,
           double alpha, double gamma) {
            return naive_v(d, s, subset, ClosedTestConfig(alpha, gamma));
        },
        py::arg("design"), py::arg("scores"), py::arg("subset"), py::arg("alpha"),
        py::arg("gamma"));
    m.def(
        "enumerative_oracle_v",
        [](const MatchedDesign& d, const ScoreMatrix& s, const std::vector<std::size_t>& subset,
           double alpha, double gamma) {
            return enumerative_oracle_v(d, s, subset, ClosedTestConfig(alpha, gamma));
        },
        py::arg("design"), py::arg("scores"), py::arg("subset"), py::arg("alpha"),
        py::arg("gamma"));
    m.def(
        "gsv",
        [](const MatchedDesign& d, const ScoreMatrix& s, const std::vector<std::size_t>& subset,
           int r, double alpha, double gamma_hi, double tol) {
            const auto res = gsv(d, s, subset, r, alpha, gamma_hi, tol);
            py::dict out;
            out["gamma"] = res.gamma;
            out["saturated"] = res.saturated;
            out["diagnostics"] = diagnostics_dict(res.diagnostics);
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("subset"), py::arg("r"), py::arg("alpha"),
        py::arg("gamma_hi") = 10.0, py::arg("tol") = 1e-3);
    m.def(
        "subset_search",
        [](const MatchedDesign& d, const ScoreMatrix& s, std::size_t subset_size, int r,
           double alpha, double gamma_hi, double tol, std::size_t cap,
           std::optional<double> prefilter_alpha) {
            SubsetSearchOptions options;
            options.alpha = alpha;
            options.gamma_hi = gamma_hi;
            options.tol = tol;
            options.cap = cap;
            options.prefilter_alpha = prefilter_alpha;
            const auto ranked = subset_search(d, s, subset_size, r, options);
            py::list out;
            for (const auto& row : ranked) {
                py::dict item;
                item["subset"] = row.subset;
                item["gsv"] = row.gsv;
                item["saturated"] = row.saturated;
                out.append(item);
            }
            return out;
        },
        py::arg("design"), py::arg("scores"), py::arg("subset_size"), py::arg("r"),
        py::arg("alpha") = 0.05, py::arg("gamma_hi") = 10.0, py::arg("tol") = 1e-3,
        py::arg("cap") = 20000, py::arg("prefilter_alpha") = std::nullopt);

    m.def(
        "generate_pairs",
        [](std::size_t B, const std::vector<double>& tau, const std::vector<std::vector<double>>& sigma,
           std::uint64_t seed, double bias, const std::vector<std::size_t>& drivers) {
            std::vector<double> flat;
            for (const auto& row : sigma) flat.insert(flat.end(), row.begin(), row.end());
            PairData data;
            if (bias > 1.0 && !drivers.empty()) {
                ConfoundedAssignmentSpec confound;
                confound.bias_strength = bias;
                confound.driver_outcomes = drivers;
                data = generate_pairs(B, tau, flat, seed, &confound);
            } else {
                data = generate_pairs(B, tau, flat, seed, nullptr);
            }
            py::dict out;
            out["data"] = DesignData{std::move(data.design), std::move(data.outcomes)};
            out["truth"] = data.truth;
            return out;
        },
        py::arg("B"), py::arg("tau"), py::arg("sigma"), py::arg("seed"), py::arg("bias") = 1.0,
        py::arg("drivers") = std::vector<std::size_t>{});

    m.def("chi2_sf1", &chi2_sf1);
    m.def("chi2_quantile1", &chi2_quantile1);
}
