// fdpsens command-line interface: analysis of matched designs from CSV and
// the desk-scale simulation studies.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fdpsens/closed_fdp.hpp"
#include "fdpsens/report.hpp"
#include "fdpsens/simlab.hpp"

namespace fs = std::filesystem;
using namespace fdpsens;

namespace {

struct CommonOptions {
    std::string input;
    std::string output;
    double alpha = 0.05;
    std::string statistic = "auto";
    std::uint64_t seed = 20240501;
};

StatisticChoice parse_statistic(const std::string& text) {
    StatisticChoice choice;
    if (text == "auto") {
        choice.kind = StatisticChoice::Kind::auto_dispatch;
    } else if (text == "raw") {
        choice.kind = StatisticChoice::Kind::raw;
    } else if (text == "mh") {
        choice.kind = StatisticChoice::Kind::mh;
    } else if (text.rfind("huber", 0) == 0) {
        choice.kind = StatisticChoice::Kind::huber;
        const auto colon = text.find(':');
        if (colon != std::string::npos) {
            choice.trim = std::stod(text.substr(colon + 1));
        }
    } else {
        throw CLI::ValidationError("--statistic", "expected auto|raw|mh|huber[:trim]");
    }
    return choice;
}

std::vector<std::size_t> parse_subset(const std::string& text, const OutcomeMatrix& outcomes) {
    std::vector<std::size_t> subset;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        bool numeric = !tok.empty();
        for (char c : tok) {
            if (!std::isdigit(static_cast<unsigned char>(c))) numeric = false;
        }
        if (numeric) {
            const std::size_t idx = std::stoull(tok);
            if (idx < 1 || idx > outcomes.n_outcomes) {
                throw std::invalid_argument("subset index " + tok + " out of range (1.." +
                                            std::to_string(outcomes.n_outcomes) + ")");
            }
            subset.push_back(idx - 1);
        } else {
            const auto it = std::find(outcomes.names.begin(), outcomes.names.end(), tok);
            if (it == outcomes.names.end()) {
                throw std::invalid_argument("unknown outcome name '" + tok + "'");
            }
            subset.push_back(static_cast<std::size_t>(it - outcomes.names.begin()));
        }
    }
    return subset;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
}

std::string csv_provenance(const Provenance& prov) {
    std::ostringstream out;
    out << "# fdpsens " << kArtifactVersion << " schema " << kSchemaVersion << "\n"
        << "# config_hash=" << prov.config_hash << " seed=" << prov.seed << "\n";
    return out.str();
}

// Minimal grouped bar chart, one group per label.
std::string svg_bars(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<std::vector<double>>& series,
                     const std::vector<std::string>& series_names) {
    const double width = 760, height = 420, left = 60, bottom = 60, top = 40;
    double vmax = 1e-300;
    for (const auto& s : series) {
        for (double v : s) vmax = std::max(vmax, v);
    }
    const double plot_w = width - left - 20, plot_h = height - top - bottom;
    const std::size_t groups = labels.size();
    const std::size_t per = series.size();
    const double group_w = plot_w / std::max<std::size_t>(1, groups);
    const double bar_w = 0.8 * group_w / std::max<std::size_t>(1, per);
    const char* palette[] = {"#4878a8", "#e1812c", "#3a923a", "#c03d3e"};
    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t p = 0; p < per; ++p) {
            const double v = series[p][g];
            const double h = plot_h * v / vmax;
            const double x = left + g * group_w + 0.1 * group_w + p * bar_w;
            const double y = top + plot_h - h;
            s << "<rect x='" << x << "' y='" << y << "' width='" << bar_w * 0.92 << "' height='"
              << h << "' fill='" << palette[p % 4] << "'/>\n";
        }
        s << "<text x='" << left + g * group_w + group_w / 2 << "' y='" << height - bottom + 18
          << "' text-anchor='middle' font-size='11'>" << labels[g] << "</text>\n";
    }
    for (std::size_t p = 0; p < per && p < series_names.size(); ++p) {
        const double y = top + 16.0 * p;
        s << "<rect x='" << width - 170 << "' y='" << y - 10 << "' width='12' height='12' fill='"
          << palette[p % 4] << "'/><text x='" << width - 152 << "' y='" << y
          << "' font-size='12'>" << series_names[p] << "</text>\n";
    }
    s << "<line x1='" << left << "' y1='" << top + plot_h << "' x2='" << width - 20 << "' y2='"
      << top + plot_h << "' stroke='black'/>\n</svg>\n";
    return s.str();
}

int run_analyze(const CommonOptions& common, const std::string& subset_text,
                std::vector<double> gammas, bool compare, bool gsv_table, double gamma_hi,
                double tol) {
    const DesignData data = load_design_csv(common.input);
    const ScoreMatrix scores = build_scores(data.design, data.outcomes,
                                            parse_statistic(common.statistic));
    std::vector<std::size_t> subset = subset_text.empty()
                                          ? std::vector<std::size_t>{}
                                          : parse_subset(subset_text, data.outcomes);
    if (subset.empty()) {
        subset.resize(data.outcomes.n_outcomes);
        std::iota(subset.begin(), subset.end(), 0);
    }
    if (gammas.empty()) gammas = {1.0};

    std::ostringstream canonical;
    canonical << "analyze|" << common.input << "|alpha=" << common.alpha << "|stat="
              << common.statistic << "|subset=" << subset_text << "|compare=" << compare;
    for (double g : gammas) canonical << "|g=" << g;
    Provenance prov{config_hash_of(canonical.str()), common.seed};

    nlohmann::json results = nlohmann::json::array();
    for (double gamma : gammas) {
        const ClosedTestConfig config(common.alpha, gamma);
        FdpReport report;
        report.subset = subset;
        report.gamma = gamma;
        report.alpha = common.alpha;
        const VStarResult vs = v_star(data.design, scores, subset, config);
        report.v_star = vs.v;
        report.diagnostics = vs.diagnostics;
        report.sensitivity_set = sensitivity_set_from_v(vs.v, subset.size());
        if (compare) {
            const int nv = naive_v(data.design, scores, subset, config);
            if (nv < vs.v) {
                std::cerr << "internal dominance violation: naive " << nv << " < exact " << vs.v
                          << "\n";
                return 3;
            }
            report.naive_v = nv;
        }
        if (gsv_table) {
            double prev = 0.0;
            for (int r = 0; r < static_cast<int>(subset.size()); ++r) {
                const GsvResult g = gsv(data.design, scores, subset, r, common.alpha, gamma_hi,
                                        tol);
                if (g.gamma < prev - 1e-12) {
                    std::cerr << "internal monotonicity violation in the gsv table\n";
                    return 3;
                }
                prev = g.gamma;
                report.gsv_table[r] = g.gamma;
                report.diagnostics += g.diagnostics;
            }
        }
        results.push_back(report_json(report, data.outcomes.names));
    }

    nlohmann::json doc{{"provenance", provenance_json(prov)},
                       {"command", compare ? "compare" : "analyze"},
                       {"input", common.input},
                       {"statistics", scores.statistic_labels},
                       {"results", results}};
    write_text(common.output, doc.dump(2) + "\n");
    return 0;
}

int run_gsv(const CommonOptions& common, const std::string& subset_text, int r, double gamma_hi,
            double tol) {
    const DesignData data = load_design_csv(common.input);
    const ScoreMatrix scores = build_scores(data.design, data.outcomes,
                                            parse_statistic(common.statistic));
    const auto subset = parse_subset(subset_text, data.outcomes);
    if (subset.empty()) throw std::invalid_argument("gsv requires --subset");
    const GsvResult g = gsv(data.design, scores, subset, r, common.alpha, gamma_hi, tol);

    std::ostringstream canonical;
    canonical << "gsv|" << common.input << "|" << subset_text << "|r=" << r << "|alpha="
              << common.alpha;
    Provenance prov{config_hash_of(canonical.str()), common.seed};
    nlohmann::json doc{{"provenance", provenance_json(prov)},
                       {"command", "gsv"},
                       {"subset", subset_text},
                       {"r", r},
                       {"gamma_star", g.gamma},
                       {"saturated", g.saturated},
                       {"bracket_tol", tol},
                       {"diagnostics", diagnostics_json(g.diagnostics)}};
    write_text(common.output, doc.dump(2) + "\n");
    return 0;
}

int run_subsets(const CommonOptions& common, std::size_t subset_size, int r, double gamma_hi,
                double tol, std::size_t cap, double prefilter_alpha, bool use_prefilter) {
    const DesignData data = load_design_csv(common.input);
    const ScoreMatrix scores = build_scores(data.design, data.outcomes,
                                            parse_statistic(common.statistic));
    SubsetSearchOptions options;
    options.alpha = common.alpha;
    options.gamma_hi = gamma_hi;
    options.tol = tol;
    options.cap = cap;
    if (use_prefilter) options.prefilter_alpha = prefilter_alpha;
    const auto ranked = subset_search(data.design, scores, subset_size, r, options);

    std::ostringstream canonical;
    canonical << "subsets|" << common.input << "|size=" << subset_size << "|r=" << r;
    Provenance prov{config_hash_of(canonical.str()), common.seed};
    std::ostringstream out;
    out << csv_provenance(prov) << "rank,subset,gsv,saturated\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out << (i + 1) << ",\"";
        for (std::size_t j = 0; j < ranked[i].subset.size(); ++j) {
            if (j) out << ' ';
            out << data.outcomes.names[ranked[i].subset[j]];
        }
        out << "\"," << std::fixed << std::setprecision(3) << ranked[i].gsv << ","
            << (ranked[i].saturated ? 1 : 0) << "\n";
        out.unsetf(std::ios::fixed);
    }
    write_text(common.output, out.str());
    return 0;
}

int run_simulate(const CommonOptions& common, const std::string& study, std::size_t replicates,
                 bool paper_scale, const std::string& out_dir, bool plot) {
    ExperimentSpec spec;
    spec.alpha = common.alpha;
    spec.seed = common.seed;
    spec.replicates = replicates;
    fs::create_directories(out_dir.empty() ? "." : out_dir);
    const fs::path dir = out_dir.empty() ? "." : out_dir;

    std::ostringstream canonical;
    canonical << "simulate|" << study << "|replicates=" << replicates << "|seed=" << common.seed
              << "|paper=" << paper_scale;
    Provenance prov{config_hash_of(canonical.str()), common.seed};
    nlohmann::json summary{{"provenance", provenance_json(prov)}, {"study", study}};

    if (study == "table2") {
        spec.K = 4;
        spec.B = 500;
        if (paper_scale) spec.replicates = 1000;
        std::ostringstream csv;
        csv << csv_provenance(prov) << "sigma,gamma,method";
        for (std::size_t v = 0; v <= spec.K; ++v) csv << ",v" << v;
        csv << ",equal_fraction\n";
        for (auto sigma_kind : {ExperimentSpec::SigmaKind::identity,
                                ExperimentSpec::SigmaKind::equicorrelated}) {
            spec.sigma_kind = sigma_kind;
            const auto res = run_table2(spec);
            const char* sig = sigma_kind == ExperimentSpec::SigmaKind::identity ? "identity"
                                                                                : "equicorrelated";
            for (std::size_t g = 0; g < res.gammas.size(); ++g) {
                for (int m = 0; m < 2; ++m) {
                    csv << sig << "," << res.gammas[g] << "," << (m == 0 ? "exact" : "naive");
                    const auto& props = m == 0 ? res.exact_props[g] : res.naive_props[g];
                    for (double p : props) csv << "," << p;
                    csv << "," << res.equal_fraction[g] << "\n";
                }
            }
            summary["equal_fraction_" + std::string(sig)] = res.equal_fraction;
            if (plot && sigma_kind == ExperimentSpec::SigmaKind::identity) {
                std::vector<std::string> labels;
                for (std::size_t v = 0; v <= spec.K; ++v) labels.push_back("v=" + std::to_string(v));
                // Distribution at the largest Gamma.
                const std::size_t g = res.gammas.size() - 1;
                write_text((dir / "table2_dist.svg").string(),
                           svg_bars("v* distribution (largest Gamma)", labels,
                                    {res.exact_props[g], res.naive_props[g]}, {"exact", "naive"}));
            }
        }
        write_text((dir / "table2.csv").string(), csv.str());
    } else if (study == "screening") {
        spec.K = 10;
        spec.tau_kind = ExperimentSpec::TauKind::half;
        std::vector<std::size_t> b_grid{500, 1000, 2000};
        std::vector<double> gammas{1.25, 2.0};
        if (paper_scale) {
            b_grid = {500, 1000, 2000, 5000, 10000};
            gammas = {1.25, 1.5, 1.75, 2.0};
            spec.replicates = 1000;
        }
        const auto cells = run_screening_study(spec, b_grid, gammas);
        std::ostringstream csv;
        csv << csv_provenance(prov) << "gamma,B,called_fraction,mean_frequency\n";
        for (const auto& c : cells) {
            csv << c.gamma << "," << c.B << "," << c.called_fraction << "," << c.mean_frequency
                << "\n";
        }
        write_text((dir / "screening.csv").string(), csv.str());
    } else if (study == "selector") {
        spec.K = 4;
        spec.B = 500;
        if (paper_scale) spec.replicates = 1000;
        ConfoundedAssignmentSpec confound;
        confound.bias_strength = 2.0;
        confound.driver_outcomes = {2, 3};
        const auto cells = run_selector_study(spec, confound, {-0.2, 0.0, 0.2});
        std::ostringstream csv;
        csv << csv_provenance(prov) << "rho,naive_success,gsv_success,replicates\n";
        for (const auto& c : cells) {
            csv << c.rho12 << "," << c.naive_success << "," << c.gsv_success << ","
                << c.replicates << "\n";
        }
        write_text((dir / "selector.csv").string(), csv.str());
        if (plot) {
            std::vector<std::string> labels{"rho=-0.2", "rho=0", "rho=0.2"};
            std::vector<double> naive, gsvv;
            for (const auto& c : cells) {
                naive.push_back(c.naive_success);
                gsvv.push_back(c.gsv_success);
            }
            write_text((dir / "selector.svg").string(),
                       svg_bars("selector success proportions", labels, {naive, gsvv},
                                {"naive", "gsv"}));
        }
    } else if (study == "runtime") {
        spec.K = paper_scale ? 20 : 10;
        spec.B = 500;
        const auto settings = run_runtime_study(spec);
        std::ostringstream csv;
        csv << csv_provenance(prov)
            << "setting,tau,sigma,gamma,seconds_bb,seconds_enum,speedup,timed,indecisive\n";
        std::vector<std::string> labels;
        std::vector<double> t_bb, t_enum;
        for (std::size_t i = 0; i < settings.size(); ++i) {
            const auto& s = settings[i];
            csv << (i + 1) << "," << s.tau_variant << "," << s.sigma_variant << "," << s.gamma
                << "," << s.seconds_bb << "," << s.seconds_enum << "," << s.speedup() << ","
                << s.timed_replicates << "," << (s.screening_indecisive ? 1 : 0) << "\n";
            labels.push_back("S" + std::to_string(i + 1));
            t_bb.push_back(s.seconds_bb);
            t_enum.push_back(s.seconds_enum);
        }
        write_text((dir / "runtime.csv").string(), csv.str());
        if (plot) {
            write_text((dir / "runtime.svg").string(),
                       svg_bars("mean wall time by setting (s)", labels, {t_bb, t_enum},
                                {"search", "enumeration"}));
        }
    } else if (study == "coverage") {
        spec.K = 10;
        spec.B = 500;
        spec.tau_kind = ExperimentSpec::TauKind::half;
        if (spec.replicates < 500) spec.replicates = 500;
        if (paper_scale) spec.replicates = 1000;
        const auto res = run_coverage_study(spec);
        std::ostringstream csv;
        csv << csv_provenance(prov) << "replicates,family_size,coverage\n"
            << res.replicates << "," << res.family.size() << "," << res.coverage << "\n";
        write_text((dir / "coverage.csv").string(), csv.str());
        summary["coverage"] = res.coverage;
    } else {
        std::cerr << "unknown experiment '" << study
                  << "'; expected table2|screening|selector|runtime|coverage\n";
        return 2;
    }

    write_text((dir / (study + "_summary.json")).string(), summary.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sensitivity sets for the false discovery proportion in matched designs"};
    app.set_config("--config");
    app.require_subcommand(1);

    CommonOptions common;
    std::string subset_text;
    std::vector<double> gammas;
    double gamma_hi = 10.0, tol = 1e-3;
    bool compare_flag = false, gsv_table = false;
    int r_tol = 0;
    std::size_t subset_size = 2;
    std::size_t cap = 20000;
    double prefilter_alpha = 0.05;
    bool use_prefilter = false;
    std::size_t replicates = 200;
    bool paper_scale = false, plot = false;
    std::string study, out_dir;

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        if (needs_input) {
            cmd->add_option("--input", common.input, "input CSV file")->required();
        }
        cmd->add_option("--alpha", common.alpha, "significance level")->default_val(0.05);
        cmd->add_option("--statistic", common.statistic,
                        "score construction: auto|raw|mh|huber[:trim]")
            ->default_val("auto");
        cmd->add_option("--seed", common.seed, "seed recorded in provenance")
            ->default_val(20240501);
        cmd->add_option("--out", common.output, "output path (default: stdout)");
    };

    auto* analyze = app.add_subcommand("analyze", "FDP sensitivity sets for a subset");
    add_common(analyze, true);
    analyze->add_option("--subset", subset_text, "outcome names or 1-based indices, comma-separated");
    analyze->add_option("--gamma", gammas, "sensitivity parameter(s)");
    analyze->add_option("--gamma-grid", gammas, "alias for --gamma with several values");
    analyze->add_flag("--compare", compare_flag, "include the naive comparator");
    analyze->add_flag("--gsv-table", gsv_table, "include generalized sensitivity values");
    analyze->add_option("--gamma-hi", gamma_hi, "upper bound of the Gamma search")->default_val(10.0);
    analyze->add_option("--tol", tol, "bisection tolerance on Gamma")->default_val(1e-3);

    auto* compare = app.add_subcommand("compare", "analyze with the naive comparator");
    add_common(compare, true);
    compare->add_option("--subset", subset_text, "outcome names or 1-based indices");
    compare->add_option("--gamma", gammas, "sensitivity parameter(s)");
    compare->add_flag("--gsv-table", gsv_table, "include generalized sensitivity values");
    compare->add_option("--gamma-hi", gamma_hi)->default_val(10.0);
    compare->add_option("--tol", tol)->default_val(1e-3);

    auto* gsv_cmd = app.add_subcommand("gsv", "generalized sensitivity value for a subset");
    add_common(gsv_cmd, true);
    gsv_cmd->add_option("--subset", subset_text)->required();
    gsv_cmd->add_option("--r-tolerance", r_tol, "tolerated true nulls r")->required();
    gsv_cmd->add_option("--gamma-hi", gamma_hi)->default_val(10.0);
    gsv_cmd->add_option("--tol", tol)->default_val(1e-3);

    auto* subsets = app.add_subcommand("subsets", "rank subsets by generalized sensitivity value");
    add_common(subsets, true);
    subsets->add_option("--subset-size", subset_size, "size of candidate subsets")->required();
    subsets->add_option("--r-tolerance", r_tol, "tolerated true nulls r")->required();
    subsets->add_option("--gamma-hi", gamma_hi)->default_val(10.0);
    subsets->add_option("--tol", tol)->default_val(1e-3);
    subsets->add_option("--cap", cap, "largest candidate count")->default_val(20000);
    subsets->add_option("--prefilter-alpha", prefilter_alpha,
                        "restrict to outcomes with p <= this at Gamma 1")
        ->expected(1);
    subsets->callback([&]() { use_prefilter = subsets->count("--prefilter-alpha") > 0; });

    auto* simulate = app.add_subcommand("simulate", "run a registered simulation study");
    add_common(simulate, false);
    simulate->add_option("study", study, "table2|screening|selector|runtime|coverage")->required();
    simulate->add_option("--replicates", replicates)->default_val(200);
    simulate->add_flag("--paper-scale", paper_scale, "full-scale replication settings");
    simulate->add_flag("--plot", plot, "emit SVG plots");
    simulate->add_option("--out-dir", out_dir, "output directory")->default_val(".");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) {
            return run_analyze(common, subset_text, gammas, compare_flag, gsv_table, gamma_hi,
                               tol);
        }
        if (compare->parsed()) {
            return run_analyze(common, subset_text, gammas, true, gsv_table, gamma_hi, tol);
        }
        if (gsv_cmd->parsed()) {
            return run_gsv(common, subset_text, r_tol, gamma_hi, tol);
        }
        if (subsets->parsed()) {
            return run_subsets(common, subset_size, r_tol, gamma_hi, tol, cap, prefilter_alpha,
                               use_prefilter);
        }
        if (simulate->parsed()) {
            return run_simulate(common, study, replicates, paper_scale, out_dir, plot);
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const SolverStall& e) {
        std::cerr << "solver diagnostics: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
