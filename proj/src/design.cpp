#include "fdpsens/design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace fdpsens {

MatchedDesign MatchedDesign::from_strata(std::vector<Stratum> strata) {
    MatchedDesign d;
    d.strata_ = std::move(strata);
    d.offsets_.reserve(d.strata_.size());
    d.treated_.reserve(d.strata_.size());
    std::set<std::string> stratum_ids;
    std::size_t offset = 0;
    for (const auto& s : d.strata_) {
        if (!stratum_ids.insert(s.stratum_id).second) {
            throw ValidationError("duplicate stratum_id '" + s.stratum_id + "'");
        }
        if (s.units.size() < 2) {
            throw ValidationError("stratum '" + s.stratum_id + "' has fewer than 2 units");
        }
        std::set<std::string> unit_ids;
        std::size_t n_treated = 0;
        std::size_t treated_at = 0;
        for (std::size_t j = 0; j < s.units.size(); ++j) {
            if (!unit_ids.insert(s.units[j].unit_id).second) {
                throw ValidationError("duplicate unit_id '" + s.units[j].unit_id +
                                      "' in stratum '" + s.stratum_id + "'");
            }
            if (s.units[j].treated) {
                ++n_treated;
                treated_at = j;
            }
        }
        if (n_treated != 1) {
            throw ValidationError("stratum '" + s.stratum_id + "' has " +
                                  std::to_string(n_treated) +
                                  " treated units; exactly one is required");
        }
        d.offsets_.push_back(offset);
        d.treated_.push_back(treated_at);
        offset += s.units.size();
        if (s.units.size() != 2) d.all_pairs_ = false;
    }
    d.n_units_ = offset;
    if (d.strata_.empty()) {
        throw ValidationError("design contains no strata");
    }
    return d;
}

unsigned long long MatchedDesign::assignment_count() const {
    unsigned long long total = 1;
    const unsigned long long cap = std::numeric_limits<long long>::max();
    for (const auto& s : strata_) {
        unsigned long long n = s.units.size();
        if (total > cap / n) return cap;
        total *= n;
    }
    return total;
}

std::vector<double> OutcomeMatrix::column(std::size_t k) const {
    std::vector<double> col(n_units);
    for (std::size_t i = 0; i < n_units; ++i) col[i] = at(i, k);
    return col;
}

std::vector<double> ScoreMatrix::column(std::size_t k) const {
    std::vector<double> col(n_units);
    for (std::size_t i = 0; i < n_units; ++i) col[i] = at(i, k);
    return col;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trimmed(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, std::size_t row, const std::string& column,
                    const std::string& source) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        if (!std::isfinite(v)) throw std::invalid_argument("not finite");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(source + ": row " + std::to_string(row) + ", column '" + column +
                              "': cannot parse '" + s + "' as a number");
    }
}

}  // namespace

DesignData parse_design_csv(std::istream& in, const std::string& source_name,
                            const CsvOptions& options) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError(source_name + ": empty file");
    }
    auto header = split_csv_line(line);
    for (auto& h : header) h = trimmed(h);
    if (header.size() < 4 || header[0] != "stratum_id" || header[1] != "unit_id" ||
        header[2] != "treated") {
        throw ValidationError(source_name +
                              ": header must start with stratum_id,unit_id,treated and name at "
                              "least one outcome column");
    }
    const std::size_t n_outcomes = header.size() - 3;

    std::vector<Stratum> strata;
    std::vector<std::size_t> stratum_of;  // by unit order
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trimmed(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError(source_name + ": row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
        }
        const std::string sid = trimmed(fields[0]);
        const std::string uid = trimmed(fields[1]);
        const std::string tr = trimmed(fields[2]);
        if (sid.empty() || uid.empty()) {
            throw ValidationError(source_name + ": row " + std::to_string(row) +
                                  ": empty stratum_id or unit_id");
        }
        bool treated;
        if (tr == "0") {
            treated = false;
        } else if (tr == "1") {
            treated = true;
        } else {
            throw ValidationError(source_name + ": row " + std::to_string(row) +
                                  ", column 'treated': expected 0 or 1, got '" + tr + "'");
        }
        if (strata.empty() || strata.back().stratum_id != sid) {
            // Strata must be contiguous blocks; a revisited id is caught by
            // the duplicate check in from_strata.
            strata.push_back(Stratum{sid, {}});
        }
        strata.back().units.push_back(Unit{uid, treated});
        for (std::size_t k = 0; k < n_outcomes; ++k) {
            values.push_back(parse_number(trimmed(fields[3 + k]), row, header[3 + k], source_name));
        }
    }

    OutcomeMatrix outcomes;
    outcomes.n_outcomes = n_outcomes;
    outcomes.n_units = values.size() / std::max<std::size_t>(1, n_outcomes);
    outcomes.names.assign(header.begin() + 3, header.end());
    outcomes.values = std::move(values);
    outcomes.kinds.resize(n_outcomes, OutcomeKind::continuous);
    for (std::size_t k = 0; k < n_outcomes; ++k) {
        const auto forced = options.kind_overrides.find(outcomes.names[k]);
        if (forced != options.kind_overrides.end()) {
            outcomes.kinds[k] = forced->second;
            continue;
        }
        bool binary = outcomes.n_units > 0;
        for (std::size_t i = 0; i < outcomes.n_units && binary; ++i) {
            double v = outcomes.at(i, k);
            binary = (v == 0.0 || v == 1.0);
        }
        if (binary) outcomes.kinds[k] = OutcomeKind::binary;
    }

    MatchedDesign design = MatchedDesign::from_strata(std::move(strata));
    if (design.n_units() != outcomes.n_units) {
        throw ValidationError(source_name + ": internal row accounting mismatch");
    }
    return DesignData{std::move(design), std::move(outcomes)};
}

DesignData load_design_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open '" + path + "'");
    }
    return parse_design_csv(in, path, options);
}

void write_design_csv(const std::string& path, const MatchedDesign& design,
                      const OutcomeMatrix& outcomes) {
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot open '" + path + "' for writing");
    }
    out << "stratum_id,unit_id,treated";
    for (const auto& name : outcomes.names) out << ',' << name;
    out << '\n';
    out << std::setprecision(17);
    std::size_t unit = 0;
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const auto& s = design.stratum(i);
        for (const auto& u : s.units) {
            out << s.stratum_id << ',' << u.unit_id << ',' << (u.treated ? 1 : 0);
            for (std::size_t k = 0; k < outcomes.n_outcomes; ++k) {
                out << ',' << outcomes.at(unit, k);
            }
            out << '\n';
            ++unit;
        }
    }
}

double sum_statistic(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k) {
    if (k >= scores.n_outcomes) {
        throw std::out_of_range("sum_statistic: outcome index " + std::to_string(k) +
                                " out of range (K=" + std::to_string(scores.n_outcomes) + ")");
    }
    double t = 0.0;
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        t += scores.at(design.offset(i) + design.treated_index(i), k);
    }
    return t;
}

std::vector<double> mh_scores(const OutcomeMatrix& outcomes, std::size_t k) {
    if (k >= outcomes.n_outcomes) throw std::out_of_range("mh_scores: outcome index out of range");
    if (outcomes.kinds[k] != OutcomeKind::binary) {
        throw ValidationError("mh_scores: outcome '" + outcomes.names[k] + "' is not binary");
    }
    return outcomes.column(k);
}

std::vector<double> raw_scores(const OutcomeMatrix& outcomes, std::size_t k) {
    if (k >= outcomes.n_outcomes) throw std::out_of_range("raw_scores: outcome index out of range");
    return outcomes.column(k);
}

namespace {
double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double huber_psi(double y, double trim) {
    if (y == 0.0) return 0.0;
    double a = std::min(1.0, std::abs(y) / trim);
    return y > 0.0 ? a : -a;
}
}  // namespace

std::vector<double> huber_m_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                                   std::size_t k, double trim) {
    if (k >= outcomes.n_outcomes) {
        throw std::out_of_range("huber_m_scores: outcome index out of range");
    }
    if (!(trim > 0.0)) throw std::invalid_argument("huber_m_scores: trim must be positive");

    // Scale: median absolute treated-vs-control difference across all strata.
    std::vector<double> abs_diffs;
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const std::size_t off = design.offset(i);
        const std::size_t tj = design.treated_index(i);
        const double rt = outcomes.at(off + tj, k);
        for (std::size_t j = 0; j < design.stratum_size(i); ++j) {
            if (j == tj) continue;
            abs_diffs.push_back(std::abs(rt - outcomes.at(off + j, k)));
        }
    }
    const double s = median_of(std::move(abs_diffs));
    if (s == 0.0) {
        throw ValidationError("huber_m_scores: outcome '" + outcomes.names[k] +
                              "' has zero median treated-control difference (degenerate scale)");
    }

    std::vector<double> q(outcomes.n_units, 0.0);
    for (std::size_t i = 0; i < design.n_strata(); ++i) {
        const std::size_t off = design.offset(i);
        const std::size_t n = design.stratum_size(i);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t j2 = 0; j2 < n; ++j2) {
                if (j2 == j) continue;
                acc += huber_psi((outcomes.at(off + j, k) - outcomes.at(off + j2, k)) / s, trim);
            }
            q[off + j] = acc / static_cast<double>(n);
        }
    }
    return q;
}

ScoreMatrix build_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                         const std::vector<StatisticChoice>& choices) {
    if (choices.size() != outcomes.n_outcomes) {
        throw std::invalid_argument("build_scores: one statistic choice per outcome required");
    }
    ScoreMatrix scores;
    scores.n_units = outcomes.n_units;
    scores.n_outcomes = outcomes.n_outcomes;
    scores.q.resize(outcomes.n_units * outcomes.n_outcomes, 0.0);
    scores.statistic_labels.resize(outcomes.n_outcomes);
    for (std::size_t k = 0; k < outcomes.n_outcomes; ++k) {
        StatisticChoice choice = choices[k];
        if (choice.kind == StatisticChoice::Kind::auto_dispatch) {
            choice.kind = outcomes.kinds[k] == OutcomeKind::binary ? StatisticChoice::Kind::mh
                                                                   : StatisticChoice::Kind::huber;
        }
        std::vector<double> col;
        switch (choice.kind) {
            case StatisticChoice::Kind::mh:
                col = mh_scores(outcomes, k);
                scores.statistic_labels[k] = "mh";
                break;
            case StatisticChoice::Kind::huber: {
                col = huber_m_scores(design, outcomes, k, choice.trim);
                std::ostringstream label;
                label << "huber(" << choice.trim << ")";
                scores.statistic_labels[k] = label.str();
                break;
            }
            case StatisticChoice::Kind::raw:
                col = raw_scores(outcomes, k);
                scores.statistic_labels[k] = "raw";
                break;
            case StatisticChoice::Kind::auto_dispatch:
                break;  // unreachable
        }
        for (std::size_t i = 0; i < outcomes.n_units; ++i) {
            scores.q[i * outcomes.n_outcomes + k] = col[i];
        }
    }
    return scores;
}

ScoreMatrix build_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                         const StatisticChoice& choice) {
    return build_scores(design, outcomes,
                        std::vector<StatisticChoice>(outcomes.n_outcomes, choice));
}

}  // namespace fdpsens
