#ifndef FDPSENS_DESIGN_HPP
#define FDPSENS_DESIGN_HPP

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdpsens {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Unit {
    std::string unit_id;
    bool treated = false;
};

struct Stratum {
    std::string stratum_id;
    std::vector<Unit> units;
};

// A finely stratified design: every stratum holds one treated unit and at
// least one control. Immutable after construction; validation happens once.
class MatchedDesign {
  public:
    static MatchedDesign from_strata(std::vector<Stratum> strata);

    std::size_t n_strata() const { return strata_.size(); }
    std::size_t n_units() const { return n_units_; }
    const Stratum& stratum(std::size_t i) const { return strata_[i]; }
    std::size_t stratum_size(std::size_t i) const { return strata_[i].units.size(); }
    // Flat index of the first unit of stratum i; units are stored in file order.
    std::size_t offset(std::size_t i) const { return offsets_[i]; }
    // Within-stratum index of the treated unit.
    std::size_t treated_index(std::size_t i) const { return treated_[i]; }

    bool all_pairs() const { return all_pairs_; }
    // Product of stratum sizes, saturating at 2^63-1.
    unsigned long long assignment_count() const;

  private:
    std::vector<Stratum> strata_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> treated_;
    std::size_t n_units_ = 0;
    bool all_pairs_ = true;
};

enum class OutcomeKind { continuous, binary };

struct OutcomeMatrix {
    std::size_t n_units = 0;
    std::size_t n_outcomes = 0;
    std::vector<std::string> names;        // length K
    std::vector<OutcomeKind> kinds;        // length K
    std::vector<double> values;            // N x K, row-major by unit

    double at(std::size_t unit, std::size_t k) const { return values[unit * n_outcomes + k]; }
    std::vector<double> column(std::size_t k) const;
};

struct ScoreMatrix {
    std::size_t n_units = 0;
    std::size_t n_outcomes = 0;
    std::vector<std::string> statistic_labels;  // length K
    std::vector<double> q;                      // N x K, row-major by unit

    double at(std::size_t unit, std::size_t k) const { return q[unit * n_outcomes + k]; }
    std::vector<double> column(std::size_t k) const;
};

struct DesignData {
    MatchedDesign design;
    OutcomeMatrix outcomes;
};

// CSV interface: header `stratum_id,unit_id,treated,<outcome names...>`.
// Binary kind is inferred for {0,1}-valued columns unless overridden by name.
struct CsvOptions {
    std::map<std::string, OutcomeKind> kind_overrides;
};

DesignData load_design_csv(const std::string& path, const CsvOptions& options = {});
DesignData parse_design_csv(std::istream& in, const std::string& source_name,
                            const CsvOptions& options = {});
void write_design_csv(const std::string& path, const MatchedDesign& design,
                      const OutcomeMatrix& outcomes);

// T_k = sum of treated-unit scores for outcome k.
double sum_statistic(const MatchedDesign& design, const ScoreMatrix& scores, std::size_t k);

// Score constructions.
std::vector<double> mh_scores(const OutcomeMatrix& outcomes, std::size_t k);
std::vector<double> huber_m_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                                   std::size_t k, double trim);
std::vector<double> raw_scores(const OutcomeMatrix& outcomes, std::size_t k);

struct StatisticChoice {
    enum class Kind { auto_dispatch, mh, huber, raw } kind = Kind::auto_dispatch;
    double trim = 2.5;
};

ScoreMatrix build_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                         const std::vector<StatisticChoice>& choices);
ScoreMatrix build_scores(const MatchedDesign& design, const OutcomeMatrix& outcomes,
                         const StatisticChoice& choice = {});

}  // namespace fdpsens

#endif
