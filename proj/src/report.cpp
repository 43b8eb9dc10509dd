#include "fdpsens/report.hpp"

#include <iomanip>
#include <sstream>

namespace fdpsens {

std::string config_hash_of(const std::string& canonical) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

nlohmann::json provenance_json(const Provenance& p) {
    return nlohmann::json{{"artifact_version", kArtifactVersion},
                          {"schema_version", kSchemaVersion},
                          {"config_hash", p.config_hash},
                          {"seed", p.seed}};
}

nlohmann::json diagnostics_json(const Diagnostics& d) {
    return nlohmann::json{{"ip_invocations", d.ip_invocations},
                          {"nodes_explored", d.nodes_explored},
                          {"wall_time", d.wall_time_seconds}};
}

nlohmann::json report_json(const FdpReport& report, const std::vector<std::string>& outcome_names) {
    nlohmann::json subset = nlohmann::json::array();
    nlohmann::json names = nlohmann::json::array();
    for (auto k : report.subset) {
        subset.push_back(k + 1);  // 1-based in the serialized form
        if (k < outcome_names.size()) names.push_back(outcome_names[k]);
    }
    nlohmann::json gsv = nlohmann::json::object();
    for (const auto& [r, g] : report.gsv_table) gsv[std::to_string(r)] = g;
    nlohmann::json j{{"subset", subset},
                     {"subset_names", names},
                     {"gamma", report.gamma},
                     {"alpha", report.alpha},
                     {"v_star", report.v_star},
                     {"sensitivity_set", report.sensitivity_set},
                     {"gsv_table", gsv},
                     {"diagnostics", diagnostics_json(report.diagnostics)}};
    if (report.naive_v) j["naive_v"] = *report.naive_v;
    return j;
}

}  // namespace fdpsens
