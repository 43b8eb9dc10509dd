#ifndef FDPSENS_REPORT_HPP
#define FDPSENS_REPORT_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

#include "fdpsens/closed_fdp.hpp"

namespace fdpsens {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
};

// FNV-1a hash of a canonical configuration string, hex-encoded.
std::string config_hash_of(const std::string& canonical);

nlohmann::json provenance_json(const Provenance& p);
nlohmann::json diagnostics_json(const Diagnostics& d);
nlohmann::json report_json(const FdpReport& report, const std::vector<std::string>& outcome_names);

}  // namespace fdpsens

#endif
