#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tubekit/constructions.hpp"
#include "tubekit/measure.hpp"

namespace tubekit {

struct SweepPoint {
    ConstructionKind kind = ConstructionKind::standard;
    int n = 2;
    double delta = 1.0 / 128;
    //! Requested count for small_cap, embedded and slab.
    double N = 1.0;
    int d = 2;
};

struct SweepConfig {
    std::vector<SweepPoint> points;
    VolumeMethod method = VolumeMethod::monte_carlo;
    std::int64_t budget = 1 << 20;
    std::uint64_t seed = 0;
    //! Accept delta >= 1/100.
    bool allow_coarse_delta = false;
};

//! Explicit "points" and/or a cartesian "grid" of kind, n, delta, N, d.
SweepConfig sweep_config_from_json(const nlohmann::json& j);
nlohmann::json sweep_config_to_json(const SweepConfig& c);

//! Throws sweep.config for an empty grid or delta outside (0, 1/100) without the override.
void validate_sweep_config(const SweepConfig& c);

//! Stable hex key of a point under the given config settings.
std::string point_key(const SweepPoint& p, const SweepConfig& c);

struct ScalingRecord {
    std::string key;
    SweepPoint point;
    bool ok = false;
    std::string error_code;
    std::string error_message;
    //! Realized tube count.
    std::size_t N = 0;
    double volume = 0.0;
    double abs_error_95 = 0.0;
    double lower_bound = 0.0;
    double ratio = 0.0;
    //! Seconds; kept out of the report body.
    double runtime = 0.0;
};

struct RegimeSummary {
    std::string kind;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    std::size_t records = 0;
};

struct ScalingReport {
    std::vector<ScalingRecord> records;
    std::vector<RegimeSummary> summary() const;
};

//! Runs every point in order. With a non-empty out_dir, records already in
//! out_dir/report.json with a matching key are reused and report.json,
//! report.csv and timing.csv are rewritten.
ScalingReport run_sweep(const SweepConfig& cfg, const std::string& out_dir = "");

ScalingRecord run_point(const SweepPoint& p, const SweepConfig& cfg);

struct RegressionFit {
    std::string kind;
    int n = 2;
    //! Volume is normalized by N^exponent_N before fitting against delta.
    double exponent_N = 1.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

//! Least-squares slope of log(volume / N^p) against log(delta) per (kind, n),
//! p = 1 for standard and cascade, 1/2 otherwise. Throws sweep.underdetermined
//! when a group has fewer than 3 distinct delta values.
std::vector<RegressionFit> regime_regression(const ScalingReport& r);

nlohmann::json record_to_json(const ScalingRecord& r);
ScalingRecord record_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const ScalingReport& r);
std::string report_to_csv(const ScalingReport& r);
nlohmann::json regression_to_json(const std::vector<RegressionFit>& fits);

}  // namespace tubekit
