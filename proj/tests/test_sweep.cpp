#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tubekit/sweep.hpp"

using namespace tubekit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("tubekit_sweep_" + name);
    fs::remove_all(d);
    return d;
}

SweepConfig small_config() {
    SweepConfig c;
    c.allow_coarse_delta = true;
    c.budget = 50000;
    c.seed = 5;
    c.points = {{ConstructionKind::standard, 2, 1.0 / 16, 1.0, 2}, {ConstructionKind::small_cap, 2, 1.0 / 32, 64.0, 2}};
    return c;
}

ScalingRecord synthetic(ConstructionKind kind, double delta, double N, double volume) {
    ScalingRecord r;
    r.ok = true;
    r.point = {kind, 2, delta, N, 2};
    r.N = static_cast<std::size_t>(N);
    r.volume = volume;
    return r;
}

}  // namespace

TEST(Regression, RecoversExactPowerLaw) {
    ScalingReport rep;
    for (double delta : {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}) {
        const double N_std = 1.0 / (delta * delta);
        rep.records.push_back(synthetic(ConstructionKind::standard, delta, N_std, 3.0 * N_std * std::pow(delta, 1.5)));
        rep.records.push_back(synthetic(ConstructionKind::small_cap, delta, 256.0, 2.0 * 16.0 * delta));
    }
    const auto fits = regime_regression(rep);
    ASSERT_EQ(fits.size(), 2u);
    for (const RegressionFit& f : fits) {
        EXPECT_EQ(f.points, 4u);
        if (f.kind == "standard") {
            EXPECT_DOUBLE_EQ(f.exponent_N, 1.0);
            EXPECT_NEAR(f.slope, 1.5, 1e-12);
            EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
        } else {
            EXPECT_DOUBLE_EQ(f.exponent_N, 0.5);
            EXPECT_NEAR(f.slope, 1.0, 1e-12);
            EXPECT_NEAR(f.intercept, std::log(2.0), 1e-12);
        }
    }
}

TEST(Regression, TwoDeltasAreUnderdetermined) {
    ScalingReport rep;
    rep.records.push_back(synthetic(ConstructionKind::standard, 1.0 / 16, 100, 1.0));
    rep.records.push_back(synthetic(ConstructionKind::standard, 1.0 / 32, 400, 2.0));
    rep.records.push_back(synthetic(ConstructionKind::standard, 1.0 / 32, 400, 2.0));
    try {
        regime_regression(rep);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "sweep.underdetermined");
    }
}

TEST(SweepConfig, ValidationAndParsing) {
    SweepConfig empty;
    try {
        validate_sweep_config(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "sweep.config");
    }
    SweepConfig coarse = small_config();
    coarse.allow_coarse_delta = false;
    EXPECT_THROW(validate_sweep_config(coarse), Error);
    EXPECT_NO_THROW(validate_sweep_config(small_config()));

    const nlohmann::json j = {{"grid", {{"kind", {"standard", "small_cap"}}, {"delta", {0.005, 0.0025}}, {"N", {16}}}},
                              {"budget", 1000}};
    const SweepConfig c = sweep_config_from_json(j);
    EXPECT_EQ(c.points.size(), 4u);
    EXPECT_EQ(c.budget, 1000);
    const SweepConfig back = sweep_config_from_json(sweep_config_to_json(c));
    EXPECT_EQ(sweep_config_to_json(back), sweep_config_to_json(c));
    for (std::size_t i = 0; i < c.points.size(); ++i) EXPECT_EQ(point_key(back.points[i], back), point_key(c.points[i], c));
    EXPECT_THROW(sweep_config_from_json(nlohmann::json::array()), Error);
}

TEST(SweepPoint, StandardRecordMatchesDefinitions) {
    const SweepConfig cfg = small_config();
    const ScalingRecord r = run_point(cfg.points[0], cfg);
    ASSERT_TRUE(r.ok) << r.error_message;
    EXPECT_EQ(r.N, standard_configuration(2, 1.0 / 16, {}, false).size());
    EXPECT_GT(r.volume, 0.0);
    EXPECT_GT(r.abs_error_95, 0.0);
    EXPECT_NEAR(r.lower_bound, lower_bound(static_cast<double>(r.N), 1.0 / 16, 2), 1e-15);
    EXPECT_NEAR(r.ratio, r.volume / r.lower_bound, 1e-12);
    EXPECT_EQ(r.key, point_key(cfg.points[0], cfg));
}

TEST(SweepPoint, FailingPointIsRecordedNotThrown) {
    SweepConfig cfg = small_config();
    cfg.points = {{ConstructionKind::small_cap, 2, 1.0 / 16, 1e6, 2}};
    const ScalingReport rep = run_sweep(cfg);
    ASSERT_EQ(rep.records.size(), 1u);
    EXPECT_FALSE(rep.records[0].ok);
    EXPECT_EQ(rep.records[0].error_code, "regime.violation");
}

TEST(Sweep, ReportIsByteIdenticalAcrossRuns) {
    const fs::path a = fresh_dir("a"), b = fresh_dir("b");
    run_sweep(small_config(), a.string());
    run_sweep(small_config(), b.string());
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
    const std::string csv = slurp(a / "report.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "key,kind,n,d,delta,N_target,tubes,volume,abs_error_95,lower_bound,ratio,status");
    EXPECT_TRUE(fs::exists(a / "timing.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Sweep, ResumesFromExistingRecords) {
    const fs::path dir = fresh_dir("resume");
    SweepConfig cfg = small_config();
    cfg.points.resize(1);
    run_sweep(cfg, dir.string());
    // Plant a sentinel volume; a resumed run must reuse the stored record.
    nlohmann::json j = nlohmann::json::parse(slurp(dir / "report.json"));
    j["records"][0]["volume"] = 123.0;
    std::ofstream(dir / "report.json") << j.dump(2);
    const ScalingReport rep = run_sweep(small_config(), dir.string());
    ASSERT_EQ(rep.records.size(), 2u);
    EXPECT_DOUBLE_EQ(rep.records[0].volume, 123.0);
    EXPECT_TRUE(rep.records[1].ok);
    // A changed budget changes the key, so the point is recomputed.
    SweepConfig other = small_config();
    other.budget = 60000;
    EXPECT_NE(run_sweep(other, dir.string()).records[0].volume, 123.0);
    fs::remove_all(dir);
}

TEST(Sweep, SummaryCoversEachKind) {
    const ScalingReport rep = run_sweep(small_config());
    const auto s = rep.summary();
    ASSERT_EQ(s.size(), 2u);
    for (const RegimeSummary& r : s) {
        EXPECT_EQ(r.records, 1u);
        EXPECT_LE(r.min_ratio, r.max_ratio);
        EXPECT_GT(r.min_ratio, 0.0);
    }
    const nlohmann::json j = report_to_json(rep);
    ASSERT_EQ(j.at("records").size(), 2u);
    EXPECT_FALSE(j.at("records")[0].contains("runtime"));
    const ScalingRecord back = record_from_json(j.at("records")[1]);
    EXPECT_EQ(record_to_json(back), record_to_json(rep.records[1]));
}
