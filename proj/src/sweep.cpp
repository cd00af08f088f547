#include "tubekit/sweep.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tubekit {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <class T>
std::vector<T> list_of(const nlohmann::json& j, const char* name, std::vector<T> fallback) {
    if (!j.contains(name)) return fallback;
    const auto& v = j.at(name);
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
}

SweepPoint point_from_json(const nlohmann::json& j) {
    SweepPoint p;
    p.kind = parse_construction_kind(j.value("kind", std::string("standard")));
    p.n = j.value("n", 2);
    p.delta = j.at("delta").get<double>();
    p.N = j.value("N", 1.0);
    p.d = j.value("d", 2);
    return p;
}

nlohmann::json point_to_json(const SweepPoint& p) {
    return {{"kind", to_string(p.kind)}, {"n", p.n}, {"delta", p.delta}, {"N", p.N}, {"d", p.d}};
}

// Large-N constructions scale like N delta^(2n-2), the others like sqrt(N) delta^(n-1).
double normalization_exponent(ConstructionKind k) {
    return k == ConstructionKind::standard || k == ConstructionKind::cascade ? 1.0 : 0.5;
}

}  // namespace

SweepConfig sweep_config_from_json(const nlohmann::json& j) {
    SweepConfig c;
    try {
        if (!j.is_object()) throw Error("sweep.config", "config must be a JSON object");
        if (j.contains("points"))
            for (const auto& p : j.at("points")) c.points.push_back(point_from_json(p));
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            for (const auto& kind : list_of<std::string>(g, "kind", {"standard"}))
                for (int n : list_of<int>(g, "n", {2}))
                    for (double delta : list_of<double>(g, "delta", {}))
                        for (double N : list_of<double>(g, "N", {1.0}))
                            for (int d : list_of<int>(g, "d", {2}))
                                c.points.push_back({parse_construction_kind(kind), n, delta, N, d});
        }
        c.method = parse_volume_method(j.value("method", std::string("mc")));
        c.budget = j.value("budget", c.budget);
        c.seed = j.value("seed", c.seed);
        c.allow_coarse_delta = j.value("allow_coarse_delta", false);
    } catch (const nlohmann::json::exception& e) {
        throw Error("sweep.config", std::string("bad sweep config: ") + e.what());
    }
    return c;
}

nlohmann::json sweep_config_to_json(const SweepConfig& c) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back(point_to_json(p));
    return {{"points", pts},
            {"method", to_string(c.method)},
            {"budget", c.budget},
            {"seed", c.seed},
            {"allow_coarse_delta", c.allow_coarse_delta}};
}

void validate_sweep_config(const SweepConfig& c) {
    if (c.points.empty()) throw Error("sweep.config", "sweep grid is empty");
    if (c.budget < 1) throw Error("sweep.config", "budget must be positive");
    for (const auto& p : c.points) {
        if (!(p.delta > 0.0 && p.delta < 1.0)) throw Error("sweep.config", "delta must lie in (0, 1)");
        if (!c.allow_coarse_delta && !(p.delta < 0.01))
            throw Error("sweep.config", "delta " + fmt(p.delta) + " is not below 1/100; set allow_coarse_delta");
    }
}

std::string point_key(const SweepPoint& p, const SweepConfig& c) {
    const std::string canon = to_string(p.kind) + "|" + std::to_string(p.n) + "|" + fmt(p.delta) + "|" + fmt(p.N) +
                              "|" + std::to_string(p.d) + "|" + to_string(c.method) + "|" +
                              std::to_string(c.budget) + "|" + std::to_string(c.seed);
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

ScalingRecord run_point(const SweepPoint& p, const SweepConfig& cfg) {
    ScalingRecord r;
    r.point = p;
    r.key = point_key(p, cfg);
    const auto start = std::chrono::steady_clock::now();
    try {
        ConstructionSpec s;
        s.kind = p.kind;
        s.n = p.n;
        s.delta = p.delta;
        s.N_target = p.N;
        s.d = p.d;
        s.paper_regime = !cfg.allow_coarse_delta;
        const TubeFamily f = build_construction(s).merged();
        if (f.empty()) throw Error("sweep.empty", "construction produced no tubes");
        VolumeOptions vo;
        vo.method = cfg.method;
        vo.budget = cfg.budget;
        vo.seed = mix_seed(cfg.seed, fnv1a(r.key));
        const VolumeEstimate v = union_volume(f, vo);
        r.N = f.size();
        r.volume = v.value;
        r.abs_error_95 = v.abs_error_95;
        r.lower_bound = lower_bound(static_cast<double>(r.N), p.delta, p.n);
        r.ratio = r.volume / r.lower_bound;
        r.ok = true;
    } catch (const Error& e) {
        r.error_code = e.code();
        r.error_message = e.what();
    }
    r.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::vector<RegimeSummary> ScalingReport::summary() const {
    std::map<std::string, RegimeSummary> by;
    for (const auto& r : records) {
        if (!r.ok) continue;
        auto [it, fresh] = by.try_emplace(to_string(r.point.kind));
        RegimeSummary& s = it->second;
        s.kind = it->first;
        s.min_ratio = fresh ? r.ratio : std::min(s.min_ratio, r.ratio);
        s.max_ratio = fresh ? r.ratio : std::max(s.max_ratio, r.ratio);
        ++s.records;
    }
    std::vector<RegimeSummary> out;
    for (auto& [k, s] : by) out.push_back(s);
    return out;
}

nlohmann::json record_to_json(const ScalingRecord& r) {
    nlohmann::json j = point_to_json(r.point);
    j["key"] = r.key;
    j["ok"] = r.ok;
    if (!r.ok) {
        j["error"] = {{"code", r.error_code}, {"message", r.error_message}};
        return j;
    }
    j["tubes"] = r.N;
    j["volume"] = r.volume;
    j["abs_error_95"] = r.abs_error_95;
    j["lower_bound"] = r.lower_bound;
    j["ratio"] = r.ratio;
    return j;
}

ScalingRecord record_from_json(const nlohmann::json& j) {
    ScalingRecord r;
    r.point = point_from_json(j);
    r.key = j.at("key").get<std::string>();
    r.ok = j.at("ok").get<bool>();
    if (!r.ok) {
        r.error_code = j.at("error").at("code").get<std::string>();
        r.error_message = j.at("error").at("message").get<std::string>();
        return r;
    }
    r.N = j.at("tubes").get<std::size_t>();
    r.volume = j.at("volume").get<double>();
    r.abs_error_95 = j.at("abs_error_95").get<double>();
    r.lower_bound = j.at("lower_bound").get<double>();
    r.ratio = r.volume / r.lower_bound;
    return r;
}

nlohmann::json report_to_json(const ScalingReport& r) {
    nlohmann::json j;
    j["records"] = nlohmann::json::array();
    for (const auto& rec : r.records) j["records"].push_back(record_to_json(rec));
    j["summary"] = nlohmann::json::array();
    for (const auto& s : r.summary())
        j["summary"].push_back(
            {{"kind", s.kind}, {"min_ratio", s.min_ratio}, {"max_ratio", s.max_ratio}, {"records", s.records}});
    return j;
}

std::string report_to_csv(const ScalingReport& r) {
    std::ostringstream out;
    out << "key,kind,n,d,delta,N_target,tubes,volume,abs_error_95,lower_bound,ratio,status\n";
    for (const auto& rec : r.records) {
        out << rec.key << ',' << to_string(rec.point.kind) << ',' << rec.point.n << ',' << rec.point.d << ','
            << fmt(rec.point.delta) << ',' << fmt(rec.point.N) << ',';
        if (rec.ok)
            out << rec.N << ',' << fmt(rec.volume) << ',' << fmt(rec.abs_error_95) << ',' << fmt(rec.lower_bound)
                << ',' << fmt(rec.ratio) << ",ok\n";
        else
            out << ",,,,," << rec.error_code << '\n';
    }
    return out.str();
}

ScalingReport run_sweep(const SweepConfig& cfg, const std::string& out_dir) {
    validate_sweep_config(cfg);
    namespace fs = std::filesystem;
    std::map<std::string, ScalingRecord> done;
    if (!out_dir.empty()) {
        const fs::path prior = fs::path(out_dir) / "report.json";
        if (fs::exists(prior)) {
            std::ifstream in(prior);
            try {
                const nlohmann::json j = nlohmann::json::parse(in);
                for (const auto& rec : j.at("records")) {
                    ScalingRecord r = record_from_json(rec);
                    if (r.ok) done.emplace(r.key, r);
                }
            } catch (const nlohmann::json::exception&) {
                // An unreadable prior report is recomputed from scratch.
                done.clear();
            }
        }
    }
    ScalingReport report;
    for (const auto& p : cfg.points) {
        const auto it = done.find(point_key(p, cfg));
        report.records.push_back(it != done.end() ? it->second : run_point(p, cfg));
    }
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw Error("io.write", "cannot create " + out_dir + ": " + ec.message());
        const fs::path dir(out_dir);
        auto write = [&](const char* name, const std::string& text) {
            std::ofstream out(dir / name);
            out << text;
            if (!out) throw Error("io.write", "cannot write " + (dir / name).string());
        };
        write("report.json", report_to_json(report).dump(1) + "\n");
        write("report.csv", report_to_csv(report));
        std::ostringstream timing;
        timing << "key,runtime_s\n";
        for (const auto& rec : report.records) timing << rec.key << ',' << rec.runtime << '\n';
        write("timing.csv", timing.str());
    }
    return report;
}

std::vector<RegressionFit> regime_regression(const ScalingReport& r) {
    std::map<std::pair<std::string, int>, std::vector<const ScalingRecord*>> groups;
    for (const auto& rec : r.records)
        if (rec.ok && rec.volume > 0.0) groups[{to_string(rec.point.kind), rec.point.n}].push_back(&rec);
    if (groups.empty()) throw Error("sweep.underdetermined", "no successful records to fit");
    std::vector<RegressionFit> out;
    for (const auto& [key, recs] : groups) {
        std::set<double> deltas;
        for (const auto* rec : recs) deltas.insert(rec->point.delta);
        if (deltas.size() < 3)
            throw Error("sweep.underdetermined", key.first + " (n = " + std::to_string(key.second) + ") has " +
                                                     std::to_string(deltas.size()) + " delta values, need 3");
        RegressionFit fit;
        fit.kind = key.first;
        fit.n = key.second;
        fit.exponent_N = normalization_exponent(recs.front()->point.kind);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto* rec : recs) {
            const double x = std::log(rec->point.delta);
            const double y = std::log(rec->volume) - fit.exponent_N * std::log(static_cast<double>(rec->N));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double m = static_cast<double>(recs.size());
        fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        fit.intercept = (sy - fit.slope * sx) / m;
        fit.points = recs.size();
        out.push_back(fit);
    }
    return out;
}

nlohmann::json regression_to_json(const std::vector<RegressionFit>& fits) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : fits)
        a.push_back({{"kind", f.kind},
                     {"n", f.n},
                     {"exponent_N", f.exponent_N},
                     {"slope", f.slope},
                     {"intercept", f.intercept},
                     {"points", f.points}});
    return a;
}

}  // namespace tubekit
