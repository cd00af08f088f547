#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tubekit/combinatorics.hpp"
#include "tubekit/constructions.hpp"
#include "tubekit/measure.hpp"
#include "tubekit/packing.hpp"
#include "tubekit/rigidity.hpp"
#include "tubekit/sweep.hpp"
#include "tubekit/voxel.hpp"
#include "tubekit/xray.hpp"

using nlohmann::json;
using namespace tubekit;

namespace {

struct Global {
    std::uint64_t seed = 0;
    int threads = thread_count();
    std::string format = "json";
    int verbosity = 0;
    bool paper_regime = false;
};

void flatten(const json& j, const std::string& path, std::vector<std::pair<std::string, std::string>>& rows) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), path.empty() ? it.key() : path + "." + it.key(), rows);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "[" + std::to_string(i) + "]", rows);
    } else {
        rows.emplace_back(path, j.is_string() ? j.get<std::string>() : j.dump());
    }
}

void emit(const Global& g, const json& j) {
    if (g.format == "csv") {
        std::vector<std::pair<std::string, std::string>> rows;
        flatten(j, "", rows);
        std::cout << "field,value\n";
        for (const auto& [k, v] : rows) std::cout << k << ',' << v << '\n';
    } else {
        std::cout << j.dump(1) << '\n';
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(1) << '\n';
    if (!out) throw Error("io.unwritable", "cannot write " + path);
}

json read_json(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error("io.not_found", "no such file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("io.unreadable", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error("io.parse", path + ": " + e.what());
    }
}

json vec_json(const Vec& v) { return v.dim() ? json(v.to_vector()) : json::array(); }

json convexity_json(const ConvexityReport& r) {
    return {{"m", r.m},
            {"index", r.index},
            {"abs_error_95", r.abs_error_95},
            {"line_samples", r.line_samples},
            {"volume", r.volume},
            {"power_integral", r.power_integral},
            {"power_error_95", r.power_error_95}};
}

void log(const Global& g, const std::string& msg) {
    if (g.verbosity >= 1) std::cerr << msg << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tubekit: delta-tube unions, convexity index and detection tools"};
    app.require_subcommand(1);
    // Global options may follow the subcommand.
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "Seed for all randomness");
    app.add_option("--threads", g.threads, "Worker threads (TUBEKIT_THREADS overrides)")->check(CLI::PositiveNumber);
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_flag("-v,--verbose", g.verbosity, "Human-readable progress on stderr");
    app.add_flag("--paper-regime", g.paper_regime, "Reject delta >= 1/100");

    std::function<json()> action;

    // construct
    auto* construct = app.add_subcommand("construct", "Build a sharp or extremal tube family");
    std::string kind = "standard", out_path;
    int n = 2, d = 2;
    double delta = 1.0 / 128, N = 1.0;
    std::vector<double> center;
    construct->add_option("--kind", kind, "standard, small_cap, embedded, slab or cascade");
    construct->add_option("--n", n, "Ambient dimension");
    construct->add_option("--delta", delta, "Tube width")->required();
    construct->add_option("--N", N, "Requested tube count");
    construct->add_option("--d", d, "Inner dimension (embedded, slab)");
    construct->add_option("--center", center, "Center O");
    construct->add_option("--out", out_path, "Family JSON output");
    construct->callback([&] {
        action = [&] {
            ConstructionSpec s;
            s.kind = parse_construction_kind(kind);
            s.n = n;
            s.delta = delta;
            s.N_target = N;
            s.d = d;
            if (!center.empty()) s.center = Vec::from(center);
            s.paper_regime = g.paper_regime;
            if (g.paper_regime) check_paper_regime(delta);
            const ConstructionResult r = build_construction(s);
            const TubeFamily f = r.merged();
            json j = {{"kind", kind}, {"n", n}, {"delta", delta}, {"tubes", f.size()}, {"components", r.components.size()}};
            if (r.slab) j["E"] = {{"lo", vec_json(r.slab->lo)}, {"hi", vec_json(r.slab->hi)}};
            if (out_path.empty()) return family_to_json(f);
            save_family(f, out_path);
            j["out"] = out_path;
            return j;
        };
    });

    // volume
    auto* volume = app.add_subcommand("volume", "Union volume and multiplicity of a family");
    std::string family_path, method = "mc";
    std::int64_t budget = 1 << 22;
    bool with_multiplicity = false;
    volume->add_option("--family", family_path, "Family JSON")->required();
    volume->add_option("--method", method, "mc or grid");
    volume->add_option("--budget", budget, "Samples (mc) or maximum cells (grid)");
    volume->add_flag("--multiplicity", with_multiplicity, "Also sample the multiplicity profile");
    volume->callback([&] {
        action = [&] {
            const TubeFamily f = load_family(family_path);
            VolumeOptions o;
            o.method = parse_volume_method(method);
            o.budget = budget;
            o.seed = g.seed;
            const VolumeEstimate v = union_volume(f, o);
            const double lb = f.empty() ? 0.0 : lower_bound(static_cast<double>(f.size()), f.delta(), f.dim());
            json j = {{"tubes", f.size()},
                      {"volume", v.value},
                      {"abs_error_95", v.abs_error_95},
                      {"method", to_string(v.method)},
                      {"samples", v.samples},
                      {"converged", v.converged},
                      {"lower", v.lower},
                      {"upper", v.upper},
                      {"lower_bound", lb},
                      {"ratio", lb > 0 ? v.value / lb : 0.0}};
            if (with_multiplicity) {
                const MultiplicityProfile p = multiplicity_profile(f);
                j["nu_max"] = p.nu_max;
                j["nu_point"] = vec_json(p.argmax_point);
                j["nu_scaled"] = p.nu_max * std::pow(f.delta(), f.dim() - 1);
            }
            return j;
        };
    });

    // cindex / ren
    auto* cindex = app.add_subcommand("cindex", "Convexity index of a VOX1 set");
    std::string set_path;
    std::int64_t line_budget = 1000000;
    cindex->add_option("--set", set_path, "VOX1 file")->required();
    cindex->add_option("--budget", line_budget, "Line samples");
    cindex->callback([&] {
        action = [&] { return convexity_json(convexity_index(load_vox(set_path), line_budget, g.seed)); };
    });
    auto* ren = app.add_subcommand("ren", "Ren identity check on a VOX1 set");
    ren->add_option("--set", set_path, "VOX1 file")->required();
    ren->add_option("--budget", line_budget, "Line samples");
    ren->callback([&] {
        action = [&] {
            const RenCheck r = ren_identity_check(load_vox(set_path), line_budget, g.seed);
            return json{{"lhs", r.lhs}, {"lhs_error_95", r.lhs_error_95}, {"rhs", r.rhs}, {"ratio", r.ratio}};
        };
    });

    // pack
    auto* pack = app.add_subcommand("pack", "Pack essentially distinct tubes into E x [0, 2]");
    bool no_checks = false;
    pack->add_option("--set", set_path, "VOX1 base set E")->required();
    pack->add_option("--delta", delta, "Tube width")->required();
    pack->add_option("--n", n, "Ambient dimension (2 or 3)");
    pack->add_option("--out", out_path, "Family JSON output");
    pack->add_flag("--no-checks", no_checks, "Skip the convexity, discretization and diameter checks");
    pack->callback([&] {
        action = [&] {
            if (g.paper_regime) check_paper_regime(delta);
            PackOptions o;
            o.seed = g.seed;
            if (no_checks) o.check_convexity = o.check_discretization = o.check_diameter = false;
            const PackResult r = pack_tubes(load_vox(set_path), delta, n, o);
            json dirs = json::array();
            for (const auto& c : r.directions)
                dirs.push_back({{"direction", vec_json(c.e.vec())},
                                {"theta", c.theta},
                                {"qualifying_slices", c.qualifying_slices},
                                {"count", c.count},
                                {"dropped", c.dropped}});
            json j = {{"tubes", r.family.size()},
                      {"implied_N", r.implied_N},
                      {"ratio", r.implied_N > 0 ? r.family.size() / r.implied_N : 0.0},
                      {"outer_volume", r.outer_volume},
                      {"inner_volume", r.inner_volume},
                      {"dropped", r.dropped},
                      {"directions", dirs}};
            if (!out_path.empty()) {
                save_family(r.family, out_path);
                j["out"] = out_path;
            }
            return j;
        };
    });

    // lemma51
    auto* lemma51 = app.add_subcommand("lemma51", "Simplex selection on an assignment instance");
    std::string instance_path;
    int side = 10, universe = 64;
    double keep = 0.8, c = 0.5;
    lemma51->add_option("--instance", instance_path, "Instance JSON (random when absent)");
    lemma51->add_option("--n", n, "Dimension of the random instance");
    lemma51->add_option("--side", side, "Cells per axis of the random instance");
    lemma51->add_option("--universe", universe, "Ground set size of the random instance");
    lemma51->add_option("--keep", keep, "Fraction of the ground set in each E_x");
    lemma51->add_option("--c", c, "Constant c");
    lemma51->callback([&] {
        action = [&] {
            const AssignmentInstance inst = instance_path.empty()
                                                ? random_assignment_instance(n, side, universe, keep, c, g.seed)
                                                : assignment_from_json(read_json(instance_path));
            const SimplexResult r = select_simplex(inst);
            const SimplexVerification v = verify_simplex(inst, r);
            json j = simplex_to_json(r);
            j["verification"] = {{"ok", v.ok},
                                 {"weight_condition", v.weight_condition},
                                 {"volume_condition", v.volume_condition},
                                 {"common_weight", v.common_weight},
                                 {"simplex_volume", v.simplex_volume},
                                 {"message", v.message}};
            return j;
        };
    });

    // lemma53
    auto* lemma53 = app.add_subcommand("lemma53", "Sumset bound check on a pair set G");
    int rank = 2, max_size = 30;
    long radius = 3;
    lemma53->add_option("--instance", instance_path, "Instance JSON (random when absent)");
    lemma53->add_option("--rank", rank, "Lattice rank of the random instance");
    lemma53->add_option("--max-size", max_size, "Largest #A, #B of the random instance");
    lemma53->add_option("--radius", radius, "Coordinate bound of the random instance");
    lemma53->callback([&] {
        action = [&] {
            const SumsetInstance inst = instance_path.empty() ? random_sumset_instance(rank, max_size, radius, g.seed)
                                                              : sumset_from_json(read_json(instance_path));
            return sumset_check_to_json(sumset_bound_check(inst));
        };
    });

    // goodcfg
    auto* goodcfg = app.add_subcommand("goodcfg", "Extract or check an (epsilon0, lambda0)-good configuration");
    double epsilon0 = 0.5;
    std::string cert_path;
    bool use_balls = false;
    goodcfg->add_option("--family", family_path, "Family JSON")->required();
    goodcfg->add_option("--epsilon0", epsilon0, "epsilon0 in (0, 1]");
    goodcfg->add_option("--check", cert_path, "Certificate JSON to check instead of extracting");
    goodcfg->add_flag("--balls", use_balls, "Extract from the first dense ball instead of the whole family");
    goodcfg->add_option("--out", out_path, "Certificate JSON output");
    goodcfg->callback([&] {
        action = [&] {
            const TubeFamily f = load_family(family_path);
            GoodConfigCertificate cert;
            json j;
            if (!cert_path.empty()) {
                cert = certificate_from_json(read_json(cert_path));
            } else {
                std::vector<std::size_t> members(f.size());
                for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
                if (use_balls) {
                    DenseBallOptions bo;
                    bo.seed = g.seed;
                    const auto balls = extract_dense_balls(f, bo);
                    j["balls"] = balls.size();
                    if (balls.empty()) throw Error("rigidity.density", "no dense ball found");
                    members = balls.front().members;
                }
                GoodConfigOptions o;
                o.seed = g.seed;
                cert = extract_good_config(f, members, epsilon0, o);
                if (!out_path.empty()) write_json(out_path, certificate_to_json(cert));
                j["certificate"] = certificate_to_json(cert);
            }
            const GoodConfigCheck ck = check_good_config(f, cert);
            j["accepted"] = ck.ok;
            j["lambda0"] = cert.lambda0;
            j["groups"] = cert.groups.size();
            if (!ck.ok) {
                j["violation"] = {{"condition", ck.condition}, {"message", ck.message}};
                if (ck.tube) j["violation"]["tube"] = *ck.tube;
            }
            return j;
        };
    });

    // detect
    auto* detect = app.add_subcommand("detect", "Structure detection for a near-extremal family");
    bool bush_only = false;
    detect->add_option("--family", family_path, "Family JSON")->required();
    detect->add_option("--out", out_path, "Report JSON output");
    detect->add_flag("--bush", bush_only, "Only normalize and report the bush direction clusters");
    detect->callback([&] {
        action = [&] {
            const TubeFamily f = load_family(family_path);
            json j;
            if (bush_only) {
                StructureOptions so;
                const NormalizedFamily nf = normalize_family(f, so.max_tilt);
                BushOptions bo = so.bush;
                bo.max_tilt = so.max_tilt;
                BushDirections b = detect_bush_directions(nf.family, bo);
                // Report directions in the input frame.
                for (auto& cl : b.clusters) {
                    Eigen::VectorXd e(f.dim());
                    for (int k = 0; k < f.dim(); ++k) e[k] = cl.e[k];
                    const Eigen::VectorXd back = nf.rotation.transpose() * e;
                    Vec v(f.dim());
                    for (int k = 0; k < f.dim(); ++k) v[k] = back[k];
                    cl.e = Direction::normalized(v);
                }
                j = bush_to_json(b);
            } else {
                StructureOptions so;
                so.seed = g.seed;
                j = structure_to_json(detect_structure(f, so));
            }
            if (!out_path.empty()) write_json(out_path, j);
            return j;
        };
    });

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep and fit scaling exponents");
    std::string config_path, out_dir;
    sweep->add_option("--config", config_path, "Sweep config JSON")->required();
    sweep->add_option("--out", out_dir, "Output directory (resumable)");
    sweep->callback([&] {
        action = [&] {
            SweepConfig cfg = sweep_config_from_json(read_json(config_path));
            if (!read_json(config_path).contains("seed")) cfg.seed = g.seed;
            if (g.paper_regime) cfg.allow_coarse_delta = false;
            const ScalingReport r = run_sweep(cfg, out_dir);
            if (g.format == "csv") return json(report_to_csv(r));
            json j = report_to_json(r);
            try {
                j["regression"] = regression_to_json(regime_regression(r));
            } catch (const Error& e) {
                j["regression"] = {{"skipped", e.what()}};
            }
            return j;
        };
    });

    // validate
    auto* validate = app.add_subcommand("validate", "Schema check of family JSON and VOX1 files");
    std::vector<std::string> files;
    validate->add_option("files", files, "Files to check (.vox as VOX1, others as family JSON)")->required();
    validate->callback([&] {
        action = [&] {
            json checked = json::array();
            for (const auto& file : files) {
                const bool vox = std::filesystem::path(file).extension() == ".vox";
                try {
                    if (vox)
                        load_vox(file);
                    else
                        load_family(file);
                } catch (const Error& e) {
                    throw Error(e.code(), file + ": " + e.what());
                }
                checked.push_back({{"file", file}, {"type", vox ? "vox" : "family"}});
            }
            return json{{"ok", true}, {"files", checked}};
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << '\n';
        if (g.verbosity >= 1) std::cerr << app.help() << '\n';
        return 2;
    }

    if (const char* env = std::getenv("TUBEKIT_THREADS")) {
        try {
            g.threads = std::max(1, std::stoi(env));
        } catch (const std::exception&) {
            std::cerr << json{{"error", {{"code", "usage"}, {"message", "TUBEKIT_THREADS must be an integer"}}}}.dump()
                      << '\n';
            return 2;
        }
    }
    set_thread_count(g.threads);
    log(g, "threads: " + std::to_string(g.threads) + ", seed: " + std::to_string(g.seed));

    try {
        const json out = action();
        if (out.is_string() && g.format == "csv")
            std::cout << out.get<std::string>();
        else
            emit(g, out);
    } catch (const Error& e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << '\n';
        log(g, std::string("error: ") + e.what());
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    }
    return 0;
}
