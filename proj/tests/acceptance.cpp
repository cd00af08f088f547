// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Optional arguments select criteria by number, e.g. `acceptance 2 7`.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "tubekit/combinatorics.hpp"
#include "tubekit/constructions.hpp"
#include "tubekit/measure.hpp"
#include "tubekit/packing.hpp"
#include "tubekit/rigidity.hpp"
#include "tubekit/sweep.hpp"
#include "tubekit/xray.hpp"

using namespace tubekit;
namespace fs = std::filesystem;

namespace {

// Criterion 1.
constexpr double kRenRelTol = 0.03;
constexpr double kRenSeconds = 60.0;
// Criterion 2.
constexpr double kConvexMin = 0.95;
constexpr double kNonconvexMax = 0.90;
constexpr double kTwoDiskTarget = 0.50;
constexpr double kTwoDiskTol = 0.03;
// Criterion 4.
constexpr double kRatioSpread = 4.0;
constexpr double kSlopeTol = 0.2;
// Criterion 5, frozen from the measure calibration.
constexpr double kLowerBoundConstant = 0.5;
constexpr double kMultiplicityConstant = 2.0;
// Criterion 6.
constexpr double kPackStability = 2.0;
// Criterion 7.
constexpr double kMinCPrime = 0.05;
constexpr double kMinLambda = 1e-3;
// Criterion 9.
constexpr double kGridSlack = 0.05;
constexpr double kSquareTol = 0.02;
// Criterion 10.
constexpr double kMinCapture = 0.5;
constexpr double kVolumeRatioLo = 1.0;
constexpr double kVolumeRatioHi = 64.0;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

using Shape = std::function<bool(const Vec&)>;

VoxelSet shape2(const Vec& lo, const Vec& hi, double h, const Shape& inside) {
    return VoxelSet::from_predicate(2, lo, hi, h, inside);
}

VoxelSet unit_disk(double h) {
    return shape2(Vec{-1.0 - h, -1.0 - h}, Vec{1.0 + h, 1.0 + h}, h, [](const Vec& x) { return norm(x) <= 1.0; });
}

// Unit square minus the square [arm, 1]^2.
VoxelSet l_shape(double h, double arm) {
    return shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [=](const Vec& x) { return x[0] < arm || x[1] < arm; });
}

// ---------------------------------------------------------------- 1

void ren_identity(Outcome& o) {
    const int saved = thread_count();
    set_thread_count(1);
    const auto t0 = std::chrono::steady_clock::now();
    const RenCheck r = ren_identity_check(unit_disk(1.0 / 256), 1000000, 1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    set_thread_count(saved);
    const double target = 3.0 * kPi * kPi;
    const double rel = std::abs(r.lhs - target) / target;
    o.detail << "lhs " << r.lhs << " vs 3pi^2 " << target << " (rel " << rel << ", tol " << kRenRelTol << "), " << secs
             << " s single-threaded";
    o.require(rel <= kRenRelTol, "relative error");
    o.require(secs <= kRenSeconds, "runtime");
}

// ---------------------------------------------------------------- 2

// Index of two unit disks at center distance D by quadrature over exact chords.
double two_disk_oracle(double D) {
    const int thetas = 40000, offsets = 400;
    auto chord = [](double s) { return std::abs(s) < 1.0 ? 2.0 * std::sqrt(1.0 - s * s) : 0.0; };
    long double total = 0.0L;
    const double dt = kPi / thetas;
    for (int a = 0; a < thetas; ++a) {
        const double shift = D * std::cos((a + 0.5) * dt);
        auto integrate = [&](double lo, double hi) {
            const double ds = (hi - lo) / offsets;
            long double s = 0.0L;
            for (int b = 0; b < offsets; ++b) {
                const double p = lo + (b + 0.5) * ds;
                const double len = chord(p) + chord(p - shift);
                s += static_cast<long double>(len) * len * len * ds;
            }
            return s;
        };
        if (std::abs(shift) > 2.0)
            total += (integrate(-1.0, 1.0) + integrate(shift - 1.0, shift + 1.0)) * dt;
        else
            total += integrate(std::min(-1.0, shift - 1.0), std::max(1.0, shift + 1.0)) * dt;
    }
    const double area = 2.0 * kPi;
    return static_cast<double>(total / (3.0L * area * area));
}

void convexity_separation(Outcome& o) {
    const double h = 1.0 / 256;
    const std::int64_t budget = 1000000;
    const std::vector<std::pair<std::string, VoxelSet>> convex = {
        {"disk", unit_disk(h)},
        {"square", shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec&) { return true; })},
        {"triangle", shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec& x) { return x[0] + x[1] <= 1.0; })},
        {"ball3", VoxelSet::from_predicate(3, Vec{-1.0, -1.0, -1.0}, Vec{1.0, 1.0, 1.0}, 1.0 / 64,
                                           [](const Vec& x) { return norm(x) <= 1.0; })},
        {"simplex3", VoxelSet::from_predicate(3, Vec{0.0, 0.0, 0.0}, Vec{1.0, 1.0, 1.0}, 1.0 / 64,
                                              [](const Vec& x) { return x[0] + x[1] + x[2] <= 1.0; })}};
    const std::vector<std::pair<std::string, VoxelSet>> nonconvex = {
        {"annulus", shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, h,
                           [](const Vec& x) { return norm(x) <= 1.0 && norm(x) >= 0.8; })},
        {"L", l_shape(h, 0.3)},
        {"plus", shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, h,
                        [](const Vec& x) { return std::abs(x[0]) < 0.2 || std::abs(x[1]) < 0.2; })}};
    for (const auto& [name, E] : convex) {
        const double c = convexity_index(E, budget, 1).index;
        o.detail << name << " " << c << "; ";
        o.require(c >= kConvexMin, name);
    }
    for (const auto& [name, E] : nonconvex) {
        const double c = convexity_index(E, budget, 1).index;
        o.detail << name << " " << c << "; ";
        o.require(c <= kNonconvexMax, name);
    }
    const double D = 100.0, hd = 1.0 / 64;
    const VoxelSet far = shape2(Vec{-1.0 - hd, -1.0 - hd}, Vec{D + 1.0 + hd, 1.0 + hd}, hd, [&](const Vec& x) {
        return norm(x) <= 1.0 || norm(x - Vec{D, 0.0}) <= 1.0;
    });
    const ConvexityReport r = convexity_index(far, budget, 1);
    const double oracle = two_disk_oracle(D);
    o.detail << "two disks at 100: " << r.index << " +- " << r.abs_error_95 << " (quadrature " << oracle
             << ", limit 0.5, tol " << kTwoDiskTol << ")";
    o.require(r.index <= kNonconvexMax, "two disks");
    o.require(std::abs(r.index - kTwoDiskTarget) <= kTwoDiskTol, "two disks vs 0.5");
    o.require(std::abs(r.index - oracle) <= kTwoDiskTol, "two disks vs quadrature");
}

// ---------------------------------------------------------------- 3

void affine_invariance(Outcome& o) {
    const double h = 1.0 / 96;
    const std::vector<std::pair<std::string, VoxelSet>> shapes = {
        {"L", l_shape(h, 0.4)},
        {"triangle", shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec& x) { return x[0] + x[1] <= 1.0; })},
        {"annulus", shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, h,
                           [](const Vec& x) { return norm(x) <= 1.0 && norm(x) >= 0.6; })}};
    // "Every pair" is read as a simultaneous 95% statement: each pair's combined
    // error is widened from z = 1.96 to the Bonferroni quantile for 60 pairs.
    const int total_pairs = 20 * static_cast<int>(shapes.size());
    const double z_pair = boost::math::quantile(boost::math::normal(), 0.975);
    const double z_family = boost::math::quantile(boost::math::normal(), 1.0 - 0.025 / total_pairs);
    Rng rng(2024);
    int pairs = 0, agreed = 0, agreed_per_pair = 0;
    double worst = 0.0;
    for (const auto& [name, E] : shapes) {
        int checked = 0;
        while (checked < 20) {
            Eigen::Matrix2d A;
            A << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2);
            Eigen::JacobiSVD<Eigen::Matrix2d> svd(A);
            const double cond = svd.singularValues()(0) / svd.singularValues()(1);
            if (!(cond <= 10.0) || std::abs(A.determinant()) < 0.05) continue;
            const AffineCheck r =
                affine_invariance_check(E, A, Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), 100000, checked);
            const double band = r.combined_error_95 * z_family / z_pair;
            ++pairs;
            agreed_per_pair += r.agree ? 1 : 0;
            agreed += r.difference <= band ? 1 : 0;
            worst = std::max(worst, r.difference / r.combined_error_95);
            if (r.difference > band) o.require(false, name + " map " + std::to_string(checked));
            ++checked;
        }
    }
    o.detail << agreed << "/" << pairs << " pairs agree within the simultaneous 95% band (z " << z_family << "); "
             << agreed_per_pair << "/" << pairs << " within the per-pair 95% error (about " << 0.95 * pairs
             << " expected by chance); worst difference/per-pair error " << worst;
}

// ---------------------------------------------------------------- 4

void sweep_sharpness(Outcome& o) {
    SweepConfig cfg;
    cfg.allow_coarse_delta = true;
    cfg.budget = 1000000;
    cfg.seed = 3;
    for (double delta : {1.0 / 16, 1.0 / 32, 1.0 / 64})
        cfg.points.push_back({ConstructionKind::standard, 2, delta, 1.0 / (delta * delta), 2});
    for (double delta : {1.0 / 32, 1.0 / 64, 1.0 / 128})
        cfg.points.push_back({ConstructionKind::small_cap, 2, delta, 256.0, 2});
    const ScalingReport rep = run_sweep(cfg);
    std::map<std::string, std::pair<double, double>> range;
    for (const ScalingRecord& r : rep.records) {
        o.require(r.ok, "point " + r.key + " " + r.error_code);
        if (!r.ok) continue;
        const double N = static_cast<double>(r.N), d = r.point.delta;
        const bool standard = r.point.kind == ConstructionKind::standard;
        const double ratio = standard ? r.volume / (N * d * d) : r.volume / (std::sqrt(N) * d);
        const std::string kind = standard ? "standard" : "small_cap";
        auto& [lo, hi] = range.try_emplace(kind, ratio, ratio).first->second;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        o.detail << kind << " delta=" << d << " N=" << r.N << " ratio " << ratio << "; ";
    }
    for (const auto& [kind, lohi] : range) {
        o.detail << kind << " C/c " << lohi.second / lohi.first << "; ";
        o.require(lohi.second / lohi.first <= kRatioSpread, kind + " spread");
    }
    for (const RegressionFit& f : regime_regression(rep)) {
        const double expected = f.kind == "standard" ? 2.0 * f.n - 2.0 : f.n - 1.0;
        o.detail << f.kind << " slope " << f.slope << " (expected " << expected << "); ";
        o.require(std::abs(f.slope - expected) <= kSlopeTol, f.kind + " slope");
    }
}

// ---------------------------------------------------------------- 5

TubeFamily random_distinct(Rng& rng, int n, double delta, int count, double radius) {
    TubeFamily f(n, delta);
    std::vector<Direction> dirs;
    int attempts = 0;
    while (static_cast<int>(dirs.size()) < count && attempts++ < 100000) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = rng.normal();
        v[n - 1] = std::abs(v[n - 1]) + 1.0;
        const Direction e = Direction::normalized(v);
        bool ok = true;
        for (const Direction& d : dirs) ok = ok && angle(d, e) > 3.0 * delta;
        if (ok) dirs.push_back(e);
    }
    for (const Direction& e : dirs) {
        Vec c(n);
        for (int i = 0; i < n - 1; ++i) c[i] = rng.uniform(-radius, radius);
        f.add(Tube(c, e, delta));
    }
    return f;
}

TubeFamily random_subset(Rng& rng, const TubeFamily& f, double keep) {
    TubeFamily out(f.dim(), f.delta(), f.c0());
    for (const Tube& t : f.tubes())
        if (rng.uniform(0, 1) < keep) out.add(t);
    if (out.empty()) out.add(f[0]);
    return out;
}

// Jitters centers by up to delta/10 and directions by up to delta/20.
TubeFamily perturb(Rng& rng, const TubeFamily& f) {
    const int n = f.dim();
    TubeFamily out(n, f.delta(), f.c0());
    for (const Tube& t : f.tubes()) {
        Vec dc(n), de(n);
        for (int k = 0; k < n; ++k) {
            dc[k] = rng.uniform(-1, 1) * f.delta() / (10.0 * std::sqrt(n));
            de[k] = rng.uniform(-1, 1) * f.delta() / (20.0 * std::sqrt(n));
        }
        out.add(Tube(t.center() + dc, Direction::normalized(t.axis() + de), f.delta()));
    }
    return out;
}

TubeFamily corpus_member(Rng& rng, int index) {
    switch (index % 6) {
        case 0: {
            const int n = 2 + static_cast<int>(rng.below(2));
            const double delta = n == 2 ? 1.0 / 64 : 1.0 / 32;
            return random_distinct(rng, n, delta, 5 + static_cast<int>(rng.below(80)), rng.uniform(0.0, 0.3));
        }
        case 1: {
            const bool planar = rng.below(2) == 0;
            return random_subset(rng, standard_configuration(planar ? 2 : 3, planar ? 1.0 / 32 : 1.0 / 8, {}, false),
                                 rng.uniform(0.2, 1.0));
        }
        case 2: {
            const bool planar = rng.below(2) == 0;
            const double N = std::pow(2.0, 4 + static_cast<int>(rng.below(5)));
            return small_cap_configuration(planar ? 2 : 3, planar ? 1.0 / 64 : 1.0 / 32, N, {});
        }
        case 3:
            return embedded_configuration(3, 2, 1.0 / 32, std::pow(2.0, 5 + static_cast<int>(rng.below(4))));
        case 4:
            return random_subset(rng, slab_configuration(3, 2, 1.0 / 32, 1024).family, rng.uniform(0.3, 1.0));
        default: {
            TubeFamily merged(2, 1.0 / 64);
            for (const TubeFamily& part : cascade_example(2, 1.0 / 64, false))
                for (const Tube& t : part.tubes()) merged.add(t);
            return merged;
        }
    }
}

void lower_bound_half(Outcome& o) {
    Rng rng(5150);
    double worst_ratio = 1e300, worst_nu = 0.0;
    int families = 0, perturbed = 0;
    for (int i = 0; families < 200; ++i) {
        TubeFamily f = corpus_member(rng, i);
        if (rng.below(2) == 0) {
            TubeFamily g = perturb(rng, f);
            if (is_essentially_distinct(g).ok) {
                f = std::move(g);
                ++perturbed;
            }
        }
        if (!is_essentially_distinct(f).ok) {
            o.require(false, "family " + std::to_string(i) + " not essentially distinct");
            continue;
        }
        VolumeOptions vo;
        vo.budget = 1 << 17;
        vo.seed = static_cast<std::uint64_t>(i);
        const double vol = union_volume(f, vo).value;
        const double ratio = vol / lower_bound(static_cast<double>(f.size()), f.delta(), f.dim());
        const double nu = multiplicity_profile(f).nu_max * std::pow(f.delta(), f.dim() - 1.0);
        worst_ratio = std::min(worst_ratio, ratio);
        worst_nu = std::max(worst_nu, nu);
        ++families;
    }
    o.detail << families << " families (" << perturbed << " perturbed); min volume/lower_bound " << worst_ratio
             << " (frozen 1/C = " << kLowerBoundConstant << "); max nu delta^(n-1) " << worst_nu << " (frozen C' = "
             << kMultiplicityConstant << ")";
    o.require(worst_ratio >= kLowerBoundConstant, "lower bound");
    o.require(worst_nu <= kMultiplicityConstant, "multiplicity");
}

// ---------------------------------------------------------------- 6

VoxelSet pack_set(const std::string& shape, double delta) {
    const double h = delta / 4;
    if (shape == "interval")
        return VoxelSet::from_predicate(1, Vec{0.0}, Vec{0.5}, h, [](const Vec&) { return true; });
    if (shape == "disk")
        return VoxelSet::from_predicate(2, Vec{-0.4, -0.4}, Vec{0.4, 0.4}, h, [](const Vec& x) { return norm(x) <= 0.4; });
    // Square of half-side 0.35 with corners rounded at radius 9 delta, so it is 9 delta-discretized.
    const double a = 0.35, r = 9 * delta;
    return VoxelSet::from_predicate(2, Vec{-a, -a}, Vec{a, a}, h, [&](const Vec& x) {
        const double dx = std::max(0.0, std::abs(x[0]) - (a - r)), dy = std::max(0.0, std::abs(x[1]) - (a - r));
        return dx * dx + dy * dy <= r * r;
    });
}

void packing(Outcome& o) {
    for (const std::string shape : {"interval", "square", "disk"}) {
        const int n = shape == "interval" ? 2 : 3;
        std::vector<double> cs;
        for (double delta : {1.0 / 32, 1.0 / 64}) {
            const VoxelSet E = pack_set(shape, delta);
            PackOptions po;
            // A 9 delta ball at delta = 1/32 is wider than the half interval.
            po.check_discretization = !(shape == "interval" && delta > 0.02);
            const PackResult r = pack_tubes(E, delta, n, po);
            std::size_t inside = 0;
            for (const Tube& t : r.family.tubes()) inside += tube_inside_prism(t, E) ? 1 : 0;
            const bool distinct = is_essentially_distinct(r.family).ok;
            const double c = r.family.size() / r.implied_N;
            cs.push_back(c);
            o.detail << shape << " delta=" << delta << ": " << r.family.size() << " tubes, N=" << r.implied_N
                     << ", c=" << c << ", contained " << inside << "/" << r.family.size()
                     << (distinct ? ", distinct; " : ", NOT distinct; ");
            o.require(inside == r.family.size(), shape + " containment");
            o.require(distinct, shape + " distinctness");
            o.require(c > 0.0, shape + " empty");
        }
        const double spread = std::max(cs[0], cs[1]) / std::min(cs[0], cs[1]);
        o.detail << shape << " c spread " << spread << "; ";
        o.require(spread <= kPackStability, shape + " stability");
    }
}

// ---------------------------------------------------------------- 7

double oracle_volume(const std::vector<Vec>& v) {
    const int n = static_cast<int>(v.size()) - 1;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) m(k, i) = v[i + 1][k] - v[0][k];
    return std::abs(m.determinant()) / std::tgamma(n + 1.0);
}

void simplex_selection(Outcome& o) {
    double min_c = 1e300, min_lambda = 1e300;
    int verified = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const AssignmentInstance inst =
            random_assignment_instance(2, 6 + static_cast<int>(seed % 5), 48, 0.5 + 0.1 * (seed % 5), 0.5, seed);
        const SimplexResult r = select_simplex(inst);
        if (!r.complete) {
            o.require(false, "instance " + std::to_string(seed) + " incomplete");
            continue;
        }
        // Exhaustive check of both conditions against the raw instance.
        double common = 0.0;
        for (std::size_t e = 0; e < inst.universe_weights.size(); ++e) {
            bool all = true;
            for (std::size_t i : r.indices) all = all && inst.assignment[i][e];
            if (all) common += inst.universe_weights[e];
        }
        std::vector<Vec> pts;
        for (std::size_t i : r.indices) pts.push_back(inst.points[i]);
        const double vol = oracle_volume(pts);
        const bool weight_ok = common >= r.c_prime * inst.universe_weight() - 1e-12;
        const bool volume_ok = vol >= r.lambda * inst.s_mass() - 1e-12 && vol > 0.0;
        const bool steps_ok = static_cast<double>(r.steps) <= r.step_bound;
        if (weight_ok && volume_ok && steps_ok && verify_simplex(inst, r).ok) ++verified;
        else o.require(false, "instance " + std::to_string(seed));
        min_c = std::min(min_c, r.c_prime);
        min_lambda = std::min(min_lambda, r.lambda);
    }
    o.detail << verified << "/100 verified; min c' " << min_c << " (floor " << kMinCPrime << "), min lambda " << min_lambda
             << " (floor " << kMinLambda << ")";
    o.require(min_c >= kMinCPrime, "c' floor");
    o.require(min_lambda >= kMinLambda, "lambda floor");
}

// ---------------------------------------------------------------- 8

void sumset_bound(Outcome& o) {
    int violations = 0, mismatches = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const SumsetInstance inst = random_sumset_instance(2, 30, 6, seed);
        std::map<LatticePoint, std::size_t> fibers;
        std::set<LatticePoint> sums;
        for (const auto& [a, b] : inst.G) {
            LatticePoint d(a.size()), s(a.size());
            for (std::size_t k = 0; k < a.size(); ++k) {
                d[k] = a[k] - b[k];
                s[k] = a[k] + b[k];
            }
            ++fibers[d];
            sums.insert(s);
        }
        std::size_t M = 0;
        for (const auto& kv : fibers) M = std::max(M, kv.second);
        const double N0 = static_cast<double>(std::max({inst.A.size(), inst.B.size(), sums.size()}));
        const bool holds = static_cast<double>(inst.G.size()) <= std::pow(M, 1.0 / 6) * std::pow(N0, 11.0 / 6) + 1e-9;
        const SumsetCheck c = sumset_bound_check(inst);
        violations += holds && c.holds ? 0 : 1;
        mismatches += c.M == M && c.G == inst.G.size() ? 0 : 1;
    }
    SumsetInstance stair;
    stair.rank = 1;
    for (long a = 0; a <= 9; ++a) {
        stair.A.push_back({a});
        stair.B.push_back({a});
    }
    for (long a = 0; a <= 9; ++a)
        for (long b = 0; a + b <= 9; ++b) stair.G.push_back({{a}, {b}});
    const SumsetCheck s = sumset_bound_check(stair);
    o.detail << "1000 instances: " << violations << " violations, " << mismatches << " oracle mismatches; worked: #G="
             << s.G << " M=" << s.M << " N0=" << s.N0 << " rhs=" << s.rhs;
    o.require(violations == 0, "violations");
    o.require(mismatches == 0, "oracle");
    o.require(s.G == 55 && s.M == 5 && s.N0 == 10 && std::abs(s.rhs - 89.1) < 0.05 && s.holds, "worked instance");
}

// ---------------------------------------------------------------- 9

void shifted_intersection(Outcome& o) {
    Rng rng(909);
    int held = 0, total = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const int m = trial % 5 == 0 ? 3 : 2;
        const int boxes = 1 + static_cast<int>(rng.below(3));
        std::vector<std::pair<Vec, Vec>> parts;
        for (int b = 0; b < boxes; ++b) {
            Vec lo(m), hi(m);
            for (int k = 0; k < m; ++k) {
                lo[k] = rng.uniform(0.0, 0.8);
                hi[k] = lo[k] + rng.uniform(0.1, 0.5);
            }
            parts.emplace_back(lo, hi);
        }
        Vec glo(m), ghi(m);
        for (int k = 0; k < m; ++k) ghi[k] = 1.3;
        const VoxelSet E = VoxelSet::from_predicate(m, glo, ghi, m == 2 ? 1.0 / 24 : 1.0 / 12, [&](const Vec& x) {
            for (const auto& [lo, hi] : parts) {
                bool in = true;
                for (int k = 0; k < m; ++k) in = in && x[k] >= lo[k] && x[k] <= hi[k];
                if (in) return true;
            }
            return false;
        });
        if (E.count() == 0) continue;
        const ShiftedIntersection r = shifted_intersection_check(E, kGridSlack);
        ++total;
        held += r.holds ? 1 : 0;
        worst = std::max(worst, r.lhs / r.rhs);
    }
    const ShiftedIntersection sq = shifted_intersection_check(
        VoxelSet::from_predicate(2, Vec{0.0, 0.0}, Vec{1.0, 1.0}, 1.0 / 64, [](const Vec&) { return true; }), kGridSlack);
    const double rel = std::abs(sq.lhs - 2.0 / 3.0) / (2.0 / 3.0);
    o.detail << held << "/" << total << " unions hold (slack " << kGridSlack << "), max lhs/rhs " << worst
             << "; square lhs " << sq.lhs << " (rel " << rel << ")";
    o.require(held == total && total == 500, "unions");
    o.require(rel <= kSquareTol && sq.holds, "square");
}

// ---------------------------------------------------------------- 10

Tube place(const Tube& t, const Eigen::MatrixXd& R, const Eigen::VectorXd& b) {
    const int n = t.dim();
    Eigen::VectorXd c(n), e(n);
    for (int k = 0; k < n; ++k) {
        c[k] = t.center()[k];
        e[k] = t.axis()[k];
    }
    const Eigen::VectorXd c2 = R * c + b, e2 = R * e;
    return Tube(Vec::from({c2.data(), c2.data() + n}), Direction::normalized(Vec::from({e2.data(), e2.data() + n})),
                t.delta(), t.height());
}

void rigidity(Outcome& o) {
    const TubeFamily std2 = standard_configuration(2, 1.0 / 32, {}, false);
    std::vector<std::size_t> all(std2.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const GoodConfigCertificate cert = extract_good_config(std2, all, 0.5);
    const GoodConfigCheck check = check_good_config(std2, cert);
    o.detail << "standard certificate " << (check.ok ? "accepted" : "rejected") << " (lambda0 " << cert.lambda0 << "); ";
    o.require(check.ok, "certificate");

    const std::vector<std::pair<std::string, TubeFamily>> cases = {
        {"slab", slab_configuration(3, 2, 1.0 / 32, 4096).family},
        {"small_cap", small_cap_configuration(2, 1.0 / 64, 256, {})}};
    for (const auto& [name, f] : cases) {
        const StructureReport r = detect_structure(f);
        if (!r.found) {
            o.require(false, name + " not found: " + r.reason);
            continue;
        }
        std::size_t inside = 0;
        for (std::size_t i : r.captured) inside += tube_inside_prism(place(f[i], r.rotation, r.translation), r.E) ? 1 : 0;
        const double capture = static_cast<double>(inside) / f.size();
        o.detail << name << ": capture " << capture << ", diam " << r.diameter << ", |E|/(sqrt(N) delta^(n-1)) "
                 << r.volume_ratio << "; ";
        o.require(capture >= kMinCapture, name + " capture");
        o.require(r.diameter <= 1.0, name + " diameter");
        o.require(r.volume_ratio >= kVolumeRatioLo && r.volume_ratio <= kVolumeRatioHi, name + " volume ratio");
    }

    Rng rng(7);
    TubeFamily control(3, 1.0 / 32);
    while (control.size() < 512) {
        Vec v(3), c(3);
        for (int k = 0; k < 3; ++k) {
            v[k] = rng.normal();
            c[k] = rng.uniform(-1.0, 1.0);
        }
        v[2] = std::abs(v[2]);
        const Direction e = Direction::normalized(v);
        if (std::acos(e.vec()[2]) > kPi / 4 || norm(c) > 1.0) continue;
        control.add(Tube(c, e, 1.0 / 32));
    }
    const StructureReport ctl = detect_structure(control);
    o.detail << "random control: " << (ctl.found ? "found (unexpected)" : "failure report: " + ctl.reason);
    o.require(!ctl.found && !ctl.reason.empty(), "control");
}

// ---------------------------------------------------------------- 11

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string run_cli(const fs::path& dir, const std::string& args, int& code) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(TUBEKIT_CLI_PATH) + "' " + args + " 2>&1";
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        code = -1;
        return out;
    }
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
    const int status = pclose(pipe);
    code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

void cli_determinism(Outcome& o) {
    const fs::path dir = fs::temp_directory_path() / "tubekit_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_family(standard_configuration(2, 1.0 / 32, {}, false), (dir / "std.json").string());
    save_family(small_cap_configuration(2, 1.0 / 64, 256, {}), (dir / "cap.json").string());
    save_vox(l_shape(1.0 / 128, 0.3), (dir / "l.vox").string());
    save_vox(unit_disk(1.0 / 128), (dir / "disk.vox").string());
    save_vox(pack_set("interval", 1.0 / 64), (dir / "interval.vox").string());
    std::ofstream(dir / "sweep.json") << R"({"points": [{"kind": "standard", "n": 2, "delta": 0.0625},
        {"kind": "small_cap", "n": 2, "delta": 0.03125, "N": 64}], "budget": 100000, "allow_coarse_delta": true})";

    struct Case {
        std::string name, args;
        std::vector<std::string> files;
    };
    const std::vector<Case> cases = {
        {"construct", "construct --kind small_cap --n 2 --delta 0.015625 --N 256 --out c.json", {"c.json"}},
        {"volume", "volume --family std.json --budget 200000 --multiplicity", {}},
        {"cindex", "cindex --set l.vox --budget 200000", {}},
        {"ren", "ren --set disk.vox --budget 200000", {}},
        {"pack", "pack --set interval.vox --delta 0.015625 --n 2 --out p.json", {"p.json"}},
        {"lemma51", "lemma51 --side 8 --universe 48", {}},
        {"lemma53", "lemma53 --max-size 30", {}},
        {"goodcfg", "goodcfg --family std.json --out cert.json", {"cert.json"}},
        {"detect", "detect --family cap.json --out det.json", {"det.json"}},
        {"sweep", "sweep --config sweep.json --out sw", {"sw/report.json", "sw/report.csv"}},
        {"validate", "validate std.json l.vox", {}}};
    int identical = 0;
    for (const Case& c : cases) {
        std::vector<std::string> outputs;
        bool all_ok = true;
        for (int threads : {1, 1, 8, 8}) {
            for (const std::string& f : c.files) fs::remove_all(dir / fs::path(f).parent_path() / fs::path(f).filename());
            fs::remove_all(dir / "sw");
            int code = 0;
            std::string out = run_cli(dir, "--seed 11 --threads " + std::to_string(threads) + " " + c.args, code);
            all_ok = all_ok && code == 0;
            for (const std::string& f : c.files) out += "\n--" + f + "--\n" + slurp(dir / f);
            outputs.push_back(out);
        }
        bool same = all_ok;
        for (const std::string& s : outputs) same = same && s == outputs[0];
        identical += same ? 1 : 0;
        if (!same) o.require(false, c.name + (all_ok ? " output differs" : " exit code"));
    }
    o.detail << identical << "/" << cases.size() << " subcommands byte-identical over threads {1, 1, 8, 8}";
    fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"Ren identity on the unit disk", ren_identity},
        {"Convexity index separates convex and nonconvex corpora", convexity_separation},
        {"Convexity index affine invariance", affine_invariance},
        {"Sharpness sweeps (standard, small cap)", sweep_sharpness},
        {"Union volume lower bound and multiplicity on 200 families", lower_bound_half},
        {"Packing count, stability, containment, distinctness", packing},
        {"Simplex selection on 100 assignment instances", simplex_selection},
        {"Sumset bound on 1000 instances and the worked instance", sumset_bound},
        {"Shifted intersection inequality on 500 box unions", shifted_intersection},
        {"Rigidity round trip and structure detection", rigidity},
        {"CLI determinism across threads", cli_determinism}};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[k].second(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << ". " << criteria[k].first << " (" << secs
                  << " s): " << o.detail.str() << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
