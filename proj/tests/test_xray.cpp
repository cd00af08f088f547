#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "tubekit/xray.hpp"

using namespace tubekit;

namespace {

using Shape = std::function<bool(const Vec&)>;

VoxelSet shape2(const Vec& lo, const Vec& hi, double h, const Shape& inside) {
    return VoxelSet::from_predicate(2, lo, hi, h, inside);
}

VoxelSet unit_disk(double h) {
    return shape2(Vec{-1.0 - h, -1.0 - h}, Vec{1.0 + h, 1.0 + h}, h, [](const Vec& x) { return norm(x) <= 1.0; });
}

VoxelSet unit_square(double h) {
    return shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec&) { return true; });
}

// Deterministic quadrature of the index of two unit disks at center distance D,
// using exact chord lengths on a (theta, offset) grid.
double two_disk_index_oracle(double D) {
    const int thetas = 20000, offsets = 400;
    auto chord = [](double s) { return std::abs(s) < 1.0 ? 2.0 * std::sqrt(1.0 - s * s) : 0.0; };
    long double total = 0.0L;
    const double dt = kPi / thetas;
    for (int a = 0; a < thetas; ++a) {
        const double th = (a + 0.5) * dt;
        const double shift = D * std::cos(th);
        // Offsets near each disk, merged when they overlap.
        const double lo0 = -1.0, hi0 = 1.0, lo1 = shift - 1.0, hi1 = shift + 1.0;
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
        if (hi0 < lo1 || hi1 < lo0)
            total += (integrate(lo0, hi0) + integrate(lo1, hi1)) * dt;
        else
            total += integrate(std::min(lo0, lo1), std::max(hi0, hi1)) * dt;
    }
    const double area = 2.0 * kPi;
    return static_cast<double>(2.0L * total / (6.0L * area * area));
}

}  // namespace

TEST(XrayLine, ChordLengths) {
    const VoxelSet sq = unit_square(1.0 / 256);
    EXPECT_NEAR(xray_line(sq, Vec{0.0, 0.5}, Vec{1.0, 0.0}), 1.0, 1e-12);
    EXPECT_EQ(xray_line(sq, Vec{0.0, 3.0}, Vec{1.0, 0.0}), 0.0);
    const double h = 1.0 / 256;
    const VoxelSet d = unit_disk(h);
    EXPECT_NEAR(xray_line(d, Vec{0.0, 0.6}, Vec{1.0, 0.0}), 1.6, 2 * h);
    const double c = std::cos(0.3), s = std::sin(0.3);
    EXPECT_NEAR(xray_line(d, Vec{-0.6 * s, 0.6 * c}, Vec{c, s}), 1.6, 2 * h);
}

TEST(XrayLine, RunsSumToChord) {
    const VoxelSet annulus = shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, 1.0 / 128, [](const Vec& x) {
        const double r = norm(x);
        return r <= 0.9 && r >= 0.5;
    });
    const auto runs = line_runs(annulus, Vec{0.0, 0.0}, Vec{1.0, 0.0});
    ASSERT_EQ(runs.size(), 2u);
    double total = 0.0;
    for (auto [a, b] : runs) total += b - a;
    EXPECT_NEAR(total, xray_line(annulus, Vec{0.0, 0.0}, Vec{1.0, 0.0}), 1e-12);
    EXPECT_NEAR(total, 0.8, 4.0 / 128);
}

TEST(ConvexityIndex, DiskScoresOne) {
    const ConvexityReport r = convexity_index(unit_disk(1.0 / 256), 1000000, 7);
    EXPECT_NEAR(r.index, 1.0, 0.02);
    EXPECT_GT(r.abs_error_95, 0.0);
    EXPECT_DOUBLE_EQ(r.index, 2.0 * r.power_integral / (r.m * (r.m + 1) * r.volume * r.volume));
}

TEST(ConvexityIndex, TwoDistantDisksMatchQuadratureOracle) {
    const double oracle = two_disk_index_oracle(100.0);
    EXPECT_NEAR(oracle, 0.5, 0.01);
    const VoxelSet E = shape2(Vec{-1.0, -1.0}, Vec{101.0, 1.0}, 1.0 / 64, [](const Vec& x) {
        return norm(x) <= 1.0 || norm(x - Vec{100.0, 0.0}) <= 1.0;
    });
    const ConvexityReport r = convexity_index(E, 1000000, 3);
    EXPECT_NEAR(r.index, 0.5, 0.02);
    EXPECT_NEAR(r.index, oracle, r.abs_error_95 + 0.01);
}

TEST(ConvexityIndex, RejectsDegenerateInput) {
    try {
        convexity_index(VoxelSet(1, {8, 1, 1}, 0.1, Vec{0.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "xray.unsupported_dimension");
    }
    try {
        convexity_index(VoxelSet(2, {8, 8, 1}, 0.1, Vec{0.0, 0.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "xray.empty_set");
    }
}

TEST(ConvexityIndex, ConvexAndNonconvexCorporaSeparate) {
    const double h = 1.0 / 256;
    const std::int64_t budget = 300000;
    const std::vector<VoxelSet> convex = {
        unit_disk(h), unit_square(h),
        shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec& x) { return x[0] + x[1] <= 1.0; }),
        shape2(Vec{-1.0, -0.5}, Vec{1.0, 0.5}, h, [](const Vec& x) { return x[0] * x[0] + 4 * x[1] * x[1] <= 1.0; }),
        VoxelSet::from_predicate(3, Vec{0.0, 0.0, 0.0}, Vec{1.0, 1.0, 1.0}, 1.0 / 64,
                                 [](const Vec& x) { return x[0] + x[1] + x[2] <= 1.0; })};
    const std::vector<VoxelSet> nonconvex = {
        shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, h, [](const Vec& x) {
            const double r = norm(x);
            return r <= 1.0 && r >= 0.7;
        }),
        shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, h, [](const Vec& x) { return x[0] < 0.3 || x[1] < 0.3; }),
        shape2(Vec{-1.0, -1.0}, Vec{5.0, 1.0}, h,
               [](const Vec& x) { return norm(x) <= 1.0 || norm(x - Vec{4.0, 0.0}) <= 1.0; }),
        shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, h,
               [](const Vec& x) { return std::abs(x[0]) < 0.2 || std::abs(x[1]) < 0.2; })};
    for (const VoxelSet& E : convex) {
        const ConvexityReport r = convexity_index(E, budget, 1);
        EXPECT_GE(r.index, 0.95);
        EXPECT_LE(r.index, 1.0 + r.abs_error_95);
    }
    for (const VoxelSet& E : nonconvex) {
        const ConvexityReport r = convexity_index(E, budget, 1);
        EXPECT_LE(r.index, 0.90);
        EXPECT_GE(r.index, -r.abs_error_95);
    }
}

TEST(ConvexityIndex, DeterministicAndThreadIndependent) {
    const VoxelSet d = unit_disk(1.0 / 64);
    const int saved = thread_count();
    set_thread_count(1);
    const auto a = convexity_index(d, 50000, 5);
    set_thread_count(3);
    const auto b = convexity_index(d, 50000, 5);
    set_thread_count(saved);
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.abs_error_95, b.abs_error_95);
}

TEST(ConvexityIndex, ThinLayerBarelyMoves) {
    const double h = 1.0 / 256;
    const VoxelSet d = unit_disk(h);
    VoxelSet cut = d;
    // A 150-cell row, under 0.1% of the disk.
    const long j = d.size(1) / 2;
    for (long i = d.size(0) / 2 - 75; i < d.size(0) / 2 + 75; ++i) cut.set(i, j, 0, false);
    ASSERT_LT((d.count() - cut.count()) * h * h, 1e-3 * d.volume());
    EXPECT_LT(std::abs(convexity_index(d, 300000, 2).index - convexity_index(cut, 300000, 2).index), 0.01);
}

TEST(RenIdentity, DiskClosedForm) {
    const RenCheck r = ren_identity_check(unit_disk(1.0 / 256), 1000000, 9);
    EXPECT_NEAR(r.lhs, 3 * kPi * kPi, 0.02 * 3 * kPi * kPi);
    EXPECT_NEAR(r.rhs, 3 * kPi * kPi, 0.01 * 3 * kPi * kPi);
    // The closed form itself: pi * int (2 sqrt(1 - s^2))^3 ds.
    double integral = 0.0;
    const int steps = 200000;
    for (int k = 0; k < steps; ++k) {
        const double s = -1.0 + (k + 0.5) * 2.0 / steps;
        integral += std::pow(2.0 * std::sqrt(1.0 - s * s), 3) * 2.0 / steps;
    }
    EXPECT_NEAR(kPi * integral, 3 * kPi * kPi, 1e-6);
}

TEST(RenIdentity, SquareAndConvexCorpusRatio) {
    const RenCheck sq = ren_identity_check(unit_square(1.0 / 256), 1000000, 4);
    EXPECT_NEAR(sq.rhs, 3.0, 1e-12);
    EXPECT_GE(sq.ratio, 0.97);
    EXPECT_LE(sq.ratio, 1.03);
    const VoxelSet ell = shape2(Vec{-1.0, -0.5}, Vec{1.0, 0.5}, 1.0 / 256,
                                [](const Vec& x) { return x[0] * x[0] + 4 * x[1] * x[1] <= 1.0; });
    const RenCheck e = ren_identity_check(ell, 1000000, 4);
    EXPECT_GE(e.ratio, 0.97);
    EXPECT_LE(e.ratio, 1.03);
}

TEST(RenIdentity, ScalingLeavesRatioUnchanged) {
    const VoxelSet tri = shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, 1.0 / 64, [](const Vec& x) { return x[0] + x[1] <= 1.0; });
    VoxelSet big(2, tri.dims(), tri.cell() * 3.0, tri.origin() * 3.0);
    for (std::size_t c = 0; c < tri.cell_total(); ++c) big.set_flat(c, tri.at_flat(c));
    const RenCheck a = ren_identity_check(tri, 100000, 6);
    const RenCheck b = ren_identity_check(big, 100000, 6);
    EXPECT_NEAR(b.lhs / a.lhs, std::pow(3.0, 4), 1e-6 * std::pow(3.0, 4));
    EXPECT_NEAR(b.rhs / a.rhs, std::pow(3.0, 4), 1e-9);
    EXPECT_NEAR(a.ratio, b.ratio, 1e-9);
}

TEST(AffineInvariance, IdentityRotationAndStretch) {
    const VoxelSet d = unit_disk(1.0 / 128);
    const auto id = affine_invariance_check(d, Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), 100000, 1);
    EXPECT_NEAR(id.original.index, id.transformed.index, 0.01);
    Eigen::Matrix2d rot;
    rot << std::cos(kPi / 7), -std::sin(kPi / 7), std::sin(kPi / 7), std::cos(kPi / 7);
    EXPECT_TRUE(affine_invariance_check(d, rot, Eigen::Vector2d(0.3, -1.0), 200000, 2).agree);
    const auto st = affine_invariance_check(unit_square(1.0 / 128), Eigen::Vector2d(4.0, 0.25).asDiagonal().toDenseMatrix(),
                                            Eigen::Vector2d::Zero(), 200000, 3);
    EXPECT_TRUE(st.agree) << st.difference << " vs " << st.combined_error_95;
    try {
        affine_invariance_check(d, Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "xray.singular_map");
    }
}

TEST(AffineInvariance, RandomWellConditionedMaps) {
    Rng rng(31);
    const VoxelSet shape = shape2(Vec{0.0, 0.0}, Vec{1.0, 1.0}, 1.0 / 96,
                                  [](const Vec& x) { return x[0] < 0.4 || x[1] < 0.4; });
    int checked = 0;
    while (checked < 20) {
        Eigen::Matrix2d A;
        A << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2);
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(A);
        const double cond = svd.singularValues()(0) / svd.singularValues()(1);
        if (!(cond <= 10.0) || std::abs(A.determinant()) < 0.05) continue;
        const auto r = affine_invariance_check(shape, A, Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)),
                                               100000, checked);
        EXPECT_TRUE(r.agree) << "map " << checked << ": " << r.difference << " vs " << r.combined_error_95;
        ++checked;
    }
}

TEST(ConvexCore, BoxIsItsOwnCore) {
    const VoxelSet box = shape2(Vec{0.0, 0.0}, Vec{1.0, 0.5}, 1.0 / 64, [](const Vec&) { return true; });
    const CoreResult r = find_convex_core(box);
    EXPECT_TRUE(r.found);
    EXPECT_GE(r.inside_ratio, 0.99);
    EXPECT_GE(r.covered_ratio, 0.99);
}

TEST(ConvexCore, IgnoresSmallDistantSpeck) {
    const double h = 1.0 / 64;
    const VoxelSet E = shape2(Vec{0.0, 0.0}, Vec{3.0, 1.0}, h, [](const Vec& x) {
        const bool box = x[0] <= 1.0 && x[1] <= 1.0;
        const bool speck = std::abs(x[0] - 2.7) < 0.05 && std::abs(x[1] - 0.5) < 0.05;
        return box || speck;
    });
    const CoreResult r = find_convex_core(E);
    EXPECT_TRUE(r.found);
    EXPECT_GE(r.inside_ratio, 0.99);
    EXPECT_GE(r.covered_ratio, 0.98);
    EXPECT_LE(r.box.diameter(), std::sqrt(2.0) + 4 * h);
}

TEST(ConvexCore, ThinAnnulusFailsTheGate) {
    const VoxelSet annulus = shape2(Vec{-1.0, -1.0}, Vec{1.0, 1.0}, 1.0 / 128, [](const Vec& x) {
        const double r = norm(x);
        return r <= 1.0 && r >= 0.95;
    });
    CoreOptions o;
    o.c_min = 0.5;
    try {
        find_convex_core(annulus, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "xray.precondition");
    }
}

TEST(ShiftedIntersection, UnitSquareAndCube) {
    const auto sq = shifted_intersection_check(unit_square(1.0 / 64));
    EXPECT_NEAR(sq.lhs, 2.0 / 3.0, 0.02);
    EXPECT_NEAR(sq.rhs, 2.0 * std::pow(std::sqrt(2.0), 1.0 / 3.0), 1e-9);
    EXPECT_TRUE(sq.holds);
    const VoxelSet cube = VoxelSet::from_predicate(3, Vec{0.0, 0.0, 0.0}, Vec{1.0, 1.0, 1.0}, 1.0 / 32,
                                                   [](const Vec&) { return true; });
    const auto c = shifted_intersection_check(cube);
    EXPECT_NEAR(c.lhs, 0.5, 0.03);
    EXPECT_NEAR(c.rhs, 2.0 * std::pow(3.0, 0.2), 0.02);
    EXPECT_TRUE(c.holds);
}

TEST(ShiftedIntersection, SingleVoxel) {
    VoxelSet v(2, {3, 3, 1}, 0.1, Vec{0.0, 0.0});
    v.set(1, 1, 0, true);
    const auto r = shifted_intersection_check(v);
    EXPECT_LE(r.lhs, r.rhs * (1 + r.slack));
    EXPECT_NEAR(r.lhs, 0.1 * 0.01, 1e-12);
}

TEST(ShiftedIntersection, RandomUnionsOfBoxesNeverViolate) {
    Rng rng(77);
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
        const auto r = shifted_intersection_check(E);
        EXPECT_TRUE(r.holds) << "trial " << trial << ": " << r.lhs << " vs " << r.rhs;
    }
}

TEST(VoxelDiameter, SquareAndDisk) {
    EXPECT_NEAR(voxel_diameter(unit_square(1.0 / 32)), std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(voxel_diameter(unit_disk(1.0 / 128)), 2.0, 4.0 / 128);
}
