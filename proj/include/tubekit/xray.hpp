#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tubekit/tube.hpp"
#include "tubekit/voxel.hpp"

namespace tubekit {

//! Line {offset + s xi}; offset lies in xi^perp. weight is its quadrature weight.
struct LineSample {
    Direction xi;
    Vec offset;
    double weight = 1.0;
};

//! |E ∩ line| through `point` along unit vector `dir`, by exact cell traversal.
double xray_line(const VoxelSet& E, const Vec& point, const Vec& dir);
double xray_line(const VoxelSet& E, const LineSample& line);
//! Maximal parameter intervals [s0, s1] where point + s dir lies in E, ascending.
std::vector<std::pair<double, double>> line_runs(const VoxelSet& E, const Vec& point, const Vec& dir);

struct ConvexityReport {
    int m = 0;
    double index = 0.0;
    double abs_error_95 = 0.0;
    std::int64_t line_samples = 0;
    double volume = 0.0;
    //! Estimate of the integral of |E_l|^(m+1) over the line space.
    double power_integral = 0.0;
    double power_error_95 = 0.0;
};

//! Crop to the occupied cells (keeps geometry, shrinks the grid).
VoxelSet crop(const VoxelSet& E);

ConvexityReport convexity_index(const VoxelSet& E, std::int64_t budget = 1000000, std::uint64_t seed = 0);

struct RenCheck {
    double lhs = 0.0;
    double lhs_error_95 = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
};

RenCheck ren_identity_check(const VoxelSet& E, std::int64_t budget = 1000000, std::uint64_t seed = 0);

//! Image A E + b resampled on a grid with cell h |det A|^(1/m), so the cell
//! count of the image matches the original.
VoxelSet apply_affine(const VoxelSet& E, const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

struct AffineCheck {
    ConvexityReport original;
    ConvexityReport transformed;
    double difference = 0.0;
    double combined_error_95 = 0.0;
    bool agree = false;
};

AffineCheck affine_invariance_check(const VoxelSet& E, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    std::int64_t budget = 200000, std::uint64_t seed = 0);

//! Box {x : lo <= frame^T (x - anchor) <= hi}; frame columns are orthonormal.
struct OrientedBox {
    Eigen::MatrixXd frame;
    Eigen::VectorXd anchor;
    Eigen::VectorXd lo, hi;
    double volume() const;
    bool contains(const Vec& x) const;
    //! Largest distance between two corners.
    double diameter() const;
};

struct CoreResult {
    bool found = false;
    OrientedBox box;
    //! |F ∩ E| / |F| and |F ∩ E| / |E|.
    double inside_ratio = 0.0;
    double covered_ratio = 0.0;
    double index = 0.0;
};

struct CoreOptions {
    double c_min = 0.5;
    //! Both ratios must reach this for found = true.
    double threshold = 0.9;
    std::int64_t index_budget = 200000;
    std::uint64_t seed = 0;
    //! Skip the index gate (callers that already computed it).
    std::optional<double> known_index;
};

//! Practical search over PCA-aligned and axis-aligned boxes maximizing
//! min(|F∩E|/|F|, |F∩E|/|E|). Throws xray.precondition when the index is below c_min.
CoreResult find_convex_core(const VoxelSet& E, const CoreOptions& options = {});

struct ShiftedIntersection {
    double lhs = 0.0;
    double rhs = 0.0;
    double diameter = 0.0;
    double slack = 0.05;
    bool holds = true;
};

//! Integral over t of |E ∩ (E + t e_1) ∩ ... ∩ (E + t e_m)| at integer cell shifts,
//! against 2 (d^(m-1) |E|^(2m))^(1/(2m-1)).
ShiftedIntersection shifted_intersection_check(const VoxelSet& E, double slack = 0.05);

//! Diameter of the union of set cells: exact hull in 2D, 4096-direction lower bound in 3D.
double voxel_diameter(const VoxelSet& E);

}  // namespace tubekit
