#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tubekit/combinatorics.hpp"
#include "tubekit/tube.hpp"
#include "tubekit/voxel.hpp"
#include "tubekit/xray.hpp"

namespace tubekit {

struct DirectionGroup {
    Direction center;
    std::vector<std::size_t> members;
};

struct GoodConfigCertificate {
    Vec O;
    double epsilon0 = 0.5;
    double lambda0 = 0.0;
    std::vector<DirectionGroup> groups;
};

struct GoodConfigCheck {
    bool ok = false;
    //! "a", "b", "distinct" or "index" for the first failed requirement.
    std::string condition;
    std::optional<std::size_t> tube;
    std::string message;
};

//! Exact check of conditions (a) and (b) for the certified subfamily.
GoodConfigCheck check_good_config(const TubeFamily& f, const GoodConfigCertificate& cert,
                                  bool check_distinct = true);

//! lambda0 implied by a certificate: (min(#groups, smallest group) delta^(n-1))^2.
double implied_lambda0(const GoodConfigCertificate& cert, double delta, int n);

struct DenseBallOptions {
    //! Sample points with multiplicity >= multiplicity_constant delta^(1-n) form M.
    double multiplicity_constant = 0.1;
    //! x in M is kept when |B(x, 1) ∩ M| exceeds this volume.
    double mass_constant = 0.01;
    //! A ball must hold at least ball_density delta^(2-2n) whole tubes.
    double ball_density = 0.125;
    int samples_per_tube = 8;
    std::uint64_t seed = 0;
};

struct DenseBall {
    Vec center;
    std::vector<std::size_t> members;
    int multiplicity = 0;
};

//! Disjoint radius-3 balls around high-multiplicity points, each holding
//! enough whole tubes.
std::vector<DenseBall> extract_dense_balls(const TubeFamily& f, const DenseBallOptions& options = {});

struct GoodConfigOptions {
    //! Minimum tubes in the input, as a multiple of delta^(2-2n).
    double density = 0.125;
    //! Caps with at least lambda2 delta^(1-n) tubes are kept.
    double lambda2 = 0.1;
    //! Random candidate points for O besides the tube centers.
    int candidates = 2048;
    std::uint64_t seed = 0;
};

//! Subfamily of `members` forming an (epsilon0, lambda0)-good configuration.
//! Throws rigidity.density when the input is too small and rigidity.no_config
//! when no cap survives.
GoodConfigCertificate extract_good_config(const TubeFamily& f, const std::vector<std::size_t>& members,
                                          double epsilon0, const GoodConfigOptions& options = {});

//! Family in a frame where x' = rotation x + translation.
struct NormalizedFamily {
    TubeFamily family;
    Eigen::MatrixXd rotation;
    Eigen::VectorXd translation;
};

//! Rotates the mean direction to e_n and moves O to the origin, where O is the
//! horizontal centroid of the centers at height median + 3/16. Throws
//! rigidity.precondition naming the first tube tilted more than max_tilt.
NormalizedFamily normalize_family(const TubeFamily& f, double max_tilt);

struct BushOptions {
    //! Grid constant c0 in units of delta; Z has pitch 2 c0.
    double grid_constant = 0.25;
    //! Clusters need at least cluster_threshold sqrt(N) members.
    double cluster_threshold = 0.25;
    //! Stop when fewer than stop_fraction N tubes remain.
    double stop_fraction = 0.25;
    //! Directions must lie within this angle of e_n.
    double max_tilt = 1.0 / 50.0;
    int t0_steps = 17;
    int d0_steps = 9;
};

struct BushCluster {
    Direction e;
    std::vector<std::size_t> members;
};

struct BushDirections {
    std::vector<BushCluster> clusters;
    double t0 = 0.0;
    double d0 = 0.0;
    //! Tubes meeting all three planes.
    std::size_t assigned = 0;
    std::size_t remaining = 0;
    bool extremal = false;
};

//! Expects a normalized family (see normalize_family); indices refer to f.
BushDirections detect_bush_directions(const TubeFamily& f, const BushOptions& options = {});

//! |K ∩ {x_n = t}| on a grid of cell h.
double section_area(const TubeFamily& f, double t, double h);

struct DenseInterval {
    //! m(A, lambda).
    double length = 0.0;
    //! Tight interval between the run endpoints of the maximizer.
    double lo = 0.0, hi = 0.0;
    double mass = 0.0;
};

//! Longest interval I with |I ∩ A| >= lambda |I| for A a finite union of intervals.
DenseInterval max_dense_interval(std::vector<std::pair<double, double>> runs, double lambda);

struct StructureOptions {
    BushOptions bush;
    //! Tilt allowed before normalization.
    double max_tilt = kPi / 3.0;
    double lambda = 0.5;
    //! Dilation factor parameter in (1/lambda0) F + ((lambda0 - 1)/lambda0) F.
    double lambda0 = 0.5;
    double convexity_threshold = 0.5;
    double discretization_k = 9.0;
    std::int64_t convexity_budget = 200000;
    std::uint64_t seed = 0;
};

struct StructureReport {
    bool found = false;
    std::string reason;
    std::size_t clusters = 0;
    Direction axis;
    //! Box E' in the frame, then E = its k delta-neighborhood.
    Vec box_lo, box_hi;
    VoxelSet E;
    //! x' = rotation x + translation maps the family into E x [0, 2].
    Eigen::MatrixXd rotation;
    Eigen::VectorXd translation;
    std::vector<std::size_t> captured;
    double capture_fraction = 0.0;
    double volume_ratio = 0.0;
    double diameter = 0.0;
    double convexity_index = 0.0;
};

StructureReport detect_structure(const TubeFamily& f, const StructureOptions& options = {});

nlohmann::json certificate_to_json(const GoodConfigCertificate& c);
GoodConfigCertificate certificate_from_json(const nlohmann::json& j);
nlohmann::json structure_to_json(const StructureReport& r);
nlohmann::json bush_to_json(const BushDirections& r);

}  // namespace tubekit
