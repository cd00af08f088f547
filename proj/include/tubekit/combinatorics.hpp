#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "json.hpp"
#include "tubekit/common.hpp"

namespace tubekit {

//! Finite surrogate for a measure space E, a point set S in R^n, and an
//! assignment x -> E_x. Each point of S stands for a cell of mass s_weights[i].
struct AssignmentInstance {
    int n = 2;
    double c = 0.5;
    std::vector<Vec> points;
    std::vector<double> s_weights;
    std::vector<double> universe_weights;
    std::vector<boost::dynamic_bitset<>> assignment;

    double universe_weight() const;
    double s_mass() const;
    double weight(const boost::dynamic_bitset<>& subset) const;
    //! Throws combinatorics.precondition when some weight(E_x) < c weight(E).
    void validate() const;
};

struct SimplexResult {
    //! False when S ran out of mass off a k-plane (degenerate S).
    bool complete = false;
    std::vector<std::size_t> indices;
    std::vector<Vec> points;
    //! Weight of the intersection of the original E_x over the chosen points.
    double common_weight = 0.0;
    double simplex_volume = 0.0;
    //! Realized constants: common_weight / weight(E) and simplex_volume / |S|.
    double c_prime = 0.0;
    double lambda = 0.0;
    long steps = 0;
    double step_bound = 0.0;
    std::vector<int> final_index;
    //! Radii r_1..r_n of the final step.
    std::vector<double> radii;
    //! Intersection threshold c^I weight(E) / Q^2 at the last accepted substep.
    double weight_threshold = 0.0;
};

SimplexResult select_simplex(const AssignmentInstance& inst);

struct SimplexVerification {
    bool ok = false;
    //! (a): recomputed common weight >= the final step threshold and > 0.
    bool weight_condition = false;
    //! (b): each vertex lies at distance >= r_k from the previous plane and the volume is positive.
    bool volume_condition = false;
    double common_weight = 0.0;
    double simplex_volume = 0.0;
    std::string message;
};

//! Recomputes (a) and (b) from scratch over the original sets.
SimplexVerification verify_simplex(const AssignmentInstance& inst, const SimplexResult& r);

//! Volume of the simplex with the given n + 1 vertices in R^n.
double simplex_volume(const std::vector<Vec>& vertices);

//! Distance from y to the affine span of the given points.
double distance_to_span(const std::vector<Vec>& span, const Vec& y);

//! Grid of side^n cells on [0,1]^n, a uniform ground set of `universe` elements,
//! and E_x random subsets of round(keep * universe) elements.
AssignmentInstance random_assignment_instance(int n, int side, int universe, double keep, double c,
                                              std::uint64_t seed);

nlohmann::json assignment_to_json(const AssignmentInstance& inst);
AssignmentInstance assignment_from_json(const nlohmann::json& j);
nlohmann::json simplex_to_json(const SimplexResult& r);

using LatticePoint = std::vector<long>;
using LatticePair = std::pair<LatticePoint, LatticePoint>;

struct SumsetInstance {
    int rank = 1;
    std::vector<LatticePoint> A, B;
    std::vector<LatticePair> G;
};

struct FiberResult {
    std::size_t M = 0;
    //! A maximizing difference: smallest squared norm, then lexicographically smallest.
    LatticePoint witness;
    std::size_t distinct_differences = 0;
};

FiberResult max_difference_fiber(const std::vector<LatticePair>& G);

struct SumsetCheck {
    std::size_t G = 0;
    std::size_t A = 0, B = 0, C = 0;
    std::size_t N0 = 0;
    std::size_t M = 0;
    LatticePoint witness;
    double rhs = 0.0;
    bool holds = true;
};

//! Throws combinatorics.precondition when G is not a subset of A x B.
SumsetCheck sumset_bound_check(const SumsetInstance& inst);

//! A, B of random sizes in [1, max_size] from the box [-radius, radius]^rank,
//! G a random subset of A x B.
SumsetInstance random_sumset_instance(int rank, int max_size, long radius, std::uint64_t seed);

nlohmann::json sumset_to_json(const SumsetInstance& inst);
SumsetInstance sumset_from_json(const nlohmann::json& j);
nlohmann::json sumset_check_to_json(const SumsetCheck& c);

}  // namespace tubekit
