#pragma once

#include <cstdint>
#include <vector>

#include "tubekit/tube.hpp"
#include "tubekit/voxel.hpp"

namespace tubekit {

struct PackOptions {
    //! c in floor(c theta / delta), the per-slice stack size.
    double stack_constant = 0.25;
    //! Erosion margins for E' and E'' in units of delta.
    double outer_margin = 2.0;
    double inner_margin = 0.5;
    //! Net separation in units of delta.
    double net_separation = 3.0;
    //! Required discretization radius in units of delta.
    double discretization_k = 9.0;
    bool check_convexity = true;
    bool check_discretization = true;
    bool check_diameter = true;
    double convexity_threshold = 0.9;
    std::int64_t convexity_budget = 200000;
    std::uint64_t seed = 0;
};

struct DirectionCount {
    Direction e;
    double theta = 0.0;
    //! Slices whose central line meets E' in a run of length >= theta.
    long qualifying_slices = 0;
    //! Tubes kept after the exact containment check.
    long count = 0;
    long dropped = 0;
};

struct PackResult {
    TubeFamily family;
    std::vector<DirectionCount> directions;
    //! (|E| / delta^(n-1))^2.
    double implied_N = 0.0;
    double outer_volume = 0.0;
    double inner_volume = 0.0;
    long dropped = 0;
};

//! Places essentially distinct delta-tubes into E x [0, 2] for E ⊂ R^{n-1}
//! (n = 2 or 3) by the slice-and-stack rule over a direction net.
PackResult pack_tubes(const VoxelSet& E, double delta, int n, const PackOptions& options = {});

//! Tubes the packer realizes in direction e.
long direction_count(const VoxelSet& E, const Direction& e, double delta, const PackOptions& options = {});

//! Number of slices (normal to xi, thickness delta) whose central line meets
//! `eroded` in a run of length >= theta. xi is a unit vector in R^{n-1}.
long qualifying_slices(const VoxelSet& eroded, const Vec& xi, double theta, double delta);

//! Exact check that a tube lies in E x [0, height].
bool tube_inside_prism(const Tube& t, const VoxelSet& E, double height = 2.0);

//! Validation used by pack_tubes; throws the matching packing.* error.
void check_pack_input(const VoxelSet& E, double delta, int n, const PackOptions& options);

}  // namespace tubekit
