#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tubekit/tube.hpp"
#include "tubekit/tube_index.hpp"

namespace tubekit {

enum class VolumeMethod { monte_carlo, grid };

std::string to_string(VolumeMethod m);
VolumeMethod parse_volume_method(const std::string& s);

struct VolumeEstimate {
    double value = 0.0;
    //! 95% half-width for Monte Carlo; deterministic bracket half-width for grid.
    double abs_error_95 = 0.0;
    VolumeMethod method = VolumeMethod::monte_carlo;
    std::int64_t samples = 0;
    bool converged = true;
    //! Grid brackets (cells inside the eroded / dilated union); equal to value for Monte Carlo.
    double lower = 0.0;
    double upper = 0.0;
};

struct MultiplicityProfile {
    int nu_max = 0;
    Vec argmax_point;
    //! histogram[k] = number of sample points with multiplicity k.
    std::vector<std::int64_t> histogram;
    std::int64_t samples = 0;
};

int multiplicity_at(const TubeFamily& f, const Vec& x);

struct VolumeOptions {
    VolumeMethod method = VolumeMethod::monte_carlo;
    //! Sample count (Monte Carlo) or maximum cell count (grid).
    std::int64_t budget = 1 << 22;
    std::uint64_t seed = 0;
    //! Relative 95% error below which a Monte Carlo run counts as converged.
    double target_rel_error = 0.01;
    //! Grid cell size; 0 means delta / 4.
    double grid_cell = 0.0;
};

VolumeEstimate union_volume(const TubeFamily& f, const VolumeOptions& options = {});

//! max(sqrt(N) delta^(n-1), N delta^(2n-2)).
double lower_bound(double N, double delta, int n);

//! Multiplicity sampled on every tube centerline at spacing <= delta / 2.
MultiplicityProfile multiplicity_profile(const TubeFamily& f);

struct BushReport {
    Vec point;
    int nu = 0;
    //! Tubes through point, ascending.
    std::vector<std::size_t> bush;
    //! Greedy sub-bush with pairwise angles > sep_constant * delta.
    std::vector<std::size_t> separated;
    int k = 0;
    double exclusion_radius = 0.0;
    //! Sum over the sub-bush of |T| (1 - 2R/height), a lower bound for |T \ B(point, R)|.
    double certified_bound = 0.0;
};

BushReport bush_check(const TubeFamily& f, double sep_constant = 4.0);

}  // namespace tubekit
