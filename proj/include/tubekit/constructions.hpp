#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tubekit/tube.hpp"
#include "tubekit/voxel.hpp"

namespace tubekit {

enum class ConstructionKind { standard, small_cap, embedded, slab, cascade };

std::string to_string(ConstructionKind k);
ConstructionKind parse_construction_kind(const std::string& s);

struct ConstructionSpec {
    ConstructionKind kind = ConstructionKind::standard;
    int n = 2;
    double delta = 1.0 / 128;
    //! Requested tube count (small_cap, embedded, slab); ignored otherwise.
    double N_target = 1.0;
    //! Inner dimension for embedded and slab.
    int d = 2;
    //! Center O; empty means the origin.
    Vec center;
    //! Enforce delta < 1/100 where the construction asks for it.
    bool paper_regime = true;
};

//! Spacing of the direction nets, in units of delta.
inline constexpr double kConstructionNetSpacing = 3.0;
//! Distance between consecutive cascade components along the first axis.
inline constexpr double kCascadePitch = 12.0;
//! Distance between copies of the standard configuration in the embedded construction.
inline constexpr double kCopyPitch = 12.0;

TubeFamily standard_configuration(int n, double delta, const Vec& center = {}, bool paper_regime = true);

//! Throws regime.violation when N > delta^(2-2n).
TubeFamily small_cap_configuration(int n, double delta, double N, const Vec& center = {});

//! d-dimensional sharp example lifted into R^n (extra coordinates zero).
TubeFamily embedded_configuration(int n, int d, double delta, double N);

struct SlabResult {
    TubeFamily family;
    //! Box lo/hi of E in R^(n-1).
    Vec lo, hi;
    //! Voxelized E used by the packer (first d coordinates).
    VoxelSet base;
};

//! E = [0, N^(1/2d) delta]^d x [0, delta]^(n-1-d), filled with tubes inside E x [0, 2].
//! Supports d = 2 (so n >= 3).
SlabResult slab_configuration(int n, int d, double delta, double N);

//! small_cap components with N0 = delta^(2-2n), N0/2, ..., 1 spaced kCascadePitch apart.
std::vector<TubeFamily> cascade_example(int n, double delta, bool paper_regime = true);

struct ConstructionResult {
    std::vector<TubeFamily> components;
    std::optional<SlabResult> slab;
    //! All components in one family.
    TubeFamily merged() const;
};

ConstructionResult build_construction(const ConstructionSpec& spec);

}  // namespace tubekit
