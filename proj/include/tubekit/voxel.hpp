#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tubekit/common.hpp"

namespace tubekit {

//! Binary grid in R^m (m <= 3). Cell (i, j, k) covers
//! origin + h * [i, i+1] x [j, j+1] x [k, k+1]; axis 0 varies fastest.
class VoxelSet {
public:
    VoxelSet() = default;
    VoxelSet(int m, std::array<long, 3> dims, double h, const Vec& origin);

    //! Cells of the grid spanning [lo, hi] whose centers satisfy inside(x).
    static VoxelSet from_predicate(int m, const Vec& lo, const Vec& hi, double h,
                                   const std::function<bool(const Vec&)>& inside);

    int dim() const { return m_; }
    long size(int axis) const { return dims_[axis]; }
    const std::array<long, 3>& dims() const { return dims_; }
    double cell() const { return h_; }
    const Vec& origin() const { return origin_; }
    std::size_t cell_total() const { return mask_.size(); }

    std::size_t flat(long i, long j = 0, long k = 0) const {
        return static_cast<std::size_t>((k * dims_[1] + j) * dims_[0] + i);
    }
    std::array<long, 3> unflat(std::size_t c) const;
    bool at(long i, long j = 0, long k = 0) const { return mask_[flat(i, j, k)] != 0; }
    bool at_flat(std::size_t c) const { return mask_[c] != 0; }
    void set(long i, long j, long k, bool v) { mask_[flat(i, j, k)] = v ? 1 : 0; }
    void set_flat(std::size_t c, bool v) { mask_[c] = v ? 1 : 0; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    std::size_t count() const;
    double volume() const;
    Vec cell_center(std::size_t c) const;
    //! Membership of a point via its cell; false outside the grid.
    bool contains(const Vec& x) const;
    //! Flat index of the cell containing x, or -1.
    long locate(const Vec& x) const;

    //! Smallest index box holding all set cells, as [lo, hi) per axis; false if empty.
    bool tight_bounds(std::array<long, 3>& lo, std::array<long, 3>& hi) const;
    //! Point-space bounding box of the set cells.
    bool tight_box(Vec& lo, Vec& hi) const;

    //! Copy with `pad` empty cells added on every side.
    VoxelSet padded(long pad) const;

    bool operator==(const VoxelSet& o) const;

private:
    int m_ = 0;
    std::array<long, 3> dims_{1, 1, 1};
    double h_ = 0.0;
    Vec origin_;
    std::vector<std::uint8_t> mask_;
};

//! Euclidean distance (in point units) from each cell center to the nearest
//! center of a cell where `target` is false. Cells outside the grid count as
//! false when outside_is_target is false.
std::vector<double> distance_to(const VoxelSet& v, bool target, bool outside_is_target = false);

//! Cells whose centers are at distance >= r from every empty cell (distance measured
//! from the empty cell's nearest face, approximated as center distance - h/2).
VoxelSet erode(const VoxelSet& v, double r);
//! Cells whose centers are within r of some set cell center.
VoxelSet dilate(const VoxelSet& v, double r);

VoxelSet parse_vox(const std::string& text);
std::string format_vox(const VoxelSet& v);
VoxelSet load_vox(const std::string& path);
void save_vox(const VoxelSet& v, const std::string& path);

}  // namespace tubekit
