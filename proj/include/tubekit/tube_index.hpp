#pragma once

#include <cstdint>
#include <vector>

#include "tubekit/common.hpp"
#include "tubekit/tube.hpp"

namespace tubekit {

struct Box {
    Vec lo, hi;
    double volume() const;
    bool contains(const Vec& x) const;
};

//! Bounding box of a tube (exact for the axis segment, padded by the radius).
Box tube_box(const Tube& t);

//! Uniform grid over a family's bounding box. Each cell lists every tube that
//! can reach any point of the cell, so point queries only test those tubes.
class TubeIndex {
public:
    TubeIndex() = default;
    //! cell <= 0 picks a size near delta, coarsened to keep at most max_cells.
    //! pad (+ pad_cells grid cells) widens the registration reach, for queries
    //! against dilated tubes.
    explicit TubeIndex(const TubeFamily& f, double cell = 0.0, double pad = 0.0, std::int64_t max_cells = 1 << 23,
                       double pad_cells = 0.0);

    const TubeFamily& family() const { return *family_; }
    const Box& bounds() const { return bounds_; }
    double cell() const { return cell_; }

    //! Tubes that may contain x; empty outside the grid.
    std::pair<const std::uint32_t*, const std::uint32_t*> candidates(const Vec& x) const;
    int multiplicity(const Vec& x) const;
    std::size_t cell_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    //! Tubes registered in the flat cell c.
    std::pair<const std::uint32_t*, const std::uint32_t*> cell_entries(std::size_t c) const {
        return {entries_.data() + offsets_[c], entries_.data() + offsets_[c + 1]};
    }
    //! Lowest index of a tube containing x, or -1.
    long first_containing(const Vec& x) const;

private:
    long cell_of(const Vec& x) const;

    const TubeFamily* family_ = nullptr;
    Box bounds_;
    double cell_ = 0.0;
    std::array<long, kMaxDim> shape_{};
    std::vector<std::uint64_t> offsets_;
    std::vector<std::uint32_t> entries_;
};

}  // namespace tubekit
