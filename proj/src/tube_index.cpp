#include "tubekit/tube_index.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace tubekit {

double Box::volume() const {
    double v = 1.0;
    for (int i = 0; i < lo.dim(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
    return v;
}

bool Box::contains(const Vec& x) const {
    for (int i = 0; i < lo.dim(); ++i)
        if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
}

Box tube_box(const Tube& t) {
    auto [p, q] = t.endpoints();
    Box b{p, q};
    for (int i = 0; i < t.dim(); ++i) {
        // Extent of the cross-section disk along axis i is r * sqrt(1 - e_i^2).
        const double pad = t.radius() * std::sqrt(std::max(0.0, 1.0 - t.axis()[i] * t.axis()[i]));
        b.lo[i] = std::min(p[i], q[i]) - pad;
        b.hi[i] = std::max(p[i], q[i]) + pad;
    }
    return b;
}

TubeIndex::TubeIndex(const TubeFamily& f, double cell, double pad, std::int64_t max_cells, double pad_cells) : family_(&f) {
    const int n = f.dim();
    if (f.empty()) throw Error("measure.empty_family", "cannot index an empty family");
    bounds_ = tube_box(f[0]);
    for (std::size_t i = 1; i < f.size(); ++i) {
        const Box b = tube_box(f[i]);
        for (int k = 0; k < n; ++k) {
            bounds_.lo[k] = std::min(bounds_.lo[k], b.lo[k]);
            bounds_.hi[k] = std::max(bounds_.hi[k], b.hi[k]);
        }
    }
    cell_ = cell > 0.0 ? cell : f.delta();
    const Box raw = bounds_;
    auto pad_bounds = [&] {
        for (int k = 0; k < n; ++k) {
            bounds_.lo[k] = raw.lo[k] - pad - pad_cells * cell_;
            bounds_.hi[k] = raw.hi[k] + pad + pad_cells * cell_;
        }
    };
    pad_bounds();
    auto cells_for = [&](double c) {
        double total = 1.0;
        for (int k = 0; k < n; ++k) total *= std::floor((bounds_.hi[k] - bounds_.lo[k]) / c) + 1.0;
        return total;
    };
    max_cells = std::min<std::int64_t>(max_cells, std::int64_t{1} << 31);
    while (cells_for(cell_) > static_cast<double>(max_cells)) {
        cell_ *= 1.5;
        pad_bounds();
    }
    pad += pad_cells * cell_;
    std::int64_t total = 1;
    for (int k = 0; k < n; ++k) {
        shape_[k] = static_cast<long>(std::floor((bounds_.hi[k] - bounds_.lo[k]) / cell_)) + 1;
        total *= shape_[k];
    }

    const double half_diag = 0.5 * cell_ * std::sqrt(static_cast<double>(n));
    auto cells_of = [&](std::size_t ti, std::vector<std::uint32_t>& cells) {
        const Tube& t = f[ti];
        const double reach = t.radius() + pad + half_diag;
        const double step = cell_;
        const int samples = static_cast<int>(std::ceil(t.height() / step)) + 1;
        // Cells whose centers lie within reach + step / 2 of a sample cover
        // every cell within reach of the axis.
        const double around = reach + 0.5 * step;
        cells.clear();
        std::array<long, kMaxDim> lo{}, hi{}, idx{};
        for (int s = 0; s < samples; ++s) {
            const double a = -0.5 * t.height() + t.height() * s / std::max(1, samples - 1);
            const Vec p = t.center() + t.axis() * a;
            bool empty = false;
            for (int k = 0; k < n; ++k) {
                lo[k] = std::max(0L, static_cast<long>(std::ceil((p[k] - around - bounds_.lo[k]) / cell_ - 0.5)));
                hi[k] = std::min(shape_[k] - 1,
                                 static_cast<long>(std::floor((p[k] + around - bounds_.lo[k]) / cell_ - 0.5)));
                if (lo[k] > hi[k]) empty = true;
                idx[k] = lo[k];
            }
            if (empty) continue;
            for (;;) {
                std::uint64_t flat = 0;
                double to_sample = 0.0, along = 0.0;
                std::array<double, kMaxDim> rel{};
                for (int k = 0; k < n; ++k) {
                    flat = flat * shape_[k] + static_cast<std::uint64_t>(idx[k]);
                    const double c = bounds_.lo[k] + (idx[k] + 0.5) * cell_;
                    to_sample += (c - p[k]) * (c - p[k]);
                    rel[k] = c - t.center()[k];
                    along += rel[k] * t.axis()[k];
                }
                if (to_sample <= around * around) {
                    along = std::clamp(along, -0.5 * t.height(), 0.5 * t.height());
                    double off = 0.0;
                    for (int k = 0; k < n; ++k) {
                        const double r = rel[k] - along * t.axis()[k];
                        off += r * r;
                    }
                    if (off <= reach * reach) cells.push_back(static_cast<std::uint32_t>(flat));
                }
                int k = n - 1;
                while (k >= 0 && ++idx[k] > hi[k]) {
                    idx[k] = lo[k];
                    --k;
                }
                if (k < 0) break;
            }
        }
        std::sort(cells.begin(), cells.end());
        cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    };

    // Two passes over blocks of tubes (count, then fill) keep memory at the
    // size of the final index. Filling in tube order keeps cell lists sorted.
    constexpr std::size_t kBlock = 4096;
    std::vector<std::vector<std::uint32_t>> block(kBlock);
    auto for_blocks = [&](const std::function<void(std::size_t, const std::vector<std::uint32_t>&)>& use) {
        for (std::size_t start = 0; start < f.size(); start += kBlock) {
            const std::size_t len = std::min(kBlock, f.size() - start);
            parallel_for(len, [&](std::size_t b) { cells_of(start + b, block[b]); });
            for (std::size_t b = 0; b < len; ++b) use(start + b, block[b]);
        }
    };
    offsets_.assign(static_cast<std::size_t>(total) + 1, 0);
    for_blocks([&](std::size_t, const std::vector<std::uint32_t>& cells) {
        for (std::uint32_t c : cells) ++offsets_[c + 1];
    });
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    entries_.resize(offsets_.back());
    std::vector<std::uint64_t> fill(offsets_.begin(), offsets_.end() - 1);
    for_blocks([&](std::size_t ti, const std::vector<std::uint32_t>& cells) {
        for (std::uint32_t c : cells) entries_[fill[c]++] = static_cast<std::uint32_t>(ti);
    });
}

long TubeIndex::cell_of(const Vec& x) const {
    long flat = 0;
    for (int k = 0; k < x.dim(); ++k) {
        const double u = (x[k] - bounds_.lo[k]) / cell_;
        if (!(u >= 0.0)) return -1;
        const long i = static_cast<long>(u);
        if (i >= shape_[k]) return -1;
        flat = flat * shape_[k] + i;
    }
    return flat;
}

std::pair<const std::uint32_t*, const std::uint32_t*> TubeIndex::candidates(const Vec& x) const {
    const long c = cell_of(x);
    if (c < 0) return {nullptr, nullptr};
    return {entries_.data() + offsets_[c], entries_.data() + offsets_[c + 1]};
}

int TubeIndex::multiplicity(const Vec& x) const {
    auto [b, e] = candidates(x);
    int count = 0;
    for (auto it = b; it != e; ++it) count += (*family_)[*it].contains(x) ? 1 : 0;
    return count;
}

long TubeIndex::first_containing(const Vec& x) const {
    auto [b, e] = candidates(x);
    for (auto it = b; it != e; ++it)
        if ((*family_)[*it].contains(x)) return *it;
    return -1;
}

}  // namespace tubekit
