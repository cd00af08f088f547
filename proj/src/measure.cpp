#include "tubekit/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tubekit {

std::string to_string(VolumeMethod m) { return m == VolumeMethod::grid ? "grid" : "mc"; }

VolumeMethod parse_volume_method(const std::string& s) {
    if (s == "mc" || s == "monte_carlo") return VolumeMethod::monte_carlo;
    if (s == "grid") return VolumeMethod::grid;
    throw Error("usage.method", "unknown volume method: " + s);
}

int multiplicity_at(const TubeFamily& f, const Vec& x) {
    int count = 0;
    for (const Tube& t : f.tubes()) count += t.contains(x) ? 1 : 0;
    return count;
}

double lower_bound(double N, double delta, int n) {
    if (!(N >= 1.0)) throw Error("measure.count", "N must be at least 1");
    if (!(delta > 0.0)) throw Error("geometry.delta", "delta must be positive");
    return std::max(std::sqrt(N) * std::pow(delta, n - 1), N * std::pow(delta, 2 * n - 2));
}

namespace {

struct Component {
    Box box;
    std::vector<std::uint32_t> tubes;
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

// Tubes sharing an index cell are joined; tubes in different components
// never meet, so the union volume is the sum over components.
std::vector<Component> components(const TubeFamily& f, const TubeIndex& index, std::vector<std::uint32_t>& label,
                                  double inflate) {
    const int n = f.dim();
    std::vector<std::size_t> parent(f.size());
    std::iota(parent.begin(), parent.end(), 0);
    for (std::size_t c = 0; c < index.cell_count(); ++c) {
        auto [b, e] = index.cell_entries(c);
        if (b == e) continue;
        for (auto it = b + 1; it != e; ++it) {
            const std::size_t ra = find_root(parent, *b), rb = find_root(parent, *it);
            if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    }
    std::vector<Component> out;
    std::vector<long> slot(f.size(), -1);
    label.assign(f.size(), 0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const std::size_t r = find_root(parent, i);
        if (slot[r] < 0) {
            slot[r] = static_cast<long>(out.size());
            out.push_back({tube_box(f[i]), {}});
        }
        Component& c = out[slot[r]];
        const Box b = tube_box(f[i]);
        for (int k = 0; k < n; ++k) {
            c.box.lo[k] = std::min(c.box.lo[k], b.lo[k]);
            c.box.hi[k] = std::max(c.box.hi[k], b.hi[k]);
        }
        c.tubes.push_back(static_cast<std::uint32_t>(i));
        label[i] = static_cast<std::uint32_t>(slot[r]);
    }
    for (Component& c : out) {
        for (int k = 0; k < n; ++k) {
            c.box.lo[k] -= inflate;
            c.box.hi[k] += inflate;
        }
    }
    return out;
}

double wilson_half_width(std::int64_t hits, std::int64_t m) {
    constexpr double z = 1.96;
    const double p = static_cast<double>(hits) / m;
    const double z2m = z * z / m;
    return z / (1.0 + z2m) * std::sqrt(p * (1.0 - p) / m + z * z / (4.0 * m * static_cast<double>(m)));
}

VolumeEstimate monte_carlo_volume(const TubeFamily& f, const VolumeOptions& o) {
    const TubeIndex index(f);
    std::vector<std::uint32_t> label;
    const std::vector<Component> comps = components(f, index, label, f.delta());
    double total_box = 0.0;
    for (const Component& c : comps) total_box += c.box.volume();

    constexpr std::int64_t kChunk = 1 << 16;
    struct Job {
        std::size_t comp;
        std::int64_t count;
        std::uint64_t stream;
    };
    std::vector<std::int64_t> budget(comps.size());
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const double share = static_cast<double>(o.budget) * comps[c].box.volume() / total_box;
        budget[c] = std::max<std::int64_t>(4096, static_cast<std::int64_t>(std::llround(share)));
        std::int64_t left = budget[c];
        for (std::uint64_t chunk = 0; left > 0; ++chunk) {
            const std::int64_t take = std::min(kChunk, left);
            jobs.push_back({c, take, (static_cast<std::uint64_t>(c) << 32) | chunk});
            left -= take;
        }
    }
    std::vector<std::int64_t> hits(jobs.size(), 0);
    parallel_for(jobs.size(), [&](std::size_t ji) {
        const Job& job = jobs[ji];
        const Component& comp = comps[job.comp];
        Rng rng(mix_seed(o.seed, job.stream));
        const int n = f.dim();
        Vec x(n);
        std::int64_t h = 0;
        for (std::int64_t s = 0; s < job.count; ++s) {
            for (int k = 0; k < n; ++k) x[k] = rng.uniform(comp.box.lo[k], comp.box.hi[k]);
            auto [b, e] = index.candidates(x);
            for (auto it = b; it != e; ++it) {
                if (label[*it] == job.comp && f[*it].contains(x)) {
                    ++h;
                    break;
                }
            }
        }
        hits[ji] = h;
    });
    std::vector<std::int64_t> comp_hits(comps.size(), 0);
    for (std::size_t ji = 0; ji < jobs.size(); ++ji) comp_hits[jobs[ji].comp] += hits[ji];

    VolumeEstimate out;
    out.method = VolumeMethod::monte_carlo;
    double var = 0.0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const double v = comps[c].box.volume();
        out.value += v * static_cast<double>(comp_hits[c]) / budget[c];
        const double w = v * wilson_half_width(comp_hits[c], budget[c]);
        var += w * w;
        out.samples += budget[c];
    }
    out.abs_error_95 = std::sqrt(var);
    out.converged = out.abs_error_95 <= o.target_rel_error * out.value;
    out.lower = out.upper = out.value;
    return out;
}

VolumeEstimate grid_volume(const TubeFamily& f, const VolumeOptions& o) {
    const int n = f.dim();
    const double h = o.grid_cell > 0.0 ? o.grid_cell : 0.25 * f.delta();
    const double rho = 0.5 * h * std::sqrt(static_cast<double>(n));
    const TubeIndex index(f, 0.0, 2.0 * rho);
    std::vector<std::uint32_t> label;
    const std::vector<Component> comps = components(f, index, label, 0.0);

    struct Range {
        std::array<long, kMaxDim> lo{}, count{};
        std::int64_t cells = 1;
    };
    std::vector<Range> ranges(comps.size());
    std::int64_t total_cells = 0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        Range& r = ranges[c];
        for (int k = 0; k < n; ++k) {
            r.lo[k] = static_cast<long>(std::floor((comps[c].box.lo[k] - rho) / h));
            const long hi = static_cast<long>(std::ceil((comps[c].box.hi[k] + rho) / h));
            r.count[k] = hi - r.lo[k] + 1;
            r.cells *= r.count[k];
        }
        total_cells += r.cells;
    }
    if (total_cells > o.budget)
        throw Error("measure.budget", "grid needs " + std::to_string(total_cells) + " cells, budget is " +
                                          std::to_string(o.budget));

    // Work unit: one row along the last axis of one component.
    struct Row {
        std::size_t comp;
        std::int64_t first;
    };
    std::vector<Row> rows;
    for (std::size_t c = 0; c < comps.size(); ++c)
        for (std::int64_t i = 0; i < ranges[c].cells / ranges[c].count[n - 1]; ++i) rows.push_back({c, i});
    std::vector<std::array<std::int64_t, 3>> tally(rows.size());
    parallel_for(rows.size(), [&](std::size_t ri) {
        const Row& row = rows[ri];
        const Range& r = ranges[row.comp];
        Vec x(n);
        std::int64_t rest = row.first;
        for (int k = n - 2; k >= 0; --k) {
            x[k] = (r.lo[k] + rest % r.count[k] + 0.5) * h;
            rest /= r.count[k];
        }
        std::array<std::int64_t, 3> t{0, 0, 0};
        for (long j = 0; j < r.count[n - 1]; ++j) {
            x[n - 1] = (r.lo[n - 1] + j + 0.5) * h;
            bool in = false, inner = false, outer = false;
            auto [b, e] = index.candidates(x);
            for (auto it = b; it != e && !(in && inner); ++it) {
                if (label[*it] != row.comp) continue;
                const Tube& tb = f[*it];
                const Vec d = x - tb.center();
                const double s = std::abs(dot(d, tb.axis()));
                const double radial = std::sqrt(std::max(0.0, norm2(d) - s * s));
                const double half = 0.5 * tb.height(), rad = tb.radius();
                if (s <= half && radial <= rad) in = true;
                if (s <= half - rho && radial <= rad - rho) inner = true;
                if (s <= half + rho && radial <= rad + rho) outer = true;
            }
            t[0] += in;
            t[1] += inner;
            t[2] += outer || in;
        }
        tally[ri] = t;
    });
    std::array<std::int64_t, 3> sum{0, 0, 0};
    for (const auto& t : tally)
        for (int i = 0; i < 3; ++i) sum[i] += t[i];
    const double cell_volume = std::pow(h, n);
    VolumeEstimate out;
    out.method = VolumeMethod::grid;
    out.value = sum[0] * cell_volume;
    out.lower = sum[1] * cell_volume;
    out.upper = sum[2] * cell_volume;
    out.abs_error_95 = std::max(out.upper - out.value, out.value - out.lower);
    out.samples = total_cells;
    out.converged = true;
    return out;
}

}  // namespace

VolumeEstimate union_volume(const TubeFamily& f, const VolumeOptions& options) {
    if (f.empty()) throw Error("measure.empty_family", "union volume of an empty family");
    if (options.budget < 1) throw Error("measure.budget", "budget must be positive");
    return options.method == VolumeMethod::grid ? grid_volume(f, options) : monte_carlo_volume(f, options);
}

MultiplicityProfile multiplicity_profile(const TubeFamily& f) {
    MultiplicityProfile out;
    if (f.empty()) return out;
    const TubeIndex index(f);
    struct Local {
        int best = -1;
        Vec point;
        std::vector<std::int64_t> hist;
    };
    std::vector<Local> locals(f.size());
    parallel_for(f.size(), [&](std::size_t ti) {
        const Tube& t = f[ti];
        int K = static_cast<int>(std::ceil(2.0 * t.height() / t.delta()));
        K += K % 2;
        Local& l = locals[ti];
        for (int j = 0; j <= K; ++j) {
            const Vec x = t.center() + t.axis() * ((static_cast<double>(j) / K - 0.5) * t.height());
            const int mu = index.multiplicity(x);
            if (static_cast<int>(l.hist.size()) <= mu) l.hist.resize(mu + 1, 0);
            ++l.hist[mu];
            if (mu > l.best) {
                l.best = mu;
                l.point = x;
            }
        }
    });
    out.nu_max = -1;
    for (const Local& l : locals) {
        if (l.best > out.nu_max) {
            out.nu_max = l.best;
            out.argmax_point = l.point;
        }
        if (out.histogram.size() < l.hist.size()) out.histogram.resize(l.hist.size(), 0);
        for (std::size_t k = 0; k < l.hist.size(); ++k) {
            out.histogram[k] += l.hist[k];
            out.samples += l.hist[k];
        }
    }
    return out;
}

BushReport bush_check(const TubeFamily& f, double sep_constant) {
    if (f.empty()) throw Error("measure.empty_family", "bush check of an empty family");
    const MultiplicityProfile profile = multiplicity_profile(f);
    BushReport out;
    out.point = profile.argmax_point;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i].contains(out.point)) out.bush.push_back(i);
    out.nu = static_cast<int>(out.bush.size());
    double max_height = 0.0;
    for (const Tube& t : f.tubes()) max_height = std::max(max_height, t.height());
    out.exclusion_radius = 0.25 * max_height;
    const double min_angle = sep_constant * f.delta();
    for (std::size_t i : out.bush) {
        bool ok = true;
        for (std::size_t j : out.separated) {
            if (!(angle(f[i].direction(), f[j].direction()) > min_angle)) {
                ok = false;
                break;
            }
        }
        if (ok) out.separated.push_back(i);
    }
    out.k = static_cast<int>(out.separated.size());
    for (std::size_t i : out.separated) {
        const Tube& t = f[i];
        out.certified_bound += tube_volume(t) * std::max(0.0, 1.0 - 2.0 * out.exclusion_radius / t.height());
    }
    return out;
}

}  // namespace tubekit
