#include "tubekit/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tubekit/direction_net.hpp"
#include "tubekit/packing.hpp"

namespace tubekit {

namespace {

// Integer points k with |pitch k| <= radius in dimension m, lexicographic.
std::vector<Vec> lattice_in_ball(int m, double pitch, double radius) {
    std::vector<Vec> out;
    const long K = static_cast<long>(std::floor(radius / pitch + 1e-9));
    const double r2 = radius * radius * (1.0 + 1e-12);
    Vec p(m);
    std::function<void(int, double)> rec = [&](int axis, double used) {
        if (axis == m) {
            out.push_back(p);
            return;
        }
        for (long k = -K; k <= K; ++k) {
            const double x = k * pitch;
            if (used + x * x > r2) continue;
            p[axis] = x;
            rec(axis + 1, used + x * x);
        }
    };
    rec(0, 0.0);
    return out;
}

Vec origin_if_empty(const Vec& c, int n) {
    if (c.dim() == 0) return Vec(n);
    if (c.dim() != n) throw Error("geometry.dimension", "center has dimension " + std::to_string(c.dim()) +
                                                            ", expected " + std::to_string(n));
    return c;
}

// Parallel tubes through lattice points of the cross-section of a host tube.
void fill_directions(TubeFamily& f, const std::vector<Direction>& net, double host_radius, const Vec& center) {
    const int n = f.dim();
    const double delta = f.delta();
    const std::vector<Vec> lattice = lattice_in_ball(n - 1, 2.0 * delta, host_radius);
    for (const Direction& e : net) {
        const std::vector<Vec> basis = orthonormal_complement(e.vec());
        for (const Vec& p : lattice) {
            Vec local(n);
            for (int i = 0; i < n - 1; ++i) local += basis[i] * p[i];
            f.add(Tube(local + center, e, delta));
        }
    }
}

Vec lift(const Vec& v, int n) {
    Vec out(n);
    for (int i = 0; i < v.dim(); ++i) out[i] = v[i];
    return out;
}

TubeFamily lift_family(const TubeFamily& f, int n) {
    TubeFamily out(n, f.delta(), f.c0());
    for (const Tube& t : f.tubes())
        out.add(Tube(lift(t.center(), n), Direction(lift(t.axis(), n)), t.delta(), t.height()));
    return out;
}

void check_count(double N) {
    if (!(N >= 1.0) || !std::isfinite(N)) throw Error("construction.count", "N must be at least 1");
}

}  // namespace

std::string to_string(ConstructionKind k) {
    switch (k) {
        case ConstructionKind::standard: return "standard";
        case ConstructionKind::small_cap: return "small_cap";
        case ConstructionKind::embedded: return "embedded";
        case ConstructionKind::slab: return "slab";
        case ConstructionKind::cascade: return "cascade";
    }
    return "standard";
}

ConstructionKind parse_construction_kind(const std::string& s) {
    for (ConstructionKind k : {ConstructionKind::standard, ConstructionKind::small_cap, ConstructionKind::embedded,
                               ConstructionKind::slab, ConstructionKind::cascade})
        if (to_string(k) == s) return k;
    throw Error("construction.kind", "unknown construction kind '" + s + "'");
}

TubeFamily standard_configuration(int n, double delta, const Vec& center, bool paper_regime) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "n must lie in [2, 8]");
    if (paper_regime) check_paper_regime(delta);
    if (!(delta > 0.0 && delta < 1.0)) throw Error("geometry.delta", "delta must lie in (0, 1)");
    const Vec O = origin_if_empty(center, n);
    TubeFamily f(n, delta);
    fill_directions(f, direction_net(n, kConstructionNetSpacing * delta), 0.5 - 0.5 * delta, O);
    return f;
}

TubeFamily small_cap_configuration(int n, double delta, double N, const Vec& center) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "n must lie in [2, 8]");
    if (!(delta > 0.0 && delta < 1.0)) throw Error("geometry.delta", "delta must lie in (0, 1)");
    check_count(N);
    const double crossover = std::pow(delta, 2.0 - 2.0 * n);
    if (N > crossover * (1.0 + 1e-9))
        throw Error("regime.violation", "N = " + std::to_string(N) + " exceeds the crossover delta^(2-2n) = " +
                                            std::to_string(crossover));
    const Vec O = origin_if_empty(center, n);
    const double cap = std::pow(N, 1.0 / (2.0 * n - 2.0)) * delta;
    TubeFamily f(n, delta);
    fill_directions(f, direction_net(n, kConstructionNetSpacing * delta, cap), cap, O);
    return f;
}

TubeFamily embedded_configuration(int n, int d, double delta, double N) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "n must lie in [2, 8]");
    if (d < 2 || d > n) throw Error("construction.dimension", "d must satisfy 2 <= d <= n");
    check_count(N);
    const double limit = std::pow(delta, -2.0 * d);
    if (N > limit * (1.0 + 1e-9))
        throw Error("regime.violation",
                    "N = " + std::to_string(N) + " exceeds delta^(-2d) = " + std::to_string(limit));
    TubeFamily inner;
    if (N <= std::pow(delta, 2.0 - 2.0 * d) * (1.0 + 1e-9)) {
        inner = small_cap_configuration(d, delta, N);
    } else {
        // Disjoint copies of the d-dimensional standard configuration, truncated to N tubes.
        const TubeFamily unit = standard_configuration(d, delta, {}, false);
        const std::size_t want = static_cast<std::size_t>(std::floor(N));
        inner = TubeFamily(d, delta);
        for (long copy = 0; inner.size() < want; ++copy) {
            Vec shift(d);
            shift[0] = kCopyPitch * copy;
            for (const Tube& t : unit.tubes()) {
                if (inner.size() == want) break;
                inner.add(t.translated(shift));
            }
        }
    }
    return d == n ? inner : lift_family(inner, n);
}

SlabResult slab_configuration(int n, int d, double delta, double N) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "n must lie in [2, 8]");
    if (d < 2 || d > n - 1)
        throw Error("construction.dimension", "slab needs 2 <= d <= n - 1 (got n = " + std::to_string(n) +
                                                  ", d = " + std::to_string(d) + ")");
    if (d != 2) throw Error("construction.unsupported", "slab is implemented for d = 2 only");
    if (!(delta > 0.0 && delta < 1.0)) throw Error("geometry.delta", "delta must lie in (0, 1)");
    check_count(N);
    const double limit = std::pow(delta, -2.0 * d);
    if (N > limit * (1.0 + 1e-9))
        throw Error("regime.violation",
                    "N = " + std::to_string(N) + " exceeds delta^(-2d) = " + std::to_string(limit));
    const double side = std::pow(N, 1.0 / (2.0 * d)) * delta;
    const long cells = std::max(1L, std::lround(side / (delta / 8.0)));
    SlabResult out;
    out.base = VoxelSet(2, {cells, cells, 1}, side / cells, Vec{0.0, 0.0});
    for (std::size_t c = 0; c < out.base.cell_total(); ++c) out.base.set_flat(c, true);

    // Each direction of the net gets a delta lattice in its orthogonal plane;
    // tubes wholly inside E x [0, 2] are kept. Tubes sharing a direction are
    // have disjoint interiors and net directions are far enough apart, so the union stays distinct.
    TubeFamily packed(3, delta);
    const double cap = std::min(kPi / 2, std::atan(side * std::sqrt(2.0) / (1.0 - delta)));
    const Vec mid{0.5 * side, 0.5 * side, 1.0};
    const double pitch = delta;
    const long reach = static_cast<long>(std::ceil(std::sqrt(0.5 * side * side + 1.0) / pitch));
    for (const Direction& e : direction_net(3, kConstructionNetSpacing * delta, cap)) {
        const std::vector<Vec> basis = orthonormal_complement(e.vec());
        for (long i = -reach; i <= reach; ++i)
            for (long j = -reach; j <= reach; ++j) {
                const Tube t(mid + basis[0] * (pitch * i) + basis[1] * (pitch * j), e, delta);
                if (tube_inside_prism(t, out.base)) packed.add(t);
            }
    }

    out.lo = Vec(n - 1);
    out.hi = Vec(n - 1);
    for (int i = 0; i < n - 1; ++i) out.hi[i] = i < d ? side : delta;
    out.family = TubeFamily(n, delta);
    for (const Tube& t : packed.tubes()) {
        Vec c(n), e(n);
        c[0] = t.center()[0];
        c[1] = t.center()[1];
        for (int i = 2; i < n - 1; ++i) c[i] = 0.5 * delta;
        c[n - 1] = t.center()[2];
        e[0] = t.axis()[0];
        e[1] = t.axis()[1];
        e[n - 1] = t.axis()[2];
        out.family.add(Tube(c, Direction(e), delta));
    }
    return out;
}

std::vector<TubeFamily> cascade_example(int n, double delta, bool paper_regime) {
    if (paper_regime) check_paper_regime(delta);
    std::vector<TubeFamily> out;
    double N = std::floor(std::pow(delta, 2.0 - 2.0 * n) * (1.0 + 1e-9));
    for (long k = 0; N >= 1.0; ++k, N = std::floor(N / 2.0)) {
        Vec O(n);
        O[0] = kCascadePitch * k;
        out.push_back(small_cap_configuration(n, delta, N, O));
    }
    return out;
}

TubeFamily ConstructionResult::merged() const {
    if (components.empty()) return {};
    TubeFamily out(components.front().dim(), components.front().delta(), components.front().c0());
    for (const TubeFamily& f : components)
        for (const Tube& t : f.tubes()) out.add(t);
    return out;
}

ConstructionResult build_construction(const ConstructionSpec& s) {
    ConstructionResult r;
    switch (s.kind) {
        case ConstructionKind::standard:
            r.components.push_back(standard_configuration(s.n, s.delta, s.center, s.paper_regime));
            break;
        case ConstructionKind::small_cap:
            r.components.push_back(small_cap_configuration(s.n, s.delta, s.N_target, s.center));
            break;
        case ConstructionKind::embedded:
            r.components.push_back(embedded_configuration(s.n, s.d, s.delta, s.N_target));
            break;
        case ConstructionKind::slab:
            r.slab = slab_configuration(s.n, s.d, s.delta, s.N_target);
            r.components.push_back(r.slab->family);
            break;
        case ConstructionKind::cascade:
            r.components = cascade_example(s.n, s.delta, s.paper_regime);
            break;
    }
    return r;
}

}  // namespace tubekit
