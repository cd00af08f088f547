#include "tubekit/packing.hpp"

#include <algorithm>
#include <cmath>

#include "tubekit/direction_net.hpp"
#include "tubekit/xray.hpp"

namespace tubekit {

namespace {

double segment_box_distance_1d(double a, double b, double lo, double hi) {
    if (a > b) std::swap(a, b);
    if (b < lo) return lo - b;
    if (a > hi) return a - hi;
    return 0.0;
}

double point_segment_distance_2d(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

bool segment_hits_box(double ax, double ay, double bx, double by, double x0, double y0, double x1, double y1) {
    // Liang-Barsky clip.
    double t0 = 0.0, t1 = 1.0;
    const double dx = bx - ax, dy = by - ay;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {ax - x0, x1 - ax, ay - y0, y1 - ay};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0) t0 = std::max(t0, r);
        else t1 = std::min(t1, r);
        if (t0 > t1) return false;
    }
    return true;
}

double segment_box_distance_2d(double ax, double ay, double bx, double by, double x0, double y0, double x1,
                               double y1) {
    if (segment_hits_box(ax, ay, bx, by, x0, y0, x1, y1)) return 0.0;
    double d = std::numeric_limits<double>::infinity();
    for (double cx : {x0, x1})
        for (double cy : {y0, y1}) d = std::min(d, point_segment_distance_2d(cx, cy, ax, ay, bx, by));
    for (auto [px, py] : {std::pair{ax, ay}, std::pair{bx, by}}) {
        const double qx = std::clamp(px, x0, x1), qy = std::clamp(py, y0, y1);
        d = std::min(d, std::hypot(px - qx, py - qy));
    }
    return d;
}

// Upper hemisphere representative.
Vec upper(const Direction& e) {
    Vec v = e.vec();
    if (v[v.dim() - 1] < 0.0) v *= -1.0;
    return v;
}

struct DirectionWork {
    DirectionCount summary;
    std::vector<Tube> tubes;
};

DirectionWork place_direction(const VoxelSet& E, const VoxelSet& eroded, const Direction& dir, double delta, int n,
                              const PackOptions& o) {
    DirectionWork w;
    w.summary.e = dir;
    const Vec e = upper(dir);
    const double cos_t = std::clamp(e[n - 1], -1.0, 1.0);
    Vec xi(n - 1);
    for (int k = 0; k < n - 1; ++k) xi[k] = e[k];
    const double sin_t = norm(xi);
    const double theta = std::atan2(sin_t, cos_t);
    w.summary.theta = theta;
    auto keep = [&](const Tube& t) {
        if (tube_inside_prism(t, E)) {
            w.tubes.push_back(t);
            ++w.summary.count;
        } else {
            ++w.summary.dropped;
        }
    };

    if (sin_t < 1e-12) {
        // Vertical: one tube per 2 delta lattice point of E'.
        const double pitch = 2.0 * delta;
        Vec lo, hi;
        if (!eroded.tight_box(lo, hi)) return w;
        std::array<long, 2> a{0, 0}, b{0, 0};
        for (int k = 0; k < n - 1; ++k) {
            a[k] = static_cast<long>(std::ceil(lo[k] / pitch));
            b[k] = static_cast<long>(std::floor(hi[k] / pitch));
        }
        for (long j = a[1]; j <= b[1]; ++j) {
            for (long i = a[0]; i <= b[0]; ++i) {
                Vec x(n - 1);
                x[0] = i * pitch;
                if (n == 3) x[1] = j * pitch;
                if (!eroded.contains(x)) continue;
                Vec c(n);
                for (int k = 0; k < n - 1; ++k) c[k] = x[k];
                c[n - 1] = 1.0;
                keep(Tube(c, dir, delta));
            }
        }
        w.summary.qualifying_slices = static_cast<long>(w.tubes.size() + w.summary.dropped);
        return w;
    }

    xi *= 1.0 / sin_t;
    const double dz = 4.0 * delta / sin_t;
    const double v = cos_t + delta * sin_t;
    const long by_angle = static_cast<long>(std::floor(o.stack_constant * theta / delta));
    const long by_height = v <= 2.0 ? 1 + static_cast<long>(std::floor((2.0 - v) / dz)) : 0;
    const long stack = std::min(by_angle, by_height);

    // Slices normal to zeta (n = 3); a single slice for n = 2.
    std::vector<Vec> anchors;
    if (n == 2) {
        anchors.push_back(Vec{0.0});
    } else {
        const Vec zeta{-xi[1], xi[0]};
        Vec lo, hi;
        if (!eroded.tight_box(lo, hi)) return w;
        double smin = std::numeric_limits<double>::infinity(), smax = -smin;
        for (double x : {lo[0], hi[0]})
            for (double y : {lo[1], hi[1]}) {
                const double s = x * zeta[0] + y * zeta[1];
                smin = std::min(smin, s);
                smax = std::max(smax, s);
            }
        for (long t = static_cast<long>(std::floor(smin / delta)) - 1; t <= static_cast<long>(std::ceil(smax / delta));
             ++t)
            anchors.push_back(zeta * ((t + 0.5) * delta));
    }
    for (const Vec& p : anchors) {
        const auto runs = line_runs(eroded, p, xi);
        double best = 0.0, s0 = 0.0, s1 = 0.0;
        for (const auto& r : runs) {
            if (r.second - r.first > best) {
                best = r.second - r.first;
                s0 = r.first;
                s1 = r.second;
            }
        }
        if (best < theta || best <= 0.0) continue;
        ++w.summary.qualifying_slices;
        const Vec mid = p + xi * (0.5 * (s0 + s1));
        for (long j = 0; j < stack; ++j) {
            Vec c(n);
            for (int k = 0; k < n - 1; ++k) c[k] = mid[k];
            c[n - 1] = 1.0 + (static_cast<double>(j) - 0.5 * (stack - 1)) * dz;
            keep(Tube(c, dir, delta));
        }
    }
    return w;
}

}  // namespace

bool tube_inside_prism(const Tube& t, const VoxelSet& E, double height) {
    const int n = t.dim();
    if (E.dim() != n - 1) throw Error("geometry.dimension", "prism base must have dimension n - 1");
    const Vec& e = t.axis();
    const double en = std::abs(e[n - 1]);
    const double vertical = 0.5 * t.height() * en + t.radius() * std::sqrt(std::max(0.0, 1.0 - en * en));
    if (t.center()[n - 1] - vertical < 0.0 || t.center()[n - 1] + vertical > height) return false;
    auto [p, q] = t.endpoints();
    const double r = t.radius();
    const double h = E.cell();
    std::array<long, 2> lo{0, 0}, hi{0, 0};
    for (int k = 0; k < n - 1; ++k) {
        const double a = std::min(p[k], q[k]) - r, b = std::max(p[k], q[k]) + r;
        if (a < E.origin()[k] || b > E.origin()[k] + E.size(k) * h) return false;
        lo[k] = static_cast<long>(std::floor((a - E.origin()[k]) / h));
        hi[k] = std::min(E.size(k) - 1, static_cast<long>(std::floor((b - E.origin()[k]) / h)));
    }
    for (long j = lo[1]; j <= hi[1]; ++j) {
        for (long i = lo[0]; i <= hi[0]; ++i) {
            const double x0 = E.origin()[0] + i * h;
            double d;
            if (n == 2) {
                d = segment_box_distance_1d(p[0], q[0], x0, x0 + h);
            } else {
                const double y0 = E.origin()[1] + j * h;
                d = segment_box_distance_2d(p[0], p[1], q[0], q[1], x0, y0, x0 + h, y0 + h);
            }
            if (d < r && !E.at(i, j)) return false;
        }
    }
    return true;
}

long qualifying_slices(const VoxelSet& eroded, const Vec& xi, double theta, double delta) {
    const int m = eroded.dim();
    if (m == 1) {
        double best = 0.0;
        for (const auto& r : line_runs(eroded, Vec{0.0}, Vec{1.0})) best = std::max(best, r.second - r.first);
        return best >= theta && best > 0.0 ? 1 : 0;
    }
    const Vec zeta{-xi[1], xi[0]};
    Vec lo, hi;
    if (!eroded.tight_box(lo, hi)) return 0;
    double smin = std::numeric_limits<double>::infinity(), smax = -smin;
    for (double x : {lo[0], hi[0]})
        for (double y : {lo[1], hi[1]}) {
            const double s = x * zeta[0] + y * zeta[1];
            smin = std::min(smin, s);
            smax = std::max(smax, s);
        }
    long count = 0;
    for (long t = static_cast<long>(std::floor(smin / delta)) - 1; t <= static_cast<long>(std::ceil(smax / delta)); ++t) {
        double best = 0.0;
        for (const auto& r : line_runs(eroded, zeta * ((t + 0.5) * delta), xi)) best = std::max(best, r.second - r.first);
        if (best >= theta && best > 0.0) ++count;
    }
    return count;
}

void check_pack_input(const VoxelSet& E, double delta, int n, const PackOptions& o) {
    if (n != 2 && n != 3) throw Error("packing.unsupported_dimension", "the packer supports n = 2 and n = 3");
    if (E.dim() != n - 1) throw Error("packing.unsupported_dimension", "E must live in R^(n-1)");
    if (!(delta > 0.0)) throw Error("geometry.delta", "delta must be positive");
    if (E.count() == 0) throw Error("packing.volume", "E is empty");
    const double implied = std::pow(E.volume() / std::pow(delta, n - 1), 2);
    if (implied < 1.0)
        throw Error("packing.volume", "|E| = " + std::to_string(E.volume()) + " is below delta^(n-1); no N >= 1 fits");
    if (o.check_diameter && voxel_diameter(E) > 1.0 + 1e-12)
        throw Error("packing.diameter", "diam(E) exceeds 1");
    if (o.check_convexity) {
        if (E.dim() == 1) {
            const auto runs = line_runs(E, Vec{E.origin()[0]}, Vec{1.0});
            if (runs.size() != 1) throw Error("packing.nonconvex", "E is not an interval");
        } else {
            const ConvexityReport r = convexity_index(E, o.convexity_budget, o.seed);
            if (r.index < o.convexity_threshold)
                throw Error("packing.nonconvex", "convexity index " + std::to_string(r.index) + " below " +
                                                     std::to_string(o.convexity_threshold));
        }
    }
    if (o.check_discretization) {
        const double k = o.discretization_k * delta;
        const VoxelSet opened = dilate(erode(E, k), k);
        // Two cells of slack per axis absorb the grid error of erode then dilate.
        const VoxelSet cover = dilate(opened, 2.0 * E.cell() * std::sqrt(static_cast<double>(E.dim())));
        for (std::size_t c = 0; c < E.cell_total(); ++c)
            if (E.at_flat(c) && !cover.at_flat(c))
                throw Error("packing.not_discretized", "E is not a union of balls of radius " +
                                                           std::to_string(o.discretization_k) + " delta");
    }
}

PackResult pack_tubes(const VoxelSet& E, double delta, int n, const PackOptions& o) {
    check_pack_input(E, delta, n, o);
    PackResult out;
    out.family = TubeFamily(n, delta);
    out.implied_N = std::pow(E.volume() / std::pow(delta, n - 1), 2);
    const VoxelSet outer = o.outer_margin > 0.0 ? erode(E, o.outer_margin * delta) : E;
    const VoxelSet inner = o.inner_margin > 0.0 ? erode(outer, o.inner_margin * delta) : outer;
    out.outer_volume = outer.volume();
    out.inner_volume = inner.volume();
    if (outer.count() == 0) return out;
    const double reach = std::min(voxel_diameter(outer), 0.5 * kPi - 1e-9);
    const std::vector<Direction> net = direction_net(n, o.net_separation * delta, reach);
    std::vector<DirectionWork> work(net.size());
    parallel_for(net.size(), [&](std::size_t i) { work[i] = place_direction(E, outer, net[i], delta, n, o); });
    for (const DirectionWork& w : work) {
        out.directions.push_back(w.summary);
        out.dropped += w.summary.dropped;
        for (const Tube& t : w.tubes) out.family.add(t);
    }
    return out;
}

long direction_count(const VoxelSet& E, const Direction& e, double delta, const PackOptions& o) {
    const int n = e.dim();
    if (n != 2 && n != 3) throw Error("packing.unsupported_dimension", "the packer supports n = 2 and n = 3");
    if (E.dim() != n - 1) throw Error("packing.unsupported_dimension", "E must live in R^(n-1)");
    const VoxelSet outer = o.outer_margin > 0.0 ? erode(E, o.outer_margin * delta) : E;
    return place_direction(E, outer, e, delta, n, o).summary.count;
}

}  // namespace tubekit
