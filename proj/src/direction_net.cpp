#include "tubekit/direction_net.hpp"

#include <algorithm>
#include <cmath>

namespace tubekit {

Vec rotate_from_vertical(const Vec& e, const Vec& v) {
    const int n = e.dim();
    Vec u = Vec::unit(n, n - 1) - e;
    const double uu = norm2(u);
    if (uu < 1e-30) return v;
    return v - u * (2.0 * dot(u, v) / uu);
}

namespace {

std::vector<Direction> planar_net(double separation, double cap_radius) {
    std::vector<Direction> out;
    if (cap_radius >= kPi / 2) {
        int count = 1;
        while (2.0 * count <= kPi / separation) count *= 2;
        for (int k = 0; k < count; ++k) {
            const double t = k * kPi / count;
            out.push_back(Direction::normalized(Vec{std::sin(t), std::cos(t)}));
        }
        return out;
    }
    const double step = separation * (1.0 + 1e-9);
    const int reach = static_cast<int>(std::floor(cap_radius / step));
    out.push_back(Direction::normalized(Vec{0.0, 1.0}));
    for (int k = 1; k <= reach; ++k) {
        for (int sign : {-1, 1}) {
            const double t = sign * k * step;
            out.push_back(Direction::normalized(Vec{std::sin(t), std::cos(t)}));
        }
    }
    return out;
}

// Candidate directions spread over the cap about e_n.
std::vector<Vec> cap_candidates(int n, double separation, double cap_radius) {
    const double cap = std::min(cap_radius, kPi / 2);
    const double area = 2.0 * kPi * (1.0 - std::cos(cap));
    const double patch = kPi * 0.25 * separation * separation;
    const std::size_t target = std::max<std::size_t>(64, static_cast<std::size_t>(8.0 * area / patch));
    std::vector<Vec> out;
    out.reserve(target + 1);
    out.push_back(Vec::unit(n, n - 1));
    if (n == 3) {
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        const double zmin = std::cos(cap);
        for (std::size_t i = 0; i < target; ++i) {
            const double z = 1.0 - (1.0 - zmin) * (i + 0.5) / target;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double phi = golden * i;
            out.push_back(Vec{r * std::cos(phi), r * std::sin(phi), z});
        }
        return out;
    }
    Rng rng(mix_seed(static_cast<std::uint64_t>(n), 0xd1ec7));
    while (out.size() < target + 1) {
        Vec v(n);
        for (int k = 0; k < n; ++k) v[k] = rng.normal();
        const double len = norm(v);
        if (len == 0.0) continue;
        v *= 1.0 / len;
        if (v[n - 1] < 0.0) v *= -1.0;
        if (std::acos(std::min(1.0, v[n - 1])) <= cap) out.push_back(v);
    }
    return out;
}

}  // namespace

std::vector<Direction> direction_net(int n, double separation, double cap_radius) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "direction net dimension out of range");
    if (!(separation > 0.0)) throw Error("geometry.delta", "net separation must be positive");
    if (n == 2) return planar_net(separation, cap_radius);

    const std::vector<Vec> cand = cap_candidates(n, separation, cap_radius);
    std::vector<double> gap(cand.size(), kPi);
    std::vector<Direction> out;
    std::size_t next = 0;
    for (;;) {
        out.push_back(Direction::normalized(cand[next]));
        const Vec& e = cand[next];
        std::size_t best = 0;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            const double c = std::min(1.0, std::abs(dot(e, cand[i])));
            gap[i] = std::min(gap[i], std::acos(c));
            if (gap[i] > best_gap) {
                best_gap = gap[i];
                best = i;
            }
        }
        if (!(best_gap > separation)) break;
        next = best;
    }
    return out;
}

}  // namespace tubekit
