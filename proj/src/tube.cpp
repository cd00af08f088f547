#include "tubekit/tube.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "json.hpp"
#include "tubekit/tube_index.hpp"

namespace tubekit {

namespace {

constexpr double kUnitTolerance = 1e-9;
constexpr double kParallelSine = 1e-12;

}  // namespace

Direction::Direction(const Vec& v) : v_(v) {
    if (v.dim() < 1) throw Error("geometry.direction", "direction has no components");
    const double len = norm(v);
    if (!std::isfinite(len) || std::abs(len - 1.0) > kUnitTolerance)
        throw Error("geometry.direction", "direction is not a unit vector (norm " + std::to_string(len) + ")");
    v_ *= 1.0 / len;
    for (int i = 0; i < v_.dim(); ++i) {
        if (v_[i] > 0.0) break;
        if (v_[i] < 0.0) {
            v_ *= -1.0;
            break;
        }
    }
}

Direction Direction::normalized(const Vec& v) {
    const double len = norm(v);
    if (!(len > 0.0) || !std::isfinite(len)) throw Error("geometry.direction", "cannot normalize a zero direction");
    return Direction(v * (1.0 / len));
}

Tube::Tube(const Vec& center, const Direction& direction, double delta, double height)
    : center_(center), direction_(direction), delta_(delta), height_(height) {
    if (center.dim() < 2) throw Error("geometry.dimension", "tubes live in R^n with n >= 2");
    if (center.dim() != direction.dim())
        throw Error("geometry.dimension", "center and direction dimensions differ");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw Error("geometry.delta", "tube delta must be positive");
    if (!(height > 0.0) || !std::isfinite(height)) throw Error("geometry.height", "tube height must be positive");
}

bool Tube::contains(const Vec& x) const {
    const Vec d = x - center_;
    const double s = dot(d, axis());
    if (std::abs(s) > 0.5 * height_) return false;
    const double r = radius();
    return norm2(d) - s * s <= r * r;
}

std::pair<Vec, Vec> Tube::endpoints() const {
    const Vec half = axis() * (0.5 * height_);
    return {center_ - half, center_ + half};
}

Tube Tube::translated(const Vec& v) const { return Tube(center_ + v, direction_, delta_, height_); }

TubeFamily::TubeFamily(int n, double delta, double c0) : n_(n), delta_(delta) {
    if (n < 2 || n > kMaxDim) throw Error("geometry.dimension", "family dimension out of range");
    if (!(delta > 0.0)) throw Error("geometry.delta", "family delta must be positive");
    set_c0(c0);
}

void TubeFamily::set_c0(double c0) {
    if (!(c0 > 0.0 && c0 < 1.0)) throw Error("geometry.c0", "c0 must lie in (0, 1)");
    c0_ = c0;
}

void TubeFamily::add(const Tube& t) {
    if (t.dim() != n_) throw Error("geometry.dimension", "tube dimension differs from family");
    if (t.delta() != delta_) throw Error("geometry.delta", "tube delta differs from family");
    tubes_.push_back(t);
}

TubeFamily TubeFamily::subset(const std::vector<std::size_t>& indices) const {
    TubeFamily out(n_, delta_, c0_);
    for (std::size_t i : indices) out.add(tubes_.at(i));
    return out;
}

void check_paper_regime(double delta) {
    if (!(delta > 0.0 && delta < 0.01))
        throw Error("regime.delta", "delta " + std::to_string(delta) + " outside (0, 1/100)");
}

double angle(const Direction& e1, const Direction& e2) {
    if (e1.dim() != e2.dim()) throw Error("geometry.dimension", "directions of different dimension");
    // atan2 form stays accurate for nearly parallel pairs.
    const double c = std::abs(dot(e1.vec(), e2.vec()));
    const Vec perp = e2.vec() - e1.vec() * dot(e1.vec(), e2.vec());
    return std::atan2(norm(perp), c);
}

double tube_volume(const Tube& t) {
    const int k = t.dim() - 1;
    return unit_ball_volume(k) * std::pow(t.radius(), k) * t.height();
}

std::vector<Vec> orthonormal_complement(const Vec& e) {
    const int n = e.dim();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(e[a]) < std::abs(e[b]); });
    std::vector<Vec> basis;
    basis.reserve(n - 1);
    for (int idx = 0; idx < n && static_cast<int>(basis.size()) < n - 1; ++idx) {
        Vec v = Vec::unit(n, order[idx]);
        v -= e * dot(v, e);
        for (const Vec& b : basis) v -= b * dot(v, b);
        const double len = norm(v);
        if (len < 1e-8) continue;
        basis.push_back(v * (1.0 / len));
    }
    return basis;
}

std::pair<double, double> vertical_horizontal_distance(const Tube& t, const Vec& O) {
    const Vec d = t.center() - O;
    const double s = dot(d, t.axis());
    const Vec h = d - t.axis() * s;
    return {std::abs(s), norm(h)};
}

double axis_distance(const Tube& t1, const Tube& t2) {
    // Closest points of two segments p1 + s u, p2 + t v with s, t in [-h/2, h/2].
    const Vec& u = t1.axis();
    const Vec& v = t2.axis();
    const Vec w = t1.center() - t2.center();
    const double h1 = 0.5 * t1.height(), h2 = 0.5 * t2.height();
    const double b = dot(u, v), d = dot(u, w), e = dot(v, w);
    const double denom = 1.0 - b * b;
    double s = 0.0;
    if (denom > 1e-14) s = std::clamp((b * e - d) / denom, -h1, h1);
    double t = std::clamp(e + b * s, -h2, h2);
    s = std::clamp(b * t - d, -h1, h1);
    t = std::clamp(e + b * s, -h2, h2);
    const Vec diff = w + u * s - v * t;
    return norm(diff);
}

namespace {

struct CrossingGeometry {
    double sine = 0.0;       // sine of the angle between axes
    double line_gap = 0.0;   // distance between the infinite axis lines
    double s1 = 0.0, s2 = 0.0;  // closest-point parameters along each axis
};

CrossingGeometry crossing_geometry(const Tube& t1, const Tube& t2) {
    CrossingGeometry g;
    const Vec& u = t1.axis();
    const Vec& v = t2.axis();
    const double b = dot(u, v);
    g.sine = norm(v - u * b);
    const Vec w = t1.center() - t2.center();
    const double d = dot(u, w), e = dot(v, w);
    const double denom = 1.0 - b * b;
    if (denom > 0.0) {
        g.s1 = (b * e - d) / denom;
        g.s2 = (e - b * d) / denom;
    }
    g.line_gap = norm(w + u * g.s1 - v * g.s2);
    return g;
}

double lens_volume(int k, double r, double rho) {
    if (rho >= 2.0 * r) return 0.0;
    const double a = 0.5 * rho;
    if (k == 1) return 2.0 * (r - a);
    const double x = 1.0 - (a * a) / (r * r);
    const double cap = 0.5 * unit_ball_volume(k) * std::pow(r, k) * boost::math::ibeta(0.5 * (k + 1), 0.5, x);
    return 2.0 * cap;
}

double parallel_volume(const Tube& t1, const Tube& t2) {
    const Vec& e = t1.axis();
    const Vec w = t2.center() - t1.center();
    const double t = dot(w, e);
    const double rho = norm(w - e * t);
    const double lo = std::max(-0.5 * t1.height(), t - 0.5 * t2.height());
    const double hi = std::min(0.5 * t1.height(), t + 0.5 * t2.height());
    if (hi <= lo) return 0.0;
    return lens_volume(t1.dim() - 1, t1.radius(), rho) * (hi - lo);
}

// Convex polygon clipping (Sutherland-Hodgman) for the planar rectangles.
using Poly = std::vector<std::array<double, 2>>;

Poly rectangle(const Tube& t) {
    const double ex = t.axis()[0], ey = t.axis()[1];
    const double px = -ey, py = ex;
    const double a = 0.5 * t.height(), r = t.radius();
    const double cx = t.center()[0], cy = t.center()[1];
    return {{cx - a * ex - r * px, cy - a * ey - r * py},
            {cx + a * ex - r * px, cy + a * ey - r * py},
            {cx + a * ex + r * px, cy + a * ey + r * py},
            {cx - a * ex + r * px, cy - a * ey + r * py}};
}

double signed_area(const Poly& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % p.size()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    return 0.5 * s;
}

Poly clip(const Poly& subject, const Poly& clipper) {
    Poly out = subject;
    for (std::size_t i = 0; i < clipper.size() && !out.empty(); ++i) {
        const auto& a = clipper[i];
        const auto& b = clipper[(i + 1) % clipper.size()];
        auto side = [&](const std::array<double, 2>& p) {
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        };
        Poly in = std::move(out);
        out.clear();
        for (std::size_t j = 0; j < in.size(); ++j) {
            const auto& p = in[j];
            const auto& q = in[(j + 1) % in.size()];
            const double sp = side(p), sq = side(q);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
            }
        }
    }
    return out;
}

double planar_volume(const Tube& t1, const Tube& t2) {
    Poly a = rectangle(t1), b = rectangle(t2);
    if (signed_area(a) < 0) std::reverse(a.begin(), a.end());
    if (signed_area(b) < 0) std::reverse(b.begin(), b.end());
    const Poly c = clip(a, b);
    return c.size() < 3 ? 0.0 : std::abs(signed_area(c));
}

// Volume where two infinite cylinders cross; exact for n = 3.
double crossing_volume_3d(double r1, double r2, double gap, double sine) {
    const double lo = std::max(-r1, gap - r2);
    const double hi = std::min(r1, gap + r2);
    if (hi <= lo) return 0.0;
    auto f = [&](double w) {
        const double a = std::max(0.0, r1 * r1 - w * w);
        const double b = std::max(0.0, r2 * r2 - (w - gap) * (w - gap));
        return 4.0 * std::sqrt(a * b);
    };
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(f, lo, hi) / sine;
}

struct McTally {
    double value = 0.0;
    double abs_error = 0.0;
    std::int64_t samples = 0;
};

// Stratified sampling inside the axial window of `a` that can meet `b`.
// `done` sees the running tally after every doubling round.
template <class Done>
McTally sample_intersection(const Tube& a, const Tube& b, double lo, double hi, std::uint64_t seed,
                            std::int64_t budget, Done done) {
    McTally tally;
    if (hi <= lo) return tally;
    const int n = a.dim();
    const int k = n - 1;
    const std::vector<Vec> basis = orthonormal_complement(a.axis());
    const double r = a.radius();
    const double region = (hi - lo) * unit_ball_volume(k) * std::pow(r, k);
    constexpr int kStrata = 32;
    std::vector<std::int64_t> hits(kStrata, 0), counts(kStrata, 0);
    Rng rng(mix_seed(seed, 0x7ab1e));
    std::int64_t per = 64;
    for (;;) {
        for (int s = 0; s < kStrata; ++s) {
            for (std::int64_t i = 0; i < per; ++i) {
                const double axial = lo + (s + rng.uniform()) * (hi - lo) / kStrata;
                Vec dir(k);
                double len2 = 0.0;
                do {
                    for (int c = 0; c < k; ++c) dir[c] = rng.normal();
                    len2 = norm2(dir);
                } while (len2 == 0.0);
                const double rad = r * std::pow(rng.uniform(), 1.0 / k) / std::sqrt(len2);
                Vec x = a.center() + a.axis() * axial;
                for (int c = 0; c < k; ++c) x += basis[c] * (dir[c] * rad);
                hits[s] += b.contains(x) ? 1 : 0;
                counts[s] += 1;
            }
        }
        tally.samples += per * kStrata;
        double mean = 0.0, var = 0.0;
        for (int s = 0; s < kStrata; ++s) {
            const double p = static_cast<double>(hits[s]) / counts[s];
            mean += p / kStrata;
            // Add-one smoothing keeps the variance positive for empty or full strata.
            const double ps = (hits[s] + 1.0) / (counts[s] + 2.0);
            var += ps * (1.0 - ps) / counts[s] / (kStrata * kStrata);
        }
        tally.value = mean * region;
        tally.abs_error = 1.96 * std::sqrt(var) * region;
        if (done(tally) || tally.samples * 2 > budget) break;
        per *= 2;
    }
    return tally;
}

struct Window {
    double lo, hi;
};

Window axial_window(const Tube& t, double s_star, double reach) {
    return {std::max(-0.5 * t.height(), s_star - reach), std::min(0.5 * t.height(), s_star + reach)};
}

void require_compatible(const Tube& t1, const Tube& t2) {
    if (t1.dim() != t2.dim()) throw Error("geometry.dimension", "tubes of different dimension");
    if (t1.delta() != t2.delta()) throw Error("geometry.delta", "tubes with different delta");
}

}  // namespace

IntersectionVolume pair_intersection_volume(const Tube& t1, const Tube& t2, double tol, std::uint64_t seed,
                                            std::int64_t budget) {
    require_compatible(t1, t2);
    IntersectionVolume out;
    if (axis_distance(t1, t2) >= t1.radius() + t2.radius()) {
        out.exact = true;
        return out;
    }
    const CrossingGeometry g = crossing_geometry(t1, t2);
    if (g.sine < kParallelSine) {
        out.value = parallel_volume(t1, t2);
        out.exact = true;
        return out;
    }
    if (t1.dim() == 2) {
        out.value = planar_volume(t1, t2);
        out.exact = true;
        return out;
    }
    const double reach = (t1.radius() + t2.radius()) / g.sine;
    const Window w1 = axial_window(t1, g.s1, reach);
    const Window w2 = axial_window(t2, g.s2, reach);
    const bool caps_clear = w1.lo == g.s1 - reach && w1.hi == g.s1 + reach && w2.lo == g.s2 - reach &&
                            w2.hi == g.s2 + reach;
    if (t1.dim() == 3 && caps_clear) {
        out.value = crossing_volume_3d(t1.radius(), t2.radius(), g.line_gap, g.sine);
        out.exact = true;
        return out;
    }
    const bool use_first = (w1.hi - w1.lo) <= (w2.hi - w2.lo);
    const Tube& a = use_first ? t1 : t2;
    const Tube& b = use_first ? t2 : t1;
    const Window wa = use_first ? w1 : w2;
    const McTally tally = sample_intersection(a, b, wa.lo, wa.hi, seed, budget, [&](const McTally& t) {
        return t.abs_error <= tol * std::max(t.value, 1e-300) || (t.value == 0.0 && t.samples >= (1 << 16));
    });
    out.value = tally.value;
    out.abs_error = tally.abs_error;
    out.samples = tally.samples;
    out.converged = tally.abs_error <= tol * tally.value || tally.value == 0.0;
    return out;
}

namespace {

// Returns the intersection volume when it decides the pair exceeds the
// threshold, and a negative number otherwise.
double exceeds(const Tube& t1, const Tube& t2, double threshold, std::uint64_t seed) {
    if (axis_distance(t1, t2) >= t1.radius() + t2.radius()) return -1.0;
    const CrossingGeometry g = crossing_geometry(t1, t2);
    if (g.sine < kParallelSine) {
        const double v = parallel_volume(t1, t2);
        return v > threshold ? v : -1.0;
    }
    const int n = t1.dim();
    if (n == 2) {
        if (4.0 * t1.radius() * t2.radius() / g.sine <= threshold) return -1.0;
        const double v = planar_volume(t1, t2);
        return v > threshold ? v : -1.0;
    }
    const double reach = (t1.radius() + t2.radius()) / g.sine;
    const Window w1 = axial_window(t1, g.s1, reach);
    const Window w2 = axial_window(t2, g.s2, reach);
    if (n == 3) {
        // Cauchy-Schwarz on the crossing integral: at most (16/3) (r1 r2)^(3/2) / sin.
        const double rr = t1.radius() * t2.radius();
        if (16.0 / 3.0 * rr * std::sqrt(rr) / g.sine <= threshold) return -1.0;
        const double bound = crossing_volume_3d(t1.radius(), t2.radius(), g.line_gap, g.sine);
        if (bound <= threshold) return -1.0;
        const bool caps_clear = w1.lo == g.s1 - reach && w1.hi == g.s1 + reach && w2.lo == g.s2 - reach &&
                                w2.hi == g.s2 + reach;
        if (caps_clear) return bound;
    }
    const bool use_first = (w1.hi - w1.lo) <= (w2.hi - w2.lo);
    const Tube& a = use_first ? t1 : t2;
    const Tube& b = use_first ? t2 : t1;
    const Window wa = use_first ? w1 : w2;
    const McTally tally = sample_intersection(a, b, wa.lo, wa.hi, seed, 1 << 22, [&](const McTally& t) {
        return t.value - t.abs_error > threshold || t.value + t.abs_error < threshold;
    });
    return tally.value > threshold ? tally.value : -1.0;
}

}  // namespace

PairCheck is_essentially_distinct(const TubeFamily& f) {
    const std::size_t n = f.size();
    PairCheck out;
    if (n < 2) return out;
    // Two tubes can only meet when their axes come within a diameter; with
    // this padding every such pair shows up among the candidates of some
    // sample point on the lower-indexed axis.
    const TubeIndex index(f, 0.0, 0.5 * f.delta(), 1 << 23, 0.5);
    std::vector<double> volumes(n);
    for (std::size_t i = 0; i < n; ++i) volumes[i] = tube_volume(f[i]);
    std::vector<std::size_t> first(n, n);
    std::vector<double> value(n, 0.0);
    static std::atomic<std::uint64_t> next_epoch{0};
    const std::uint64_t epoch = next_epoch.fetch_add(n + 1);
    parallel_for(n, [&](std::size_t i) {
        const Tube& t = f[i];
        const int samples = static_cast<int>(std::ceil(t.height() / index.cell())) + 1;
        // Stamps are unique across calls, so stale entries never match.
        thread_local std::vector<std::uint64_t> seen;
        if (seen.size() < n) seen.resize(n, 0);
        const std::uint64_t stamp = epoch + i + 1;
        std::vector<std::uint32_t> near;
        for (int s = 0; s < samples; ++s) {
            const Vec p = t.center() + t.axis() * (-0.5 * t.height() + t.height() * s / std::max(1, samples - 1));
            auto [b, e] = index.candidates(p);
            for (auto it = b; it != e; ++it) {
                if (*it <= i || seen[*it] == stamp) continue;
                seen[*it] = stamp;
                near.push_back(*it);
            }
        }
        std::sort(near.begin(), near.end());
        for (std::uint32_t j : near) {
            const double threshold = f.c0() * std::min(volumes[i], volumes[j]);
            const double v = exceeds(f[i], f[j], threshold, mix_seed(i, j));
            if (v >= 0.0) {
                first[i] = j;
                value[i] = v;
                return;
            }
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (first[i] < n) {
            out.ok = false;
            out.witness = std::make_pair(i, first[i]);
            out.witness_value = value[i];
            break;
        }
    }
    return out;
}

PairCheck is_delta_separated(const TubeFamily& f) {
    PairCheck out;
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = i + 1; j < f.size(); ++j) {
            const double a = angle(f[i].direction(), f[j].direction());
            if (!(a > f.delta())) {
                out.ok = false;
                out.witness = std::make_pair(i, j);
                out.witness_value = a;
                return out;
            }
        }
    }
    return out;
}

namespace {

std::vector<double> real_array(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw Error("schema.violation", where + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error("schema.violation", where + "[" + std::to_string(i) + "]: expected a number");
        out.push_back(j[i].get<double>());
    }
    return out;
}

}  // namespace

nlohmann::json family_to_json(const TubeFamily& f) {
    nlohmann::json j;
    j["n"] = f.dim();
    j["delta"] = f.delta();
    j["c0"] = f.c0();
    nlohmann::json tubes = nlohmann::json::array();
    for (const Tube& t : f.tubes()) {
        tubes.push_back({{"center", t.center().to_vector()},
                         {"direction", t.axis().to_vector()},
                         {"height", t.height()}});
    }
    j["tubes"] = std::move(tubes);
    return j;
}

TubeFamily family_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("schema.violation", "family: expected an object");
    if (!j.contains("n") || !j["n"].is_number_integer()) throw Error("schema.violation", "n: expected an integer");
    if (!j.contains("delta") || !j["delta"].is_number()) throw Error("schema.violation", "delta: expected a number");
    const int n = j["n"].get<int>();
    const double delta = j["delta"].get<double>();
    if (n < 2 || n > kMaxDim) throw Error("schema.violation", "n: out of range");
    if (!(delta > 0.0)) throw Error("schema.violation", "delta: must be positive");
    double c0 = 0.5;
    if (j.contains("c0")) {
        if (!j["c0"].is_number()) throw Error("schema.violation", "c0: expected a number");
        c0 = j["c0"].get<double>();
        if (!(c0 > 0.0 && c0 < 1.0)) throw Error("schema.violation", "c0: must lie in (0, 1)");
    }
    if (!j.contains("tubes") || !j["tubes"].is_array()) throw Error("schema.violation", "tubes: expected an array");
    TubeFamily f(n, delta, c0);
    const auto& tubes = j["tubes"];
    for (std::size_t i = 0; i < tubes.size(); ++i) {
        const std::string where = "tubes[" + std::to_string(i) + "]";
        const auto& t = tubes[i];
        if (!t.is_object()) throw Error("schema.violation", where + ": expected an object");
        if (!t.contains("center")) throw Error("schema.violation", where + ".center: missing");
        if (!t.contains("direction")) throw Error("schema.violation", where + ".direction: missing");
        const auto center = real_array(t["center"], where + ".center");
        const auto dir = real_array(t["direction"], where + ".direction");
        if (static_cast<int>(center.size()) != n)
            throw Error("schema.violation", where + ".center: expected " + std::to_string(n) + " components");
        if (static_cast<int>(dir.size()) != n)
            throw Error("schema.violation", where + ".direction: expected " + std::to_string(n) + " components");
        double height = 1.0;
        if (t.contains("height")) {
            if (!t["height"].is_number()) throw Error("schema.violation", where + ".height: expected a number");
            height = t["height"].get<double>();
            if (!(height > 0.0)) throw Error("schema.violation", where + ".height: must be positive");
        }
        Direction e;
        try {
            e = Direction::normalized(Vec::from(dir));
        } catch (const Error&) {
            throw Error("schema.violation", where + ".direction: zero vector");
        }
        f.add(Tube(Vec::from(center), e, delta, height));
    }
    return f;
}

TubeFamily load_family(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error("io.not_found", "no such file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("io.unreadable", "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("io.parse", path + ": " + e.what());
    }
    return family_from_json(j);
}

void save_family(const TubeFamily& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("io.unwritable", "cannot write " + path);
    out << family_to_json(f).dump(1) << "\n";
}

}  // namespace tubekit
