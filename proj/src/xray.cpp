#include "tubekit/xray.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tubekit {

namespace {

// Amanatides-Woo walk over the cells met by the line; visit(set, t0, t1) is
// called per cell with the parameter interval inside it.
template <class Visit>
void traverse(const VoxelSet& E, const Vec& point, const Vec& dir, Visit visit) {
    const int m = E.dim();
    const double h = E.cell();
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) {
        const double lo = E.origin()[k], hi = lo + E.size(k) * h;
        if (dir[k] == 0.0) {
            if (point[k] < lo || point[k] >= hi) return;
            continue;
        }
        double a = (lo - point[k]) / dir[k], b = (hi - point[k]) / dir[k];
        if (a > b) std::swap(a, b);
        tmin = std::max(tmin, a);
        tmax = std::min(tmax, b);
    }
    if (!(tmin < tmax)) return;

    std::array<long, 3> idx{0, 0, 0}, step{0, 0, 0};
    std::array<double, 3> next{}, delta{};
    const double tmid = tmin + 1e-12 * (tmax - tmin);
    for (int k = 0; k < m; ++k) {
        const double u = (point[k] + dir[k] * tmid - E.origin()[k]) / h;
        idx[k] = std::clamp(static_cast<long>(std::floor(u)), 0L, E.size(k) - 1);
        if (dir[k] > 0.0) {
            step[k] = 1;
            next[k] = (E.origin()[k] + (idx[k] + 1) * h - point[k]) / dir[k];
            delta[k] = h / dir[k];
        } else if (dir[k] < 0.0) {
            step[k] = -1;
            next[k] = (E.origin()[k] + idx[k] * h - point[k]) / dir[k];
            delta[k] = -h / dir[k];
        } else {
            next[k] = std::numeric_limits<double>::infinity();
            delta[k] = std::numeric_limits<double>::infinity();
        }
    }
    double t = tmin;
    for (;;) {
        int axis = 0;
        for (int k = 1; k < m; ++k)
            if (next[k] < next[axis]) axis = k;
        const double tn = std::min(next[axis], tmax);
        visit(E.at(idx[0], idx[1], idx[2]), t, tn);
        t = tn;
        if (t >= tmax) break;
        idx[axis] += step[axis];
        if (idx[axis] < 0 || idx[axis] >= E.size(axis)) break;
        next[axis] += delta[axis];
    }
}

}  // namespace

double xray_line(const VoxelSet& E, const Vec& point, const Vec& dir) {
    double length = 0.0;
    traverse(E, point, dir, [&](bool set, double t0, double t1) {
        if (set) length += t1 - t0;
    });
    return length;
}

std::vector<std::pair<double, double>> line_runs(const VoxelSet& E, const Vec& point, const Vec& dir) {
    std::vector<std::pair<double, double>> runs;
    bool open = false;
    traverse(E, point, dir, [&](bool set, double t0, double t1) {
        if (set && open && runs.back().second >= t0 - 1e-12) {
            runs.back().second = t1;
        } else if (set) {
            runs.emplace_back(t0, t1);
            open = true;
        } else {
            open = false;
        }
    });
    return runs;
}

double xray_line(const VoxelSet& E, const LineSample& line) { return xray_line(E, line.offset, line.xi.vec()); }

VoxelSet crop(const VoxelSet& E) {
    std::array<long, 3> lo, hi;
    if (!E.tight_bounds(lo, hi)) return E;
    std::array<long, 3> dims{1, 1, 1};
    Vec origin(E.dim());
    for (int k = 0; k < E.dim(); ++k) {
        dims[k] = hi[k] - lo[k];
        origin[k] = E.origin()[k] + lo[k] * E.cell();
    }
    VoxelSet out(E.dim(), dims, E.cell(), origin);
    for (long k = 0; k < dims[2]; ++k)
        for (long j = 0; j < dims[1]; ++j)
            for (long i = 0; i < dims[0]; ++i) out.set(i, j, k, E.at(i + lo[0], j + lo[1], k + lo[2]));
    return out;
}

namespace {

struct PowerSums {
    long double sum = 0.0L;
    long double sum_sq = 0.0L;
};

struct PowerEstimate {
    double value = 0.0;
    double error_95 = 0.0;
    std::int64_t samples = 0;
};

// Monte Carlo over the line space of R^m: quasi-random directions on the
// half sphere, uniform offsets in the circumscribed disk of the support.
PowerEstimate power_integral(const VoxelSet& E, std::int64_t budget, std::uint64_t seed) {
    const int m = E.dim();
    const VoxelSet C = crop(E);
    Vec lo, hi;
    C.tight_box(lo, hi);
    Vec center(m);
    double R2 = 0.0;
    for (int k = 0; k < m; ++k) {
        center[k] = 0.5 * (lo[k] + hi[k]);
        R2 += 0.25 * (hi[k] - lo[k]) * (hi[k] - lo[k]);
    }
    const double R = std::sqrt(R2);
    const double sphere_half = m == 2 ? kPi : 2.0 * kPi;
    const double offset_measure = unit_ball_volume(m - 1) * std::pow(R, m - 1);
    const double W = sphere_half * offset_measure;

    Rng shift_rng(mix_seed(seed, 0xc0ffee));
    const double shift_a = shift_rng.uniform(), shift_b = shift_rng.uniform();
    constexpr double golden = 0.6180339887498949;
    // R2 sequence constants (plastic number).
    constexpr double r2a = 0.7548776662466927, r2b = 0.5698402909980532;

    constexpr std::int64_t kChunk = 4096;
    const std::int64_t chunks = (budget + kChunk - 1) / kChunk;
    std::vector<PowerSums> parts(static_cast<std::size_t>(chunks));
    parallel_for(parts.size(), [&](std::size_t ci) {
        Rng rng(mix_seed(seed, ci));
        const std::int64_t first = static_cast<std::int64_t>(ci) * kChunk;
        const std::int64_t last = std::min(budget, first + kChunk);
        PowerSums s;
        for (std::int64_t i = first; i < last; ++i) {
            Vec dir(m), p(m);
            if (m == 2) {
                const double frac = std::fmod(i * golden + shift_a, 1.0);
                const double theta = kPi * frac;
                dir = Vec{std::cos(theta), std::sin(theta)};
                const double off = R * (2.0 * rng.uniform() - 1.0);
                p = center + Vec{-dir[1], dir[0]} * off;
            } else {
                const double u = std::fmod(i * r2a + shift_a, 1.0);
                const double v = std::fmod(i * r2b + shift_b, 1.0);
                const double z = u, rho = std::sqrt(std::max(0.0, 1.0 - z * z)), phi = 2.0 * kPi * v;
                dir = Vec{rho * std::cos(phi), rho * std::sin(phi), z};
                const std::vector<Vec> basis = orthonormal_complement(dir);
                const double r = R * std::sqrt(rng.uniform()), a = 2.0 * kPi * rng.uniform();
                p = center + basis[0] * (r * std::cos(a)) + basis[1] * (r * std::sin(a));
            }
            const long double len = xray_line(C, p, dir);
            long double f = len;
            for (int k = 0; k < m; ++k) f *= len;
            s.sum += f;
            s.sum_sq += f * f;
        }
        parts[ci] = s;
    });
    long double sum = 0.0L, sum_sq = 0.0L;
    for (const PowerSums& s : parts) {
        sum += s.sum;
        sum_sq += s.sum_sq;
    }
    const long double n = static_cast<long double>(budget);
    const long double mean = sum / n;
    const long double var = std::max(0.0L, sum_sq / n - mean * mean);
    PowerEstimate out;
    out.value = static_cast<double>(W * mean);
    out.error_95 = static_cast<double>(1.96L * W * std::sqrt(var / n));
    out.samples = budget;
    return out;
}

void require_index_input(const VoxelSet& E) {
    if (E.dim() < 2) throw Error("xray.unsupported_dimension", "convexity index needs m >= 2");
    if (E.count() == 0) throw Error("xray.empty_set", "convexity index of an empty set is undefined");
}

}  // namespace

ConvexityReport convexity_index(const VoxelSet& E, std::int64_t budget, std::uint64_t seed) {
    require_index_input(E);
    if (budget < 1) throw Error("xray.budget", "budget must be positive");
    const int m = E.dim();
    const PowerEstimate p = power_integral(E, budget, seed);
    ConvexityReport r;
    r.m = m;
    r.volume = E.volume();
    r.power_integral = p.value;
    r.power_error_95 = p.error_95;
    r.line_samples = p.samples;
    const double norm = 2.0 / (m * (m + 1) * r.volume * r.volume);
    r.index = norm * r.power_integral;
    r.abs_error_95 = norm * r.power_error_95;
    return r;
}

RenCheck ren_identity_check(const VoxelSet& E, std::int64_t budget, std::uint64_t seed) {
    const ConvexityReport r = convexity_index(E, budget, seed);
    RenCheck out;
    out.lhs = r.power_integral;
    out.lhs_error_95 = r.power_error_95;
    out.rhs = 0.5 * r.m * (r.m + 1) * r.volume * r.volume;
    out.ratio = out.lhs / out.rhs;
    return out;
}

VoxelSet apply_affine(const VoxelSet& E, const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    const int m = E.dim();
    if (A.rows() != m || A.cols() != m || b.size() != m)
        throw Error("geometry.dimension", "affine map dimension differs from the set");
    const double det = A.determinant();
    if (!(std::abs(det) > 1e-12)) throw Error("xray.singular_map", "affine map is singular");
    const VoxelSet C = crop(E);
    Vec lo, hi;
    if (!C.tight_box(lo, hi)) throw Error("xray.empty_set", "cannot map an empty set");
    Eigen::VectorXd ilo = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    Eigen::VectorXd ihi = -ilo;
    for (int corner = 0; corner < (1 << m); ++corner) {
        Eigen::VectorXd x(m);
        for (int k = 0; k < m; ++k) x[k] = (corner >> k) & 1 ? hi[k] : lo[k];
        const Eigen::VectorXd y = A * x + b;
        ilo = ilo.cwiseMin(y);
        ihi = ihi.cwiseMax(y);
    }
    const double h = E.cell() * std::pow(std::abs(det), 1.0 / m);
    Vec olo(m), ohi(m);
    for (int k = 0; k < m; ++k) {
        olo[k] = ilo[k] - h;
        ohi[k] = ihi[k] + h;
    }
    const Eigen::MatrixXd inv = A.inverse();
    return VoxelSet::from_predicate(m, olo, ohi, h, [&](const Vec& y) {
        Eigen::VectorXd v(m);
        for (int k = 0; k < m; ++k) v[k] = y[k] - b[k];
        const Eigen::VectorXd x = inv * v;
        return C.contains(Vec::from(std::vector<double>(x.data(), x.data() + m)));
    });
}

AffineCheck affine_invariance_check(const VoxelSet& E, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    std::int64_t budget, std::uint64_t seed) {
    AffineCheck out;
    const VoxelSet image = apply_affine(E, A, b);
    out.original = convexity_index(E, budget, mix_seed(seed, 1));
    out.transformed = convexity_index(image, budget, mix_seed(seed, 2));
    out.difference = std::abs(out.original.index - out.transformed.index);
    out.combined_error_95 = std::hypot(out.original.abs_error_95, out.transformed.abs_error_95);
    out.agree = out.difference <= out.combined_error_95;
    return out;
}

double OrientedBox::volume() const {
    double v = 1.0;
    for (Eigen::Index k = 0; k < lo.size(); ++k) v *= std::max(0.0, hi[k] - lo[k]);
    return v;
}

bool OrientedBox::contains(const Vec& x) const {
    const Eigen::Index m = lo.size();
    for (Eigen::Index k = 0; k < m; ++k) {
        double y = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) y += frame(i, k) * (x[static_cast<int>(i)] - anchor[i]);
        if (y < lo[k] || y > hi[k]) return false;
    }
    return true;
}

double OrientedBox::diameter() const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < lo.size(); ++k) s += (hi[k] - lo[k]) * (hi[k] - lo[k]);
    return std::sqrt(s);
}

namespace {

struct Projected {
    Eigen::MatrixXd frame;
    std::vector<std::vector<double>> y;  // y[k][p]
};

double box_score(const Projected& P, const std::vector<double>& lo, const std::vector<double>& hi, double weight,
                 double volume_E, double* inside = nullptr, double* covered = nullptr) {
    const int m = static_cast<int>(lo.size());
    const std::size_t n = P.y[0].size();
    std::int64_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
        bool in = true;
        for (int k = 0; k < m && in; ++k) in = P.y[k][p] >= lo[k] && P.y[k][p] <= hi[k];
        count += in;
    }
    double vol = 1.0;
    for (int k = 0; k < m; ++k) vol *= std::max(0.0, hi[k] - lo[k]);
    const double inter = count * weight;
    const double a = vol > 0.0 ? inter / vol : 0.0;
    const double b = inter / volume_E;
    if (inside) *inside = a;
    if (covered) *covered = b;
    return std::min(a, b);
}

}  // namespace

CoreResult find_convex_core(const VoxelSet& E, const CoreOptions& o) {
    require_index_input(E);
    CoreResult out;
    out.index = o.known_index ? *o.known_index : convexity_index(E, o.index_budget, o.seed).index;
    if (out.index < o.c_min)
        throw Error("xray.precondition", "convexity index " + std::to_string(out.index) + " below c_min " +
                                             std::to_string(o.c_min));
    const int m = E.dim();
    const double h = E.cell();
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < E.cell_total(); ++c)
        if (E.at_flat(c)) cells.push_back(c);
    const std::size_t cap = m == 2 ? 120000 : 60000;
    const std::size_t stride = std::max<std::size_t>(1, (cells.size() + cap - 1) / cap);
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < cells.size(); i += stride) pts.push_back(E.cell_center(cells[i]));
    const double cell_volume = std::pow(h, m);
    const double weight = cell_volume * static_cast<double>(cells.size()) / pts.size();
    const double volume_E = cells.size() * cell_volume;

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
    for (const Vec& p : pts)
        for (int k = 0; k < m; ++k) mean[k] += p[k];
    mean /= static_cast<double>(pts.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
    for (const Vec& p : pts) {
        Eigen::VectorXd d(m);
        for (int k = 0; k < m; ++k) d[k] = p[k] - mean[k];
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    std::vector<Eigen::MatrixXd> frames{Eigen::MatrixXd::Identity(m, m), eig.eigenvectors()};

    double best = -1.0;
    for (const Eigen::MatrixXd& F : frames) {
        Projected P{F, std::vector<std::vector<double>>(m, std::vector<double>(pts.size()))};
        for (std::size_t p = 0; p < pts.size(); ++p)
            for (int k = 0; k < m; ++k) {
                double y = 0.0;
                for (int i = 0; i < m; ++i) y += F(i, k) * (pts[p][i] - mean[i]);
                P.y[k][p] = y;
            }
        std::vector<std::vector<double>> sorted = P.y;
        for (auto& s : sorted) std::sort(s.begin(), s.end());
        // Cell half-extent along each frame axis, so a voxelized box maps to itself.
        std::vector<double> pad(m);
        for (int k = 0; k < m; ++k) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += std::abs(F(i, k));
            pad[k] = 0.5 * h * s;
        }
        for (double q : {0.0, 0.02, 0.05, 0.1, 0.2}) {
            std::vector<double> lo(m), hi(m);
            for (int k = 0; k < m; ++k) {
                const std::size_t n = sorted[k].size();
                const std::size_t a = static_cast<std::size_t>(q * (n - 1));
                lo[k] = sorted[k][a] - pad[k];
                hi[k] = sorted[k][n - 1 - a] + pad[k];
            }
            double score = box_score(P, lo, hi, weight, volume_E);
            std::vector<double> step(m);
            for (int k = 0; k < m; ++k) step[k] = 0.25 * (hi[k] - lo[k]);
            for (int iter = 0; iter < 4000; ++iter) {
                bool any_step = false;
                for (int k = 0; k < m; ++k) {
                    if (step[k] < 0.25 * h) continue;
                    any_step = true;
                    bool improved = false;
                    for (int face = 0; face < 2; ++face) {
                        for (int sign : {-1, 1}) {
                            std::vector<double> l2 = lo, h2 = hi;
                            (face ? h2 : l2)[k] += sign * step[k];
                            if (!(l2[k] < h2[k])) continue;
                            const double s = box_score(P, l2, h2, weight, volume_E);
                            if (s > score + 1e-12) {
                                score = s;
                                lo = l2;
                                hi = h2;
                                improved = true;
                            }
                        }
                    }
                    if (!improved) step[k] *= 0.5;
                }
                if (!any_step) break;
            }
            if (score > best) {
                best = score;
                out.box.frame = F;
                out.box.anchor = mean;
                out.box.lo = Eigen::Map<Eigen::VectorXd>(lo.data(), m);
                out.box.hi = Eigen::Map<Eigen::VectorXd>(hi.data(), m);
            }
        }
    }
    // Exact ratios over all cells.
    std::int64_t inside = 0;
    for (std::size_t c : cells) inside += out.box.contains(E.cell_center(c));
    const double inter = inside * cell_volume;
    out.inside_ratio = inter / out.box.volume();
    out.covered_ratio = inter / volume_E;
    out.found = out.inside_ratio >= o.threshold && out.covered_ratio >= o.threshold;
    return out;
}

namespace {

using Pt = std::array<double, 2>;

double cross(const Pt& o, const Pt& a, const Pt& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<Pt> hull(std::vector<Pt> p) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (p.size() < 3) return p;
    std::vector<Pt> h(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
        h[k++] = p[i];
    }
    for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
        h[k++] = p[i];
    }
    h.resize(k - 1);
    return h;
}

// Corners of the first and last set cell of every row along axis 0.
std::vector<Vec> extreme_corners(const VoxelSet& E) {
    const int m = E.dim();
    const double h = E.cell();
    std::vector<Vec> out;
    for (long k = 0; k < E.dims()[2]; ++k) {
        for (long j = 0; j < E.dims()[1]; ++j) {
            long first = -1, last = -1;
            for (long i = 0; i < E.size(0); ++i) {
                if (!E.at(i, j, k)) continue;
                if (first < 0) first = i;
                last = i;
            }
            if (first < 0) continue;
            for (long i : {first, last + 1}) {
                for (int cj = 0; cj < (m >= 2 ? 2 : 1); ++cj) {
                    for (int ck = 0; ck < (m >= 3 ? 2 : 1); ++ck) {
                        Vec x(m);
                        x[0] = E.origin()[0] + i * h;
                        if (m >= 2) x[1] = E.origin()[1] + (j + cj) * h;
                        if (m >= 3) x[2] = E.origin()[2] + (k + ck) * h;
                        out.push_back(x);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

double voxel_diameter(const VoxelSet& E) {
    const std::vector<Vec> pts = extreme_corners(E);
    if (pts.empty()) return 0.0;
    const int m = E.dim();
    if (m == 1) return std::abs(pts.back()[0] - pts.front()[0]);
    if (m == 2) {
        std::vector<Pt> p;
        for (const Vec& v : pts) p.push_back({v[0], v[1]});
        const std::vector<Pt> H = hull(p);
        double best = 0.0;
        for (std::size_t a = 0; a < H.size(); ++a)
            for (std::size_t b = a + 1; b < H.size(); ++b)
                best = std::max(best, std::hypot(H[a][0] - H[b][0], H[a][1] - H[b][1]));
        return best;
    }
    constexpr int kDirections = 4096;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    double best = 0.0;
    for (int i = 0; i < kDirections; ++i) {
        const double z = 1.0 - (i + 0.5) / kDirections;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const Vec u{r * std::cos(golden * i), r * std::sin(golden * i), z};
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const Vec& v : pts) {
            const double s = dot(u, v);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        best = std::max(best, hi - lo);
    }
    return best;
}

ShiftedIntersection shifted_intersection_check(const VoxelSet& E, double slack) {
    const VoxelSet C = crop(E);
    const int m = C.dim();
    ShiftedIntersection out;
    out.slack = slack;
    const double h = C.cell();
    const double vol = C.volume();
    out.diameter = voxel_diameter(C);
    long reach = 0;
    for (int k = 0; k < m; ++k) reach = std::max(reach, C.size(k));
    const std::size_t shifts = static_cast<std::size_t>(2 * reach + 1);
    std::vector<std::int64_t> counts(shifts, 0);
    parallel_for(shifts, [&](std::size_t si) {
        const long s = static_cast<long>(si) - reach;
        std::int64_t count = 0;
        for (long k = 0; k < C.dims()[2]; ++k)
            for (long j = 0; j < C.dims()[1]; ++j)
                for (long i = 0; i < C.size(0); ++i) {
                    if (!C.at(i, j, k)) continue;
                    // x in E + t e_a  iff  x - t e_a in E.
                    std::array<long, 3> idx{i, j, k};
                    bool all = true;
                    for (int a = 0; a < m && all; ++a) {
                        std::array<long, 3> q = idx;
                        q[a] -= s;
                        all = q[a] >= 0 && q[a] < C.size(a) && C.at(q[0], q[1], q[2]);
                    }
                    count += all;
                }
        counts[si] = count;
    });
    double lhs = 0.0;
    const double cell_volume = std::pow(h, m);
    for (std::int64_t c : counts) lhs += c * cell_volume * h;
    out.lhs = lhs;
    out.rhs = 2.0 * std::pow(std::pow(out.diameter, m - 1) * std::pow(vol, 2 * m), 1.0 / (2 * m - 1));
    out.holds = out.lhs <= out.rhs * (1.0 + slack);
    return out;
}

}  // namespace tubekit
