#include "tubekit/rigidity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tubekit/direction_net.hpp"
#include "tubekit/packing.hpp"
#include "tubekit/tube_index.hpp"

namespace tubekit {

namespace {

nlohmann::json vec_json(const Vec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.dim(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw Error("io.schema", where + " must be an array of numbers");
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw Error("io.schema", where + " must be an array of numbers");
        v.push_back(x.get<double>());
    }
    if (v.empty() || static_cast<int>(v.size()) > kMaxDim) throw Error("io.schema", where + " has a bad length");
    return Vec::from(v);
}

Eigen::VectorXd to_eigen(const Vec& v) {
    Eigen::VectorXd out(v.dim());
    for (int i = 0; i < v.dim(); ++i) out[i] = v[i];
    return out;
}

Vec from_eigen(const Eigen::VectorXd& v) {
    Vec out(static_cast<int>(v.size()));
    for (int i = 0; i < out.dim(); ++i) out[i] = v[i];
    return out;
}

// Proper rotation taking the unit vector m to e_n: a reflection along m - e_n
// followed by flipping the first axis, which fixes e_n.
Eigen::MatrixXd rotation_to_vertical(const Eigen::VectorXd& m) {
    const int n = static_cast<int>(m.size());
    Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd u = m;
    u[n - 1] -= 1.0;
    if (u.squaredNorm() < 1e-24) return R;
    R -= 2.0 * u * u.transpose() / u.squaredNorm();
    R.row(0) *= -1.0;
    return R;
}

Tube transform(const Tube& t, const Eigen::MatrixXd& R, const Eigen::VectorXd& b) {
    const Eigen::VectorXd c = R * to_eigen(t.center()) + b;
    const Eigen::VectorXd e = R * to_eigen(t.axis());
    return Tube(from_eigen(c), Direction::normalized(from_eigen(e)), t.delta(), t.height());
}

double vertical_tilt(const Vec& axis) {
    const int n = axis.dim();
    return std::acos(std::min(1.0, std::abs(axis[n - 1])));
}

// Vertical extent [lo, hi] of a tube.
std::pair<double, double> vertical_extent(const Tube& t) {
    const int n = t.dim();
    const double c = std::abs(t.axis()[n - 1]);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double half = 0.5 * t.height() * c + t.radius() * s;
    return {t.center()[n - 1] - half, t.center()[n - 1] + half};
}

// Axis point at height z (requires a non-horizontal axis).
Vec axis_at_height(const Tube& t, double z) {
    const int n = t.dim();
    const double s = (z - t.center()[n - 1]) / t.axis()[n - 1];
    return t.center() + t.axis() * s;
}

// Conservative per-axis shadow of a tube on the first n-1 coordinates.
void footprint(const Tube& t, Vec& lo, Vec& hi) {
    const int m = t.dim() - 1;
    const auto [p, q] = t.endpoints();
    lo = Vec(m);
    hi = Vec(m);
    for (int i = 0; i < m; ++i) {
        lo[i] = std::min(p[i], q[i]) - t.radius();
        hi[i] = std::max(p[i], q[i]) + t.radius();
    }
}

// Farthest point of a tube from x is on a cap rim.
bool tube_in_ball(const Tube& t, const Vec& x, double R) {
    const auto [p, q] = t.endpoints();
    for (const Vec* end : {&p, &q}) {
        const Vec w = *end - x;
        const double a = dot(w, t.axis());
        const double perp = std::sqrt(std::max(0.0, norm2(w) - a * a));
        if (a * a + (perp + t.radius()) * (perp + t.radius()) > R * R) return false;
    }
    return true;
}

Vec sample_in_tube(const Tube& t, Rng& rng) {
    const int n = t.dim();
    const std::vector<Vec> basis = orthonormal_complement(t.axis());
    Vec g(n - 1);
    double gn = 0.0;
    do {
        for (int i = 0; i < n - 1; ++i) g[i] = rng.normal();
        gn = norm(g);
    } while (gn < 1e-12);
    const double rho = t.radius() * std::pow(rng.uniform(), 1.0 / (n - 1));
    Vec x = t.center() + t.axis() * ((rng.uniform() - 0.5) * t.height());
    for (int i = 0; i < n - 1; ++i) x += basis[i] * (rho * g[i] / gn);
    return x;
}

void check_rigidity_dimension(int n) {
    if (n < 2 || n > 4) throw Error("rigidity.unsupported_dimension", "bush and structure detection support 2 <= n <= 4");
}

}  // namespace

double implied_lambda0(const GoodConfigCertificate& cert, double delta, int n) {
    if (cert.groups.empty()) return 0.0;
    std::size_t smallest = cert.groups.front().members.size();
    for (const auto& g : cert.groups) smallest = std::min(smallest, g.members.size());
    const double m = static_cast<double>(std::min(cert.groups.size(), smallest)) * std::pow(delta, n - 1);
    return m * m;
}

GoodConfigCheck check_good_config(const TubeFamily& f, const GoodConfigCertificate& cert, bool check_distinct) {
    GoodConfigCheck out;
    const int n = f.dim();
    const double delta = f.delta();
    auto fail = [&](const std::string& cond, std::optional<std::size_t> tube, const std::string& msg) {
        out.ok = false;
        out.condition = cond;
        out.tube = tube;
        out.message = msg;
        return out;
    };
    if (cert.O.dim() != n) return fail("index", std::nullopt, "O has the wrong dimension");
    std::vector<char> seen(f.size(), 0);
    for (const auto& g : cert.groups) {
        if (g.center.dim() != n) return fail("index", std::nullopt, "group center has the wrong dimension");
        for (std::size_t i : g.members)
            if (i >= f.size()) return fail("index", i, "member index out of range");
    }
    for (const auto& g : cert.groups)
        for (std::size_t i : g.members) {
            const auto [vert, horiz] = vertical_horizontal_distance(f[i], cert.O);
            if (horiz > 0.5 + 1e-12)
                return fail("a", i, "horizontal distance " + std::to_string(horiz) + " exceeds 1/2");
            if (vert > cert.epsilon0 + 1e-12)
                return fail("a", i, "vertical distance " + std::to_string(vert) + " exceeds epsilon0");
        }
    if (cert.groups.empty()) return fail("b", std::nullopt, "no direction groups");
    if (!(cert.lambda0 > 0.0)) return fail("b", std::nullopt, "lambda0 must be positive");
    const double need = std::sqrt(cert.lambda0) * std::pow(delta, 1.0 - n) * (1.0 - 1e-9);
    if (static_cast<double>(cert.groups.size()) < need)
        return fail("b", std::nullopt,
                    std::to_string(cert.groups.size()) + " groups, need " + std::to_string(need));
    for (std::size_t k = 0; k < cert.groups.size(); ++k) {
        const auto& g = cert.groups[k];
        if (static_cast<double>(g.members.size()) < need)
            return fail("b", std::nullopt,
                        "group " + std::to_string(k) + " has " + std::to_string(g.members.size()) + " members");
        for (std::size_t l = 0; l < k; ++l)
            if (angle(g.center, cert.groups[l].center) <= delta)
                return fail("b", std::nullopt,
                            "group centers " + std::to_string(l) + " and " + std::to_string(k) + " are within delta");
        for (std::size_t i : g.members) {
            if (seen[i]) return fail("b", i, "tube appears in two groups");
            seen[i] = 1;
            if (angle(f[i].direction(), g.center) > cert.epsilon0 * delta * (1.0 + 1e-9))
                return fail("b", i, "direction outside Cap(e_k, epsilon0 delta)");
        }
    }
    if (check_distinct) {
        std::vector<std::size_t> all;
        for (const auto& g : cert.groups) all.insert(all.end(), g.members.begin(), g.members.end());
        const PairCheck pc = is_essentially_distinct(f.subset(all));
        if (!pc.ok) return fail("distinct", all[pc.witness->first], "members are not essentially distinct");
    }
    out.ok = true;
    return out;
}

std::vector<DenseBall> extract_dense_balls(const TubeFamily& f, const DenseBallOptions& o) {
    std::vector<DenseBall> out;
    if (f.empty()) return out;
    const int n = f.dim();
    const double delta = f.delta();
    const int K = std::max(1, o.samples_per_tube);
    const TubeIndex index(f);

    std::vector<Vec> pts(f.size() * K);
    std::vector<int> mu(pts.size());
    parallel_for(f.size(), [&](std::size_t i) {
        Rng rng(mix_seed(o.seed, i));
        for (int k = 0; k < K; ++k) {
            pts[i * K + k] = sample_in_tube(f[i], rng);
            mu[i * K + k] = std::max(1, index.multiplicity(pts[i * K + k]));
        }
    });

    // M: samples of high multiplicity, weighted so their sum estimates |M|.
    const double mu_min = o.multiplicity_constant * std::pow(delta, 1.0 - n);
    const double tube_vol = tube_volume(f[0]);
    std::vector<std::size_t> M;
    for (std::size_t s = 0; s < pts.size(); ++s)
        if (mu[s] >= mu_min) M.push_back(s);
    if (M.empty()) return out;

    // Reference subsample for |B(x, 1) ∩ M|, hashed on unit cells.
    std::vector<std::size_t> ref = M;
    const std::size_t ref_cap = 2048;
    if (ref.size() > ref_cap) {
        Rng rng(mix_seed(o.seed, 0x5eed));
        for (std::size_t i = 0; i < ref_cap; ++i) std::swap(ref[i], ref[i + rng.below(ref.size() - i)]);
        ref.resize(ref_cap);
        std::sort(ref.begin(), ref.end());
    }
    double total_weight = 0.0;
    for (std::size_t s : M) total_weight += tube_vol / (K * mu[s]);
    double ref_weight = 0.0;
    for (std::size_t s : ref) ref_weight += tube_vol / (K * mu[s]);
    const double scale = total_weight / ref_weight;

    auto key = [&](const Vec& x) {
        std::vector<long> k(n);
        for (int i = 0; i < n; ++i) k[i] = static_cast<long>(std::floor(x[i]));
        return k;
    };
    std::map<std::vector<long>, std::vector<std::size_t>> grid;
    for (std::size_t s : ref) grid[key(pts[s])].push_back(s);
    auto ball_mass = [&](const Vec& x) {
        const std::vector<long> base = key(x);
        double mass = 0.0;
        std::vector<long> k(n);
        const long combos = static_cast<long>(std::pow(3, n));
        for (long c = 0; c < combos; ++c) {
            long r = c;
            for (int i = 0; i < n; ++i, r /= 3) k[i] = base[i] + (r % 3) - 1;
            const auto it = grid.find(k);
            if (it == grid.end()) continue;
            for (std::size_t s : it->second)
                if (distance(pts[s], x) <= 1.0) mass += tube_vol / (K * mu[s]);
        }
        return mass * scale;
    };

    std::vector<std::size_t> order = M;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mu[a] > mu[b]; });
    const double need = o.ball_density * std::pow(delta, 2.0 - 2.0 * n);
    std::vector<Vec> tried;
    for (std::size_t s : order) {
        const Vec& x = pts[s];
        bool blocked = false;
        for (const DenseBall& b : out)
            if (distance(b.center, x) < 6.0) blocked = true;
        // Points near a rejected candidate give nearly the same ball.
        for (const Vec& t : tried)
            if (distance(t, x) < 0.5) blocked = true;
        if (blocked) continue;
        tried.push_back(x);
        if (ball_mass(x) < o.mass_constant) continue;
        DenseBall b;
        b.center = x;
        b.multiplicity = mu[s];
        for (std::size_t i = 0; i < f.size(); ++i)
            if (tube_in_ball(f[i], x, 3.0)) b.members.push_back(i);
        if (static_cast<double>(b.members.size()) >= need) out.push_back(std::move(b));
    }
    return out;
}

GoodConfigCertificate extract_good_config(const TubeFamily& f, const std::vector<std::size_t>& members,
                                          double epsilon0, const GoodConfigOptions& o) {
    const int n = f.dim();
    const double delta = f.delta();
    if (!(epsilon0 > 0.0 && epsilon0 <= 1.0)) throw Error("rigidity.precondition", "epsilon0 must lie in (0, 1]");
    for (std::size_t i : members)
        if (i >= f.size()) throw Error("rigidity.precondition", "member index out of range");
    const double need = o.density * std::pow(delta, 2.0 - 2.0 * n);
    if (static_cast<double>(members.size()) < need)
        throw Error("rigidity.density", std::to_string(members.size()) + " tubes, need at least " +
                                            std::to_string(need));

    // Candidate points for O: tube centers (subsampled), their centroid, and
    // random points inside random member tubes.
    Rng rng(mix_seed(o.seed, 1));
    std::vector<Vec> cand;
    Vec centroid(n);
    for (std::size_t i : members) centroid += f[i].center();
    cand.push_back(centroid * (1.0 / members.size()));
    const std::size_t stride = std::max<std::size_t>(1, members.size() / 2048);
    for (std::size_t k = 0; k < members.size(); k += stride) cand.push_back(f[members[k]].center());
    for (int k = 0; k < o.candidates; ++k) cand.push_back(sample_in_tube(f[members[rng.below(members.size())]], rng));

    auto companion = [&](std::size_t i, const Vec& O) {
        const auto [vert, horiz] = vertical_horizontal_distance(f[i], O);
        return horiz <= 0.5 && vert <= epsilon0;
    };
    std::vector<std::size_t> hits(cand.size(), 0);
    parallel_for(cand.size(), [&](std::size_t c) {
        std::size_t h = 0;
        for (std::size_t i : members) h += companion(i, cand[c]) ? 1 : 0;
        hits[c] = h;
    });
    const std::size_t best = static_cast<std::size_t>(std::max_element(hits.begin(), hits.end()) - hits.begin());
    GoodConfigCertificate cert;
    cert.O = cand[best];
    cert.epsilon0 = epsilon0;
    std::vector<std::size_t> near;
    for (std::size_t i : members)
        if (companion(i, cert.O)) near.push_back(i);

    // Cover directions by delta-caps and count members per cap.
    const std::vector<Direction> net = direction_net(n, delta);
    std::vector<std::size_t> cap_of(near.size());
    parallel_for(near.size(), [&](std::size_t k) {
        const Vec& e = f[near[k]].axis();
        double best_dot = -1.0;
        for (std::size_t c = 0; c < net.size(); ++c) {
            const double d = std::abs(dot(net[c].vec(), e));
            if (d > best_dot) {
                best_dot = d;
                cap_of[k] = c;
            }
        }
    });
    std::vector<std::vector<std::size_t>> caps(net.size());
    for (std::size_t k = 0; k < near.size(); ++k) caps[cap_of[k]].push_back(near[k]);
    std::vector<std::size_t> cap_order;
    const double cap_need = o.lambda2 * std::pow(delta, 1.0 - n);
    for (std::size_t c = 0; c < caps.size(); ++c)
        if (static_cast<double>(caps[c].size()) >= cap_need) cap_order.push_back(c);
    std::stable_sort(cap_order.begin(), cap_order.end(),
                     [&](std::size_t a, std::size_t b) { return caps[a].size() > caps[b].size(); });
    std::vector<std::size_t> kept;
    for (std::size_t c : cap_order) {
        bool ok = true;
        for (std::size_t k : kept)
            if (angle(net[c], net[k]) <= 6.0 * delta) ok = false;
        if (ok) kept.push_back(c);
    }
    if (kept.empty()) throw Error("rigidity.no_config", "no direction cap reaches the lambda2 threshold");

    // Pigeonhole each kept cap into tangent cells of side epsilon0 delta / 2.
    const double side = 0.5 * epsilon0 * delta;
    for (std::size_t c : kept) {
        const Vec& e0 = net[c].vec();
        const std::vector<Vec> basis = orthonormal_complement(e0);
        std::map<std::vector<long>, std::vector<std::size_t>> cells;
        for (std::size_t i : caps[c]) {
            Vec e = f[i].axis();
            if (dot(e, e0) < 0) e = e * -1.0;
            std::vector<long> cell(n - 1);
            for (int k = 0; k < n - 1; ++k) cell[k] = static_cast<long>(std::floor(dot(e, basis[k]) / side));
            cells[cell].push_back(i);
        }
        auto top = cells.begin();
        for (auto it = cells.begin(); it != cells.end(); ++it)
            if (it->second.size() > top->second.size()) top = it;
        Vec center = e0;
        for (int k = 0; k < n - 1; ++k) center += basis[k] * ((top->first[k] + 0.5) * side);
        cert.groups.push_back({Direction::normalized(center), top->second});
    }
    cert.lambda0 = implied_lambda0(cert, delta, n);
    return cert;
}

NormalizedFamily normalize_family(const TubeFamily& f, double max_tilt) {
    const int n = f.dim();
    if (f.empty()) throw Error("rigidity.precondition", "empty family");
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    for (const Tube& t : f.tubes()) {
        const Eigen::VectorXd e = to_eigen(t.axis());
        S += e * e.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    Eigen::VectorXd m = eig.eigenvectors().col(n - 1);
    if (m[n - 1] < 0) m = -m;
    NormalizedFamily out;
    out.rotation = rotation_to_vertical(m);

    std::vector<double> heights;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Eigen::VectorXd e = out.rotation * to_eigen(f[i].axis());
        const double tilt = std::acos(std::min(1.0, std::abs(e[n - 1])));
        if (tilt > max_tilt)
            throw Error("rigidity.precondition", "tube " + std::to_string(i) + " is tilted " + std::to_string(tilt) +
                                                     " from the mean direction, above " + std::to_string(max_tilt));
        const Eigen::VectorXd c = out.rotation * to_eigen(f[i].center());
        mean += c;
        heights.push_back(c[n - 1]);
    }
    mean /= static_cast<double>(f.size());
    std::nth_element(heights.begin(), heights.begin() + heights.size() / 2, heights.end());
    mean[n - 1] = heights[heights.size() / 2] + 3.0 / 16.0;
    out.translation = -mean;
    out.family = TubeFamily(n, f.delta(), f.c0());
    for (const Tube& t : f.tubes()) out.family.add(transform(t, out.rotation, out.translation));
    return out;
}

double section_area(const TubeFamily& f, double t, double h) {
    const int n = f.dim();
    check_rigidity_dimension(n);
    const int m = n - 1;
    std::vector<std::size_t> hit;
    Vec lo(m), hi(m);
    for (int i = 0; i < m; ++i) {
        lo[i] = 1e300;
        hi[i] = -1e300;
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto [zl, zh] = vertical_extent(f[i]);
        if (t < zl || t > zh || std::abs(f[i].axis()[n - 1]) < 1e-9) continue;
        hit.push_back(i);
        const Vec p = axis_at_height(f[i], t);
        const double reach = f[i].radius() / std::abs(f[i].axis()[n - 1]);
        for (int k = 0; k < m; ++k) {
            lo[k] = std::min(lo[k], p[k] - reach);
            hi[k] = std::max(hi[k], p[k] + reach);
        }
    }
    if (hit.empty()) return 0.0;
    if (m == 1) {
        // Exact union of section intervals.
        std::vector<std::pair<double, double>> iv;
        for (std::size_t i : hit) {
            const Tube& T = f[i];
            const Vec p = axis_at_height(T, t);
            const double reach = T.radius() / std::abs(T.axis()[1]);
            // Clip by the caps: points (x, t) with axial coordinate in [-h/2, h/2].
            double a = p[0] - reach, b = p[0] + reach;
            const double ax = T.axis()[0];
            if (std::abs(ax) > 1e-15) {
                const double s0 = (t - T.center()[1]) * T.axis()[1];
                double u = T.center()[0] + (-0.5 * T.height() - s0) / ax;
                double w = T.center()[0] + (0.5 * T.height() - s0) / ax;
                if (u > w) std::swap(u, w);
                a = std::max(a, u);
                b = std::min(b, w);
            }
            if (a < b) iv.emplace_back(a, b);
        }
        std::sort(iv.begin(), iv.end());
        double total = 0.0, cur_lo = 0.0, cur_hi = -1e300;
        for (const auto& [a, b] : iv) {
            if (a > cur_hi) {
                if (cur_hi > -1e299) total += cur_hi - cur_lo;
                cur_lo = a;
                cur_hi = b;
            } else {
                cur_hi = std::max(cur_hi, b);
            }
        }
        if (cur_hi > -1e299) total += cur_hi - cur_lo;
        return total;
    }
    std::array<long, 3> dims{1, 1, 1};
    for (int k = 0; k < m; ++k) dims[k] = std::max(1L, static_cast<long>(std::ceil((hi[k] - lo[k]) / h)));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), 0);
    Vec x(n);
    x[n - 1] = t;
    for (std::size_t i : hit) {
        const Tube& T = f[i];
        const Vec p = axis_at_height(T, t);
        const double reach = T.radius() / std::abs(T.axis()[n - 1]);
        std::array<long, 3> a{0, 0, 0}, b{0, 0, 0};
        for (int k = 0; k < m; ++k) {
            a[k] = std::max(0L, static_cast<long>(std::floor((p[k] - reach - lo[k]) / h)));
            b[k] = std::min(dims[k] - 1, static_cast<long>(std::floor((p[k] + reach - lo[k]) / h)));
        }
        for (long kk = a[2]; kk <= b[2]; ++kk)
            for (long jj = a[1]; jj <= b[1]; ++jj)
                for (long ii = a[0]; ii <= b[0]; ++ii) {
                    const std::size_t c = static_cast<std::size_t>((kk * dims[1] + jj) * dims[0] + ii);
                    if (mask[c]) continue;
                    const long idx[3] = {ii, jj, kk};
                    for (int k = 0; k < m; ++k) x[k] = lo[k] + (idx[k] + 0.5) * h;
                    if (T.contains(x)) mask[c] = 1;
                }
    }
    const double cells = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
    return cells * std::pow(h, m);
}

BushDirections detect_bush_directions(const TubeFamily& f, const BushOptions& o) {
    const int n = f.dim();
    check_rigidity_dimension(n);
    const double delta = f.delta();
    BushDirections out;
    if (f.empty()) return out;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double tilt = vertical_tilt(f[i].axis());
        if (tilt > o.max_tilt)
            throw Error("rigidity.precondition", "tube " + std::to_string(i) + " is tilted " + std::to_string(tilt) +
                                                     " from vertical, above " + std::to_string(o.max_tilt));
    }

    // |K| by slicing, then the first plane triple avoiding X = {t : |K_t| > 100 |K|}.
    const double h = 0.25 * delta;
    double zmin = 1e300, zmax = -1e300;
    for (const Tube& t : f.tubes()) {
        const auto [a, b] = vertical_extent(t);
        zmin = std::min(zmin, a);
        zmax = std::max(zmax, b);
    }
    const int slices = 64;
    std::vector<double> areas(slices);
    parallel_for(slices, [&](std::size_t s) {
        areas[s] = section_area(f, zmin + (s + 0.5) * (zmax - zmin) / slices, h);
    });
    const double K_volume = std::accumulate(areas.begin(), areas.end(), 0.0) * (zmax - zmin) / slices;
    std::map<double, bool> fat;
    auto in_X = [&](double t) {
        auto it = fat.find(t);
        if (it == fat.end()) it = fat.emplace(t, section_area(f, t, h) > 100.0 * K_volume).first;
        return it->second;
    };
    bool chosen = false;
    for (int a = 0; a < o.t0_steps && !chosen; ++a) {
        const double t0 = -0.25 + 0.25 * a / std::max(1, o.t0_steps - 1);
        for (int b = 0; b < o.d0_steps && !chosen; ++b) {
            const double d0 = 1.0 / 16 + (1.0 / 16) * b / std::max(1, o.d0_steps - 1);
            if (in_X(t0) || in_X(t0 + d0) || in_X(t0 + 2 * d0)) continue;
            out.t0 = t0;
            out.d0 = d0;
            chosen = true;
        }
    }
    if (!chosen) return out;

    // Snap the axis crossings at t0 and t2 to Z = 2 c0 Z^(n-1); the grid point must lie in the tube.
    const double pitch = 2.0 * o.grid_constant * delta;
    const double t2 = out.t0 + 2.0 * out.d0;
    std::vector<LatticePoint> A(f.size()), B(f.size());
    std::vector<char> ok(f.size(), 0);
    auto snap = [&](const Tube& T, double t, LatticePoint& g) {
        const auto [zl, zh] = vertical_extent(T);
        if (t < zl || t > zh) return false;
        const Vec p = axis_at_height(T, t);
        g.assign(n - 1, 0);
        Vec x(n);
        x[n - 1] = t;
        for (int k = 0; k < n - 1; ++k) {
            g[k] = std::lround(p[k] / pitch);
            x[k] = g[k] * pitch;
        }
        return T.contains(x);
    };
    std::vector<std::size_t> R;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (snap(f[i], out.t0, A[i]) && snap(f[i], t2, B[i])) R.push_back(i);
    out.assigned = R.size();

    const double N = static_cast<double>(f.size());
    const double need = o.cluster_threshold * std::sqrt(N);
    while (!R.empty() && static_cast<double>(R.size()) >= o.stop_fraction * N) {
        std::vector<LatticePair> G;
        G.reserve(R.size());
        for (std::size_t i : R) G.emplace_back(A[i], B[i]);
        const FiberResult fib = max_difference_fiber(G);
        if (static_cast<double>(fib.M) < need) break;
        std::vector<std::size_t> fiber;
        for (std::size_t i : R) {
            bool same = true;
            for (int k = 0; k < n - 1; ++k) same = same && A[i][k] - B[i][k] == fib.witness[k];
            if (same) fiber.push_back(i);
        }
        // Medoid direction of the fiber, then the delta/2-cap around it.
        std::size_t best = fiber.front(), best_count = 0;
        for (std::size_t i : fiber) {
            std::size_t c = 0;
            for (std::size_t j : fiber) c += angle(f[i].direction(), f[j].direction()) <= 0.5 * delta ? 1 : 0;
            if (c > best_count) {
                best_count = c;
                best = i;
            }
        }
        BushCluster cl;
        cl.e = f[best].direction();
        for (std::size_t i : R)
            if (angle(f[i].direction(), cl.e) <= 0.5 * delta) cl.members.push_back(i);
        std::vector<char> drop(f.size(), 0);
        for (std::size_t i : fiber) drop[i] = 1;
        for (std::size_t i : cl.members) drop[i] = 1;
        std::vector<std::size_t> rest;
        for (std::size_t i : R)
            if (!drop[i]) rest.push_back(i);
        R.swap(rest);
        if (static_cast<double>(cl.members.size()) >= need) out.clusters.push_back(std::move(cl));
    }
    out.remaining = R.size();
    out.extremal = !out.clusters.empty();
    return out;
}

DenseInterval max_dense_interval(std::vector<std::pair<double, double>> runs, double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("rigidity.precondition", "lambda must lie in (0, 1]");
    std::sort(runs.begin(), runs.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& [a, b] : runs) {
        if (!(b > a)) continue;
        if (!merged.empty() && a <= merged.back().second)
            merged.back().second = std::max(merged.back().second, b);
        else
            merged.emplace_back(a, b);
    }
    DenseInterval best;
    std::vector<double> prefix(merged.size() + 1, 0.0);
    for (std::size_t i = 0; i < merged.size(); ++i)
        prefix[i + 1] = prefix[i] + merged[i].second - merged[i].first;
    // An optimal interval starts and ends in runs; gaps may then be added until
    // the density reaches lambda, so m = max mass / lambda over feasible run pairs.
    for (std::size_t i = 0; i < merged.size(); ++i)
        for (std::size_t j = i; j < merged.size(); ++j) {
            const double mass = prefix[j + 1] - prefix[i];
            const double span = merged[j].second - merged[i].first;
            if (mass < lambda * span * (1.0 - 1e-12)) continue;
            if (mass / lambda > best.length) {
                best.length = mass / lambda;
                best.lo = merged[i].first;
                best.hi = merged[j].second;
                best.mass = mass;
            }
        }
    return best;
}

namespace {

// Largest count of intervals [lo_i, hi_i] inside a window of the given length.
std::pair<double, double> best_window(const std::vector<std::pair<double, double>>& iv, double length) {
    std::vector<std::size_t> by_lo(iv.size());
    std::iota(by_lo.begin(), by_lo.end(), 0);
    std::stable_sort(by_lo.begin(), by_lo.end(), [&](std::size_t a, std::size_t b) { return iv[a].first < iv[b].first; });
    std::size_t best = 0;
    double start = iv.empty() ? 0.0 : iv[by_lo[0]].first;
    for (std::size_t s : by_lo) {
        const double w0 = iv[s].first;
        std::size_t c = 0;
        for (const auto& [a, b] : iv) c += (a >= w0 && b <= w0 + length) ? 1 : 0;
        if (c > best) {
            best = c;
            start = w0;
        }
    }
    return {start, start + length};
}

StructureReport failure(StructureReport r, const std::string& reason) {
    r.found = false;
    r.reason = reason;
    return r;
}

}  // namespace

StructureReport detect_structure(const TubeFamily& f, const StructureOptions& o) {
    const int n = f.dim();
    check_rigidity_dimension(n);
    const int m = n - 1;
    const double delta = f.delta();
    StructureReport rep;
    if (f.empty()) return failure(rep, "empty family");
    Vec centroid(n);
    for (const Tube& t : f.tubes()) centroid += t.center();
    centroid = centroid * (1.0 / f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!tube_in_ball(f[i], centroid, 3.0))
            throw Error("rigidity.precondition",
                        "tube " + std::to_string(i) + " leaves the radius-3 ball around the centroid");

    const NormalizedFamily nf = normalize_family(f, o.max_tilt);
    BushOptions bo = o.bush;
    bo.max_tilt = o.max_tilt;
    const BushDirections bush = detect_bush_directions(nf.family, bo);
    rep.clusters = bush.clusters.size();
    if (bush.clusters.empty()) return failure(rep, "no direction cluster: not in extremal regime");

    // Among clusters at least half the richest, the one closest to the mean direction.
    std::size_t richest = 0;
    for (const auto& c : bush.clusters) richest = std::max(richest, c.members.size());
    const BushCluster* pick = nullptr;
    for (const auto& c : bush.clusters) {
        if (2 * c.members.size() < richest) continue;
        if (!pick || vertical_tilt(c.e.vec()) < vertical_tilt(pick->e.vec())) pick = &c;
    }
    Eigen::MatrixXd R = rotation_to_vertical(to_eigen(pick->e.vec())) * nf.rotation;
    Eigen::VectorXd b = rotation_to_vertical(to_eigen(pick->e.vec())) * nf.translation;
    rep.axis = Direction::normalized(from_eigen(nf.rotation.transpose() * to_eigen(pick->e.vec())));

    // E0: 2 delta-neighborhood of the projected cluster axes.
    const double h = 0.25 * delta;
    std::vector<Vec> proj;
    Vec plo(m), phi(m);
    for (int k = 0; k < m; ++k) {
        plo[k] = 1e300;
        phi[k] = -1e300;
    }
    for (std::size_t i : pick->members) {
        const Tube t = transform(f[i], R, b);
        Vec p(m);
        for (int k = 0; k < m; ++k) {
            p[k] = t.center()[k];
            plo[k] = std::min(plo[k], p[k] - 2.0 * delta - h);
            phi[k] = std::max(phi[k], p[k] + 2.0 * delta + h);
        }
        proj.push_back(p);
    }
    const VoxelSet E0 = VoxelSet::from_predicate(m, plo, phi, h, [&](const Vec& x) {
        for (const Vec& p : proj)
            if (distance(p, x) <= 2.0 * delta) return true;
        return false;
    });

    // Found box F as an oriented frame plus half-widths.
    Eigen::MatrixXd frame = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd center(m), half(m);
    if (m == 1) {
        std::vector<std::pair<double, double>> runs;
        for (long i = 0; i < E0.size(0); ++i) {
            if (!E0.at(i)) continue;
            long j = i;
            while (j + 1 < E0.size(0) && E0.at(j + 1)) ++j;
            runs.emplace_back(E0.origin()[0] + i * h, E0.origin()[0] + (j + 1) * h);
            i = j;
        }
        const DenseInterval I = max_dense_interval(runs, o.lambda);
        center[0] = 0.5 * (I.lo + I.hi);
        half[0] = 0.5 * (I.hi - I.lo);
        rep.convexity_index = 1.0;
    } else {
        const ConvexityReport ci = convexity_index(E0, o.convexity_budget, o.seed);
        rep.convexity_index = ci.index;
        if (ci.index < o.convexity_threshold)
            return failure(rep, "projected cluster has convexity index " + std::to_string(ci.index));
        CoreOptions co;
        co.c_min = o.convexity_threshold;
        co.threshold = 0.5;
        co.known_index = ci.index;
        co.seed = o.seed;
        const CoreResult core = find_convex_core(E0, co);
        if (!core.found) return failure(rep, "no convex core in the projected cluster");
        frame = core.box.frame;
        center = core.box.anchor + frame * (0.5 * (core.box.lo + core.box.hi));
        half = 0.5 * (core.box.hi - core.box.lo);
    }

    // Align horizontal axes with the box frame.
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, n);
    Q.topLeftCorner(m, m) = frame.transpose();
    R = Q * R;
    b = Q * b;
    const Eigen::VectorXd c2 = frame.transpose() * center;

    // F2 = (1/lambda0) F + ((lambda0 - 1)/lambda0) F, then widened by delta.
    const Eigen::VectorXd w2 = half * ((2.0 - o.lambda0) / o.lambda0) + Eigen::VectorXd::Constant(m, delta);

    // E' inside F2: per axis, the window holding the most tube shadows, with
    // diameter capped at min(1/2, 1 - 2 k delta - 2 h sqrt(m)).
    const double diam_cap = std::min(0.5, 1.0 - 2.0 * o.discretization_k * delta - 2.0 * h * std::sqrt(m));
    const double side_cap = diam_cap / std::sqrt(static_cast<double>(m));
    std::vector<Tube> placed(f.size());
    std::vector<Vec> flo(f.size()), fhi(f.size());
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < f.size(); ++i) {
        placed[i] = transform(f[i], R, b);
        footprint(placed[i], flo[i], fhi[i]);
        bool inside = true;
        for (int k = 0; k < m; ++k)
            inside = inside && flo[i][k] >= c2[k] - w2[k] && fhi[i][k] <= c2[k] + w2[k];
        if (inside) cand.push_back(i);
    }
    if (cand.empty()) return failure(rep, "no tube shadow fits in the inflated box");
    for (int k = 0; k < m; ++k) {
        std::vector<std::pair<double, double>> iv;
        for (std::size_t i : cand) iv.emplace_back(flo[i][k], fhi[i][k]);
        const auto [wl, wh] = best_window(iv, std::min(side_cap, 2.0 * w2[k]));
        std::vector<std::size_t> keep;
        for (std::size_t i : cand)
            if (flo[i][k] >= wl && fhi[i][k] <= wh) keep.push_back(i);
        cand.swap(keep);
    }
    if (cand.empty()) return failure(rep, "no tube shadow fits a box of diameter " + std::to_string(diam_cap));
    rep.box_lo = Vec(m);
    rep.box_hi = Vec(m);
    for (int k = 0; k < m; ++k) {
        rep.box_lo[k] = 1e300;
        rep.box_hi[k] = -1e300;
        for (std::size_t i : cand) {
            rep.box_lo[k] = std::min(rep.box_lo[k], flo[i][k]);
            rep.box_hi[k] = std::max(rep.box_hi[k], fhi[i][k]);
        }
    }

    // E: k delta-neighborhood of E', voxelized with cell delta/4.
    const double kd = o.discretization_k * delta;
    Vec glo(m), ghi(m);
    for (int k = 0; k < m; ++k) {
        glo[k] = rep.box_lo[k] - kd - h;
        ghi[k] = rep.box_hi[k] + kd + h;
    }
    rep.E = VoxelSet::from_predicate(m, glo, ghi, h, [&](const Vec& x) {
        double d2 = 0.0;
        for (int k = 0; k < m; ++k) {
            const double d = std::max({rep.box_lo[k] - x[k], 0.0, x[k] - rep.box_hi[k]});
            d2 += d * d;
        }
        return d2 <= kd * kd;
    });

    // Vertical offset z0 maximizing the tubes with extent inside [z0, z0 + 2].
    std::vector<std::pair<double, int>> events;
    for (std::size_t i : cand) {
        const auto [zl, zh] = vertical_extent(placed[i]);
        if (zh - 2.0 > zl) continue;
        events.emplace_back(zh - 2.0, +1);
        events.emplace_back(zl, -1);
    }
    std::sort(events.begin(), events.end(),
              [](const auto& a, const auto& b2) { return a.first < b2.first || (a.first == b2.first && a.second > b2.second); });
    int run = 0, best_run = -1;
    double z0 = 0.0;
    for (const auto& [z, d] : events) {
        run += d;
        if (run > best_run) {
            best_run = run;
            z0 = z;
        }
    }
    b[n - 1] -= z0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const Tube t = transform(f[i], R, b);
        if (tube_inside_prism(t, rep.E, 2.0)) rep.captured.push_back(i);
    }
    rep.rotation = R;
    rep.translation = b;
    rep.capture_fraction = static_cast<double>(rep.captured.size()) / f.size();
    rep.volume_ratio = rep.E.volume() / (std::sqrt(static_cast<double>(f.size())) * std::pow(delta, n - 1));
    rep.diameter = voxel_diameter(rep.E);
    rep.found = !rep.captured.empty();
    if (!rep.found) rep.reason = "no tube inside the placed prism";
    return rep;
}

nlohmann::json certificate_to_json(const GoodConfigCertificate& c) {
    nlohmann::json j;
    j["O"] = vec_json(c.O);
    j["epsilon0"] = c.epsilon0;
    j["lambda0"] = c.lambda0;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : c.groups) j["groups"].push_back({{"center", vec_json(g.center.vec())}, {"members", g.members}});
    return j;
}

GoodConfigCertificate certificate_from_json(const nlohmann::json& j) {
    GoodConfigCertificate c;
    try {
        c.O = vec_from(j.at("O"), "O");
        c.epsilon0 = j.at("epsilon0").get<double>();
        c.lambda0 = j.at("lambda0").get<double>();
        for (const auto& g : j.at("groups"))
            c.groups.push_back({Direction::normalized(vec_from(g.at("center"), "center")),
                                g.at("members").get<std::vector<std::size_t>>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error("io.schema", std::string("certificate: ") + e.what());
    }
    return c;
}

nlohmann::json bush_to_json(const BushDirections& r) {
    nlohmann::json j;
    j["t0"] = r.t0;
    j["d0"] = r.d0;
    j["assigned"] = r.assigned;
    j["remaining"] = r.remaining;
    j["extremal"] = r.extremal;
    if (!r.extremal) j["status"] = "not in extremal regime";
    j["clusters"] = nlohmann::json::array();
    for (const auto& c : r.clusters) j["clusters"].push_back({{"direction", vec_json(c.e.vec())}, {"members", c.members}});
    return j;
}

nlohmann::json structure_to_json(const StructureReport& r) {
    nlohmann::json j;
    j["found"] = r.found;
    if (!r.reason.empty()) j["reason"] = r.reason;
    j["clusters"] = r.clusters;
    if (!r.found && r.E.dim() == 0) return j;
    j["axis"] = vec_json(r.axis.vec());
    j["box"] = {{"lo", vec_json(r.box_lo)}, {"hi", vec_json(r.box_hi)}};
    j["E"] = {{"cell", r.E.cell()}, {"origin", vec_json(r.E.origin())}, {"dims", r.E.dims()},
              {"cells_set", r.E.count()}, {"volume", r.E.volume()}, {"discretization", "9delta-neighborhood of box"}};
    nlohmann::json rot = nlohmann::json::array();
    for (int i = 0; i < r.rotation.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < r.rotation.cols(); ++k) row.push_back(r.rotation(i, k));
        rot.push_back(row);
    }
    j["placement"] = {{"rotation", rot}, {"translation", std::vector<double>(r.translation.data(), r.translation.data() + r.translation.size())},
                      {"prism_height", 2.0}};
    j["captured"] = r.captured;
    j["capture_fraction"] = r.capture_fraction;
    j["volume_ratio"] = r.volume_ratio;
    j["diameter"] = r.diameter;
    j["convexity_index"] = r.convexity_index;
    return j;
}

}  // namespace tubekit
