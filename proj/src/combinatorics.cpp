#include "tubekit/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace tubekit {

using Bits = boost::dynamic_bitset<>;

double AssignmentInstance::universe_weight() const {
    return std::accumulate(universe_weights.begin(), universe_weights.end(), 0.0);
}

double AssignmentInstance::s_mass() const { return std::accumulate(s_weights.begin(), s_weights.end(), 0.0); }

double AssignmentInstance::weight(const Bits& subset) const {
    double w = 0.0;
    for (auto i = subset.find_first(); i != Bits::npos; i = subset.find_next(i)) w += universe_weights[i];
    return w;
}

void AssignmentInstance::validate() const {
    if (n < 1 || n > kMaxDim) throw Error("combinatorics.precondition", "n must lie in [1, 8]");
    if (!(c > 0.0 && c < 1.0)) throw Error("combinatorics.precondition", "c must lie in (0, 1)");
    if (points.empty()) throw Error("combinatorics.precondition", "S is empty");
    if (points.size() != s_weights.size() || points.size() != assignment.size())
        throw Error("combinatorics.precondition", "points, s_weights and assignment must have equal length");
    if (universe_weights.empty()) throw Error("combinatorics.precondition", "the ground set is empty");
    for (double w : universe_weights)
        if (!(w > 0.0)) throw Error("combinatorics.precondition", "ground set weights must be positive");
    const double total = universe_weight();
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].dim() != n)
            throw Error("combinatorics.precondition", "point " + std::to_string(i) + " has the wrong dimension");
        if (!(s_weights[i] > 0.0))
            throw Error("combinatorics.precondition", "cell weight " + std::to_string(i) + " must be positive");
        if (assignment[i].size() != universe_weights.size())
            throw Error("combinatorics.precondition", "E_x " + std::to_string(i) + " has the wrong ground set size");
        const double w = weight(assignment[i]);
        if (w < c * total * (1.0 - 1e-12))
            throw Error("combinatorics.precondition", "weight(E_x) = " + std::to_string(w) + " < c weight(E) for x = " +
                                                          std::to_string(i));
    }
}

double distance_to_span(const std::vector<Vec>& span, const Vec& y) {
    Vec r = y - span.front();
    std::vector<Vec> basis;
    for (std::size_t j = 1; j < span.size(); ++j) {
        Vec b = span[j] - span.front();
        for (const Vec& q : basis) b -= q * dot(b, q);
        const double len = norm(b);
        if (len > 1e-14) basis.push_back(b * (1.0 / len));
    }
    for (const Vec& q : basis) r -= q * dot(r, q);
    return norm(r);
}

double simplex_volume(const std::vector<Vec>& v) {
    const int n = static_cast<int>(v.size()) - 1;
    if (n < 1) return 0.0;
    // Gaussian elimination with partial pivoting on the edge matrix.
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[i][j] = v[i + 1][j] - v[0][j];
    double det = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (a[piv][col] == 0.0) return 0.0;
        std::swap(a[piv], a[col]);
        det *= a[col][col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int j = col; j < n; ++j) a[r][j] -= f * a[col][j];
        }
    }
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    return std::abs(det) / fact;
}

namespace {

// Product of the per-coordinate bounds K_1..K_n on the multi-index.
double step_bound(int n, double c) {
    double prod = 1.0, q = 1.0;
    const double two_n = std::pow(2.0, n);
    for (int k = 0; k < n; ++k) {
        const double K = 1.0 + two_n * (k == 0 ? 1.0 : q * q) / c;
        prod *= std::floor(K);
        q = (k == 0 ? 1.0 : q * q) + K;
    }
    return prod;
}

}  // namespace

SimplexResult select_simplex(const AssignmentInstance& inst) {
    inst.validate();
    const int n = inst.n;
    const double total = inst.universe_weight();
    const std::size_t U = inst.universe_weights.size();
    SimplexResult out;
    out.step_bound = step_bound(n, inst.c);

    std::vector<int> I(n, 1);
    Bits EI(U);
    EI.set();
    std::vector<std::size_t> S(inst.points.size());
    std::iota(S.begin(), S.end(), 0);
    double cI = inst.c;

    auto mass = [&](const std::vector<std::size_t>& idx) {
        double m = 0.0;
        for (std::size_t i : idx) m += inst.s_weights[i];
        return m;
    };

    for (;;) {
        ++out.steps;
        if (static_cast<double>(out.steps) > out.step_bound)
            throw Error("combinatorics.internal", "step count exceeded the bound K(c, n)");
        out.final_index = I;
        if (S.empty()) {
            out.complete = false;
            break;
        }
        // x0: the cell whose current E_x is heaviest, lowest index on ties.
        std::size_t x0 = S.front();
        double best = -1.0;
        for (std::size_t i : S) {
            const double w = inst.weight(inst.assignment[i] & EI);
            if (w > best) {
                best = w;
                x0 = i;
            }
        }
        std::vector<std::size_t> chosen{x0};
        std::vector<Vec> span{inst.points[x0]};
        Bits inter = inst.assignment[x0] & EI;
        std::vector<std::size_t> current = S;
        std::vector<double> radii;
        double Q = 1.0, threshold = 0.0;
        bool failed = false;
        for (int k = 0; k < n; ++k) {
            std::vector<std::pair<double, std::size_t>> by_distance;
            for (std::size_t i : current) by_distance.emplace_back(distance_to_span(span, inst.points[i]), i);
            std::sort(by_distance.begin(), by_distance.end());
            // Weighted median of the distances; ties go to the smaller radius.
            const double target = 0.5 * mass(current);
            double acc = 0.0, r = 0.0;
            for (const auto& [d, i] : by_distance) {
                acc += inst.s_weights[i];
                r = d;
                if (acc >= target * (1.0 - 1e-12)) break;
            }
            std::vector<std::size_t> inside, outside;
            for (const auto& [d, i] : by_distance) (d <= r ? inside : outside).push_back(i);
            const double Qnext = Q * Q + I[k];
            const double thr = cI * total / (Qnext * Qnext);
            // Farthest qualifying candidate, lowest index on ties.
            std::size_t pick = 0;
            double pick_distance = -1.0;
            Bits pick_inter;
            for (const auto& [d, i] : by_distance) {
                if (d <= r) continue;
                Bits next = inter & inst.assignment[i] & EI;
                if (inst.weight(next) >= thr && d > pick_distance) {
                    pick = i;
                    pick_distance = d;
                    pick_inter = std::move(next);
                }
            }
            if (pick_distance < 0.0) {
                I[k] += 1;
                for (int j = k + 1; j < n; ++j) I[j] = 1;
                EI &= ~inter;
                std::sort(outside.begin(), outside.end());
                S = std::move(outside);
                cI *= 1.0 - 1.0 / (Qnext * Qnext);
                failed = true;
                break;
            }
            chosen.push_back(pick);
            span.push_back(inst.points[pick]);
            inter = std::move(pick_inter);
            std::sort(inside.begin(), inside.end());
            current = std::move(inside);
            radii.push_back(r);
            Q = Qnext;
            threshold = thr;
        }
        out.indices = chosen;
        out.points = span;
        out.radii = radii;
        out.weight_threshold = threshold;
        if (!failed) {
            out.complete = true;
            break;
        }
    }
    if (!out.indices.empty()) {
        Bits common = inst.assignment[out.indices.front()];
        for (std::size_t i : out.indices) common &= inst.assignment[i];
        out.common_weight = inst.weight(common);
    }
    out.simplex_volume = out.complete ? simplex_volume(out.points) : 0.0;
    out.c_prime = out.common_weight / total;
    out.lambda = out.simplex_volume / inst.s_mass();
    return out;
}

SimplexVerification verify_simplex(const AssignmentInstance& inst, const SimplexResult& r) {
    SimplexVerification v;
    const int n = inst.n;
    if (!r.complete || static_cast<int>(r.indices.size()) != n + 1) {
        v.message = "selection incomplete";
        return v;
    }
    Bits common(inst.universe_weights.size());
    common.set();
    std::vector<Vec> pts;
    for (std::size_t i : r.indices) {
        if (i >= inst.points.size()) {
            v.message = "index out of range";
            return v;
        }
        common &= inst.assignment[i];
        pts.push_back(inst.points[i]);
    }
    v.common_weight = inst.weight(common);
    v.weight_condition = v.common_weight > 0.0 && v.common_weight >= r.weight_threshold * (1.0 - 1e-12);
    v.simplex_volume = simplex_volume(pts);
    bool far = static_cast<int>(r.radii.size()) == n;
    double product = 1.0;
    for (int k = 1; far && k <= n; ++k) {
        const double d = distance_to_span({pts.begin(), pts.begin() + k}, pts[k]);
        far = d > r.radii[k - 1] * (1.0 - 1e-12) || (r.radii[k - 1] == 0.0 && d > 0.0);
        product *= d;
    }
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    const bool consistent = std::abs(product / fact - v.simplex_volume) <= 1e-9 * std::max(1.0, v.simplex_volume);
    v.volume_condition = far && consistent && v.simplex_volume > 0.0;
    v.ok = v.weight_condition && v.volume_condition;
    if (!v.weight_condition) v.message = "common weight below the step threshold";
    else if (!v.volume_condition) v.message = "vertex closer to the previous plane than its radius";
    return v;
}

AssignmentInstance random_assignment_instance(int n, int side, int universe, double keep, double c,
                                              std::uint64_t seed) {
    AssignmentInstance inst;
    inst.n = n;
    inst.c = c;
    Rng rng(seed);
    long cells = 1;
    for (int k = 0; k < n; ++k) cells *= side;
    for (long flat = 0; flat < cells; ++flat) {
        Vec p(n);
        long rest = flat;
        for (int k = 0; k < n; ++k) {
            p[k] = (static_cast<double>(rest % side) + 0.5) / side;
            rest /= side;
        }
        inst.points.push_back(p);
        inst.s_weights.push_back(1.0 / static_cast<double>(cells));
    }
    inst.universe_weights.assign(universe, 1.0 / universe);
    const int take = static_cast<int>(std::lround(keep * universe));
    std::vector<int> order(universe);
    for (long flat = 0; flat < cells; ++flat) {
        std::iota(order.begin(), order.end(), 0);
        for (int i = universe - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        Bits b(universe);
        for (int i = 0; i < take; ++i) b.set(order[i]);
        inst.assignment.push_back(b);
    }
    return inst;
}

nlohmann::json assignment_to_json(const AssignmentInstance& inst) {
    nlohmann::json j;
    j["n"] = inst.n;
    j["c"] = inst.c;
    j["points"] = nlohmann::json::array();
    for (const Vec& p : inst.points) j["points"].push_back(p.to_vector());
    j["s_weights"] = inst.s_weights;
    j["universe_weights"] = inst.universe_weights;
    j["assignment"] = nlohmann::json::array();
    for (const Bits& b : inst.assignment) {
        std::vector<std::size_t> idx;
        for (auto i = b.find_first(); i != Bits::npos; i = b.find_next(i)) idx.push_back(i);
        j["assignment"].push_back(idx);
    }
    return j;
}

namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
    if (!j.is_object()) throw Error("schema.violation", "instance: expected an object");
    if (!j.contains(key)) throw Error("schema.violation", std::string("missing field '") + key + "'");
    return j.at(key);
}

std::vector<double> numbers(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw Error("schema.violation", where + ": expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error("schema.violation", where + "[" + std::to_string(i) + "]: expected a number");
        out.push_back(j[i].get<double>());
    }
    return out;
}

LatticePoint lattice_point(const nlohmann::json& j, int rank, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != rank)
        throw Error("schema.violation", where + ": expected " + std::to_string(rank) + " integers");
    LatticePoint p;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer())
            throw Error("schema.violation", where + "[" + std::to_string(i) + "]: expected an integer");
        p.push_back(j[i].get<long>());
    }
    return p;
}

LatticePoint add(const LatticePoint& a, const LatticePoint& b, long sign) {
    LatticePoint r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + sign * b[i];
    return r;
}

long norm2(const LatticePoint& p) {
    long s = 0;
    for (long v : p) s += v * v;
    return s;
}

}  // namespace

AssignmentInstance assignment_from_json(const nlohmann::json& j) {
    AssignmentInstance inst;
    const auto& n = field(j, "n");
    if (!n.is_number_integer()) throw Error("schema.violation", "n: expected an integer");
    inst.n = n.get<int>();
    const auto& c = field(j, "c");
    if (!c.is_number()) throw Error("schema.violation", "c: expected a number");
    inst.c = c.get<double>();
    const auto& pts = field(j, "points");
    if (!pts.is_array()) throw Error("schema.violation", "points: expected an array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto v = numbers(pts[i], "points[" + std::to_string(i) + "]");
        if (static_cast<int>(v.size()) != inst.n)
            throw Error("schema.violation",
                        "points[" + std::to_string(i) + "]: expected " + std::to_string(inst.n) + " components");
        inst.points.push_back(Vec::from(v));
    }
    if (j.contains("s_weights")) {
        inst.s_weights = numbers(j.at("s_weights"), "s_weights");
    } else {
        inst.s_weights.assign(inst.points.size(), 1.0 / std::max<std::size_t>(1, inst.points.size()));
    }
    inst.universe_weights = numbers(field(j, "universe_weights"), "universe_weights");
    const auto& as = field(j, "assignment");
    if (!as.is_array()) throw Error("schema.violation", "assignment: expected an array");
    for (std::size_t i = 0; i < as.size(); ++i) {
        const std::string where = "assignment[" + std::to_string(i) + "]";
        Bits b(inst.universe_weights.size());
        for (double v : numbers(as[i], where)) {
            if (v < 0 || v >= static_cast<double>(b.size()) || v != std::floor(v))
                throw Error("schema.violation", where + ": element " + std::to_string(v) + " outside the ground set");
            b.set(static_cast<std::size_t>(v));
        }
        inst.assignment.push_back(b);
    }
    return inst;
}

nlohmann::json simplex_to_json(const SimplexResult& r) {
    nlohmann::json j;
    j["complete"] = r.complete;
    j["indices"] = r.indices;
    j["points"] = nlohmann::json::array();
    for (const Vec& p : r.points) j["points"].push_back(p.to_vector());
    j["common_weight"] = r.common_weight;
    j["simplex_volume"] = r.simplex_volume;
    j["c_prime"] = r.c_prime;
    j["lambda"] = r.lambda;
    j["steps"] = r.steps;
    j["step_bound"] = r.step_bound;
    j["final_index"] = r.final_index;
    j["radii"] = r.radii;
    j["weight_threshold"] = r.weight_threshold;
    return j;
}

FiberResult max_difference_fiber(const std::vector<LatticePair>& G) {
    std::map<LatticePoint, std::size_t> fibers;
    std::set<LatticePair> seen;
    for (const LatticePair& g : G)
        if (seen.insert(g).second) ++fibers[add(g.first, g.second, -1)];
    FiberResult out;
    out.distinct_differences = fibers.size();
    for (const auto& [d, count] : fibers) {
        const bool better = count > out.M || (count == out.M && norm2(d) < norm2(out.witness));
        if (better) {
            out.M = count;
            out.witness = d;
        }
    }
    return out;
}

SumsetCheck sumset_bound_check(const SumsetInstance& inst) {
    const std::set<LatticePoint> A(inst.A.begin(), inst.A.end()), B(inst.B.begin(), inst.B.end());
    std::set<LatticePair> G;
    std::set<LatticePoint> C;
    for (std::size_t i = 0; i < inst.G.size(); ++i) {
        const LatticePair& g = inst.G[i];
        if (!A.count(g.first) || !B.count(g.second))
            throw Error("combinatorics.precondition", "G[" + std::to_string(i) + "] is not in A x B");
        G.insert(g);
        C.insert(add(g.first, g.second, 1));
    }
    SumsetCheck out;
    out.G = G.size();
    out.A = A.size();
    out.B = B.size();
    out.C = C.size();
    out.N0 = std::max({out.A, out.B, out.C});
    const FiberResult fiber = max_difference_fiber(inst.G);
    out.M = fiber.M;
    out.witness = fiber.witness;
    out.rhs = std::pow(static_cast<double>(out.M), 1.0 / 6.0) * std::pow(static_cast<double>(out.N0), 11.0 / 6.0);
    out.holds = static_cast<double>(out.G) <= out.rhs * (1.0 + 1e-12);
    return out;
}

SumsetInstance random_sumset_instance(int rank, int max_size, long radius, std::uint64_t seed) {
    Rng rng(seed);
    SumsetInstance inst;
    inst.rank = rank;
    const long side = 2 * radius + 1;
    long capacity = 1;
    for (int k = 0; k < rank; ++k) capacity *= side;
    auto draw = [&](std::vector<LatticePoint>& out) {
        const long want = std::min<long>(capacity, 1 + static_cast<long>(rng.below(max_size)));
        std::set<LatticePoint> s;
        while (static_cast<long>(s.size()) < want) {
            LatticePoint p(rank);
            for (int k = 0; k < rank; ++k) p[k] = static_cast<long>(rng.below(side)) - radius;
            s.insert(p);
        }
        out.assign(s.begin(), s.end());
    };
    draw(inst.A);
    draw(inst.B);
    const double density = rng.uniform(0.05, 1.0);
    for (const auto& a : inst.A)
        for (const auto& b : inst.B)
            if (rng.uniform() < density) inst.G.emplace_back(a, b);
    return inst;
}

nlohmann::json sumset_to_json(const SumsetInstance& inst) {
    nlohmann::json j;
    j["rank"] = inst.rank;
    j["A"] = inst.A;
    j["B"] = inst.B;
    j["G"] = nlohmann::json::array();
    for (const auto& [a, b] : inst.G) j["G"].push_back({a, b});
    return j;
}

SumsetInstance sumset_from_json(const nlohmann::json& j) {
    SumsetInstance inst;
    const auto& rank = field(j, "rank");
    if (!rank.is_number_integer() || rank.get<int>() < 1) throw Error("schema.violation", "rank: expected a positive integer");
    inst.rank = rank.get<int>();
    const auto& G = field(j, "G");
    if (!G.is_array()) throw Error("schema.violation", "G: expected an array");
    for (std::size_t i = 0; i < G.size(); ++i) {
        const std::string where = "G[" + std::to_string(i) + "]";
        if (!G[i].is_array() || G[i].size() != 2) throw Error("schema.violation", where + ": expected a pair");
        inst.G.emplace_back(lattice_point(G[i][0], inst.rank, where + "[0]"),
                            lattice_point(G[i][1], inst.rank, where + "[1]"));
    }
    auto points = [&](const char* key, bool first) {
        std::vector<LatticePoint> out;
        if (j.contains(key)) {
            const auto& arr = j.at(key);
            if (!arr.is_array()) throw Error("schema.violation", std::string(key) + ": expected an array");
            for (std::size_t i = 0; i < arr.size(); ++i)
                out.push_back(lattice_point(arr[i], inst.rank, std::string(key) + "[" + std::to_string(i) + "]"));
        } else {
            std::set<LatticePoint> s;
            for (const auto& g : inst.G) s.insert(first ? g.first : g.second);
            out.assign(s.begin(), s.end());
        }
        return out;
    };
    inst.A = points("A", true);
    inst.B = points("B", false);
    return inst;
}

nlohmann::json sumset_check_to_json(const SumsetCheck& c) {
    return {{"G", c.G}, {"A", c.A}, {"B", c.B}, {"C", c.C}, {"N0", c.N0}, {"M", c.M},
            {"witness", c.witness}, {"rhs", c.rhs}, {"holds", c.holds}};
}

}  // namespace tubekit
