#include "tubekit/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace tubekit {

VoxelSet::VoxelSet(int m, std::array<long, 3> dims, double h, const Vec& origin)
    : m_(m), dims_(dims), h_(h), origin_(origin) {
    if (m < 1 || m > 3) throw Error("xray.unsupported_dimension", "voxel sets support m = 1, 2, 3");
    if (origin.dim() != m) throw Error("geometry.dimension", "origin dimension differs from m");
    if (!(h > 0.0)) throw Error("geometry.cell", "cell size must be positive");
    for (int k = 0; k < 3; ++k) {
        if (k >= m) dims_[k] = 1;
        if (dims_[k] < 1) throw Error("geometry.dimension", "voxel dimensions must be positive");
    }
    mask_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]), 0);
}

VoxelSet VoxelSet::from_predicate(int m, const Vec& lo, const Vec& hi, double h,
                                  const std::function<bool(const Vec&)>& inside) {
    std::array<long, 3> dims{1, 1, 1};
    for (int k = 0; k < m; ++k) dims[k] = std::max(1L, static_cast<long>(std::ceil((hi[k] - lo[k]) / h - 1e-9)));
    VoxelSet v(m, dims, h, lo);
    for (std::size_t c = 0; c < v.mask_.size(); ++c) v.mask_[c] = inside(v.cell_center(c)) ? 1 : 0;
    return v;
}

std::array<long, 3> VoxelSet::unflat(std::size_t c) const {
    const long i = static_cast<long>(c % dims_[0]);
    const long rest = static_cast<long>(c / dims_[0]);
    return {i, rest % dims_[1], rest / dims_[1]};
}

std::size_t VoxelSet::count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1));
}

double VoxelSet::volume() const { return static_cast<double>(count()) * std::pow(h_, m_); }

Vec VoxelSet::cell_center(std::size_t c) const {
    const auto idx = unflat(c);
    Vec x(m_);
    for (int k = 0; k < m_; ++k) x[k] = origin_[k] + (idx[k] + 0.5) * h_;
    return x;
}

long VoxelSet::locate(const Vec& x) const {
    std::array<long, 3> idx{0, 0, 0};
    for (int k = 0; k < m_; ++k) {
        const double u = (x[k] - origin_[k]) / h_;
        if (!(u >= 0.0)) return -1;
        idx[k] = static_cast<long>(u);
        if (idx[k] >= dims_[k]) return -1;
    }
    return static_cast<long>(flat(idx[0], idx[1], idx[2]));
}

bool VoxelSet::contains(const Vec& x) const {
    const long c = locate(x);
    return c >= 0 && mask_[c] != 0;
}

bool VoxelSet::tight_bounds(std::array<long, 3>& lo, std::array<long, 3>& hi) const {
    lo = {dims_[0], dims_[1], dims_[2]};
    hi = {0, 0, 0};
    bool any = false;
    for (std::size_t c = 0; c < mask_.size(); ++c) {
        if (!mask_[c]) continue;
        any = true;
        const auto idx = unflat(c);
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], idx[k]);
            hi[k] = std::max(hi[k], idx[k] + 1);
        }
    }
    return any;
}

bool VoxelSet::tight_box(Vec& lo, Vec& hi) const {
    std::array<long, 3> a, b;
    if (!tight_bounds(a, b)) return false;
    lo = Vec(m_);
    hi = Vec(m_);
    for (int k = 0; k < m_; ++k) {
        lo[k] = origin_[k] + a[k] * h_;
        hi[k] = origin_[k] + b[k] * h_;
    }
    return true;
}

VoxelSet VoxelSet::padded(long pad) const {
    std::array<long, 3> dims = dims_;
    Vec origin = origin_;
    for (int k = 0; k < m_; ++k) {
        dims[k] += 2 * pad;
        origin[k] -= pad * h_;
    }
    VoxelSet out(m_, dims, h_, origin);
    for (std::size_t c = 0; c < mask_.size(); ++c) {
        if (!mask_[c]) continue;
        auto idx = unflat(c);
        for (int k = 0; k < m_; ++k) idx[k] += pad;
        out.set(idx[0], idx[1], idx[2], true);
    }
    return out;
}

bool VoxelSet::operator==(const VoxelSet& o) const {
    return m_ == o.m_ && dims_ == o.dims_ && h_ == o.h_ && origin_ == o.origin_ && mask_ == o.mask_;
}

namespace {

// 1D squared distance transform of sampled function f (Felzenszwalb-Huttenlocher).
// Missing samples carry a large finite value instead of infinity.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<long>& v, std::vector<double>& z) {
    const long n = static_cast<long>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    long k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (long q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const long p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            if (s > z[k] || k == 0) break;
            --k;
        }
        if (s <= z[k]) {
            v[k] = q;
            z[k + 1] = inf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (long q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = static_cast<double>(q - v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> distance_to(const VoxelSet& v, bool target, bool outside_is_target) {
    // Work on a grid padded by one cell so the outside can act as a target.
    const long pad = outside_is_target ? 1 : 0;
    const VoxelSet w = pad ? v.padded(pad) : v;
    constexpr double far = 1e30;
    std::vector<double> g(w.cell_total());
    for (std::size_t c = 0; c < g.size(); ++c) {
        bool is_target = w.at_flat(c) == target;
        if (pad) {
            const auto idx = w.unflat(c);
            for (int k = 0; k < w.dim(); ++k)
                if (idx[k] == 0 || idx[k] == w.size(k) - 1) is_target = true;
        }
        g[c] = is_target ? 0.0 : far;
    }
    for (int axis = 0; axis < w.dim(); ++axis) {
        const long len = w.size(axis);
        std::vector<double> f(len), d(len), z(len + 1);
        std::vector<long> vv(len);
        const auto& dims = w.dims();
        const long stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
        const std::size_t lines = w.cell_total() / len;
        for (std::size_t line = 0; line < lines; ++line) {
            // Base index of the line: enumerate all cells with idx[axis] == 0.
            std::size_t base;
            if (axis == 0) base = line * dims[0];
            else if (axis == 1) base = (line / dims[0]) * dims[0] * dims[1] + line % dims[0];
            else base = line;
            for (long q = 0; q < len; ++q) f[q] = g[base + q * stride];
            edt_1d(f, d, vv, z);
            for (long q = 0; q < len; ++q) g[base + q * stride] = d[q];
        }
    }
    std::vector<double> out(v.cell_total());
    for (std::size_t c = 0; c < out.size(); ++c) {
        auto idx = v.unflat(c);
        for (int k = 0; k < v.dim(); ++k) idx[k] += pad;
        const double sq = g[w.flat(idx[0], idx[1], idx[2])];
        out[c] = sq >= 0.5 * far ? std::numeric_limits<double>::infinity() : std::sqrt(sq) * v.cell();
    }
    return out;
}

VoxelSet erode(const VoxelSet& v, double r) {
    const std::vector<double> dist = distance_to(v, false, true);
    VoxelSet out = v;
    for (std::size_t c = 0; c < dist.size(); ++c)
        out.set_flat(c, v.at_flat(c) && dist[c] - 0.5 * v.cell() >= r);
    return out;
}

VoxelSet dilate(const VoxelSet& v, double r) {
    const std::vector<double> dist = distance_to(v, true, false);
    VoxelSet out = v;
    for (std::size_t c = 0; c < dist.size(); ++c) out.set_flat(c, dist[c] <= r);
    return out;
}

namespace {

[[noreturn]] void violation(const std::string& where, const std::string& what) {
    throw Error("schema.violation", where + ": " + what);
}

}  // namespace

VoxelSet parse_vox(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) violation("line 1", "missing VOX1 header");
    std::istringstream hs(header);
    std::string magic;
    int m = 0;
    hs >> magic >> m;
    if (magic != "VOX1") violation("line 1", "expected magic VOX1");
    if (!hs || m < 1 || m > 3) violation("line 1", "dimension m must be 1, 2 or 3");
    std::array<long, 3> dims{1, 1, 1};
    for (int k = 0; k < m; ++k) {
        if (!(hs >> dims[k]) || dims[k] < 1) violation("line 1", "dimension d" + std::to_string(k + 1) + " must be a positive integer");
    }
    double h = 0.0;
    if (!(hs >> h) || !(h > 0.0)) violation("line 1", "cell size h must be positive");
    Vec origin(m);
    for (int k = 0; k < m; ++k)
        if (!(hs >> origin[k])) violation("line 1", "missing origin coordinate " + std::to_string(k + 1));
    std::string extra;
    if (hs >> extra) violation("line 1", "unexpected trailing token '" + extra + "'");

    VoxelSet v(m, dims, h, origin);
    const long rows = dims[1] * dims[2];
    long row = 0;
    long line_no = 1;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row >= rows) violation("line " + std::to_string(line_no), "more rows than declared (" + std::to_string(rows) + ")");
        if (static_cast<long>(line.size()) != dims[0])
            violation("row " + std::to_string(row + 1) + " (line " + std::to_string(line_no) + ")",
                      "expected " + std::to_string(dims[0]) + " characters, found " + std::to_string(line.size()));
        const long j = row % dims[1], k = row / dims[1];
        for (long i = 0; i < dims[0]; ++i) {
            const char ch = line[i];
            if (ch != '0' && ch != '1')
                violation("row " + std::to_string(row + 1) + " (line " + std::to_string(line_no) + ")",
                          "invalid character at column " + std::to_string(i + 1));
            v.set(i, j, k, ch == '1');
        }
        ++row;
    }
    if (row != rows) violation("row " + std::to_string(row + 1), "expected " + std::to_string(rows) + " rows, found " + std::to_string(row));
    return v;
}

std::string format_vox(const VoxelSet& v) {
    std::ostringstream out;
    out.precision(17);
    out << "VOX1 " << v.dim();
    for (int k = 0; k < v.dim(); ++k) out << ' ' << v.size(k);
    out << ' ' << v.cell();
    for (int k = 0; k < v.dim(); ++k) out << ' ' << v.origin()[k];
    out << '\n';
    std::string row(static_cast<std::size_t>(v.size(0)), '0');
    for (long k = 0; k < v.dims()[2]; ++k) {
        if (k > 0) out << '\n';
        for (long j = 0; j < v.dims()[1]; ++j) {
            for (long i = 0; i < v.size(0); ++i) row[i] = v.at(i, j, k) ? '1' : '0';
            out << row << '\n';
        }
    }
    return out.str();
}

VoxelSet load_vox(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error("io.not_found", "no such file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("io.unreadable", "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_vox(buf.str());
}

void save_vox(const VoxelSet& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("io.unwritable", "cannot write " + path);
    out << format_vox(v);
}

}  // namespace tubekit
