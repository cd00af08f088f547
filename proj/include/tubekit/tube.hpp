#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tubekit/common.hpp"

namespace tubekit {

//! Unit vector modulo sign; the stored representative has its first nonzero
//! component positive.
class Direction {
public:
    Direction() = default;
    //! Requires |v| = 1 within 1e-9; throws otherwise.
    explicit Direction(const Vec& v);
    //! Normalizes v first; rejects the zero vector.
    static Direction normalized(const Vec& v);

    int dim() const { return v_.dim(); }
    const Vec& vec() const { return v_; }
    double operator[](int i) const { return v_[i]; }
    bool operator==(const Direction& o) const { return v_ == o.v_; }

private:
    Vec v_;
};

//! Solid cylinder: axial half-length height/2 and radius delta/2 around the
//! axis through center along direction. Caps are flat.
class Tube {
public:
    Tube() = default;
    Tube(const Vec& center, const Direction& direction, double delta, double height = 1.0);

    int dim() const { return center_.dim(); }
    const Vec& center() const { return center_; }
    const Direction& direction() const { return direction_; }
    const Vec& axis() const { return direction_.vec(); }
    double delta() const { return delta_; }
    double radius() const { return 0.5 * delta_; }
    double height() const { return height_; }

    bool contains(const Vec& x) const;
    //! Axis endpoints center -/+ (height/2) * direction.
    std::pair<Vec, Vec> endpoints() const;
    Tube translated(const Vec& v) const;

private:
    Vec center_;
    Direction direction_;
    double delta_ = 0.0;
    double height_ = 1.0;
};

//! Tubes sharing dimension and delta.
class TubeFamily {
public:
    TubeFamily() = default;
    TubeFamily(int n, double delta, double c0 = 0.5);

    int dim() const { return n_; }
    double delta() const { return delta_; }
    double c0() const { return c0_; }
    void set_c0(double c0);
    std::size_t size() const { return tubes_.size(); }
    bool empty() const { return tubes_.empty(); }
    const Tube& operator[](std::size_t i) const { return tubes_[i]; }
    const std::vector<Tube>& tubes() const { return tubes_; }
    void add(const Tube& t);
    TubeFamily subset(const std::vector<std::size_t>& indices) const;

private:
    int n_ = 0;
    double delta_ = 0.0;
    double c0_ = 0.5;
    std::vector<Tube> tubes_;
};

//! Rejects delta outside (0, 1/100), the regime the asymptotic statements assume.
void check_paper_regime(double delta);

double angle(const Direction& e1, const Direction& e2);
double tube_volume(const Tube& t);

struct IntersectionVolume {
    double value = 0.0;
    double abs_error = 0.0;
    bool exact = false;
    bool converged = true;
    std::int64_t samples = 0;
};

//! |t1 ∩ t2|. Closed form for parallel tubes, polygon clipping for n = 2,
//! the crossing-cylinder integral for n >= 3 when the caps do not cut the
//! lens, stratified Monte Carlo otherwise.
IntersectionVolume pair_intersection_volume(const Tube& t1, const Tube& t2, double tol = 1e-3,
                                            std::uint64_t seed = 0, std::int64_t budget = 1 << 22);

struct PairCheck {
    bool ok = true;
    std::optional<std::pair<std::size_t, std::size_t>> witness;
    double witness_value = 0.0;
};

//! Every pair satisfies |Ti ∩ Tj| <= c0 |Ti|; witness is the first violating pair.
PairCheck is_essentially_distinct(const TubeFamily& f);
//! Every pair of directions is more than delta apart.
PairCheck is_delta_separated(const TubeFamily& f);

//! (|(a-O)·e|, |(a-O) - ((a-O)·e) e|) for tube center a.
std::pair<double, double> vertical_horizontal_distance(const Tube& t, const Vec& O);

//! Shortest distance between the axis segments of two tubes.
double axis_distance(const Tube& t1, const Tube& t2);

//! Orthonormal basis of the complement of a unit vector.
std::vector<Vec> orthonormal_complement(const Vec& e);

nlohmann::json family_to_json(const TubeFamily& f);
TubeFamily family_from_json(const nlohmann::json& j);
TubeFamily load_family(const std::string& path);
void save_family(const TubeFamily& f, const std::string& path);

}  // namespace tubekit
