#pragma once

#include <vector>

#include "tubekit/tube.hpp"

namespace tubekit {

//! Greedy farthest-point net on S^{n-1}/{±1} restricted to the cap of angular
//! radius cap_radius about e_n. Accepted directions are pairwise more than
//! separation apart. For n = 2 the net is the dyadic angle grid through e_n.
std::vector<Direction> direction_net(int n, double separation, double cap_radius = kPi / 2);

//! Rotation taking e_n to e (Householder reflection composed with a sign fix),
//! applied to v.
Vec rotate_from_vertical(const Vec& e, const Vec& v);

}  // namespace tubekit
