#pragma once

#include "nitsche/types.hpp"

#include <vector>

namespace nitsche {

// Points on [0,1].
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights; // sum to 1
};

// Points in barycentric coordinates of the reference triangle.
struct TriangleRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights; // sum to 1
};

LineRule gauss_legendre(int npoints);

// Collapsed-coordinate product rule, exact for total degree `degree`.
TriangleRule triangle_rule(int degree);

} // namespace nitsche
