#pragma once

#include "nitsche/assembly.hpp"

namespace fixtures {

using namespace nitsche;

inline const BoundaryLabel D{BoundaryKind::Dirichlet, 0};
inline const BoundaryLabel C{BoundaryKind::Contact, 0};
inline const BoundaryLabel N0{BoundaryKind::Neumann, 0};
inline const BoundaryLabel N1{BoundaryKind::Neumann, 1};

// (-1,1) x (0,1): contact below, clamped on top, loaded on the left.
inline std::shared_ptr<const Mesh> rect_mesh(int nx, int ny) {
  return std::make_shared<const Mesh>(
      build_rectangle_mesh(-1, 1, 0, 1, nx, ny, {C, N0, D, N1}, DiagonalPattern::Centred));
}

inline ProblemData rect_data(FrictionLaw law) {
  ProblemData d;
  d.material = {1.0, 0.3};
  d.f = constant_field(Vec2(0.0, -0.02));
  d.g_neumann[1] = constant_field(Vec2(-0.028, 0.0));
  d.friction.law = law;
  d.friction.s = 5e-3;
  d.friction.mu = 0.5;
  d.gamma0 = 10.0;
  return d;
}

} // namespace fixtures
