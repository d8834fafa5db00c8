#pragma once

#include "nitsche/contact.hpp"

#include <Eigen/Sparse>

#include <iosfwd>
#include <map>

namespace nitsche {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using VectorFn = std::function<Vec2(const Vec2&)>;

VectorFn constant_field(const Vec2& v);

struct ProblemData {
  Material material;
  VectorFn f = constant_field(Vec2::Zero());
  std::map<int, VectorFn> g_neumann; // by Neumann tag, absent tags are traction free
  Friction friction;
  double gamma0 = 1.0; // Nitsche parameter, gamma = gamma0 / h_T

  Vec2 neumann_value(int tag, const Vec2& x) const;
  void validate() const;
};

// Quadrature on a contact face, with the barycentric coordinates in the owning element.
struct FacePoint {
  int face = -1;
  int element = -1;
  std::array<double, 3> bary{};
  double s = 0.0;      // edge parameter from face.v[0] to face.v[1]
  Vec2 x = Vec2::Zero();
  double weight = 0.0; // physical weight
};

std::vector<FacePoint> face_points(const Mesh& mesh, int face, int npoints);

constexpr int kContactQuadPoints = 6;
int element_quad_degree(int fe_degree);

TracePoint trace_at(const FeFunction& u, const FacePoint& p, const ProblemData& data);

SparseMatrix assemble_stiffness(const LagrangeSpace& space, const Material& m);
Eigen::VectorXd assemble_load(const LagrangeSpace& space, const ProblemData& data);

// Rows and columns of free dofs only.
SparseMatrix reduce(const LagrangeSpace& space, const SparseMatrix& full);
Eigen::VectorXd reduce(const LagrangeSpace& space, const Eigen::VectorXd& full);
Eigen::VectorXd expand(const LagrangeSpace& space, const Eigen::VectorXd& reduced);

struct LinearSystem {
  SparseMatrix matrix; // reduced
  Eigen::VectorXd rhs; // reduced
  std::shared_ptr<const LagrangeSpace> space;
};

// Linearised Nitsche problem around u_prev, in terms of the new iterate.
LinearSystem assemble_newton_system(const FeFunction& u_prev, const ProblemData& data);
LinearSystem assemble_elasticity_system(std::shared_ptr<const LagrangeSpace> space,
                                        const ProblemData& data);

// R(u)(v) = L(v) - a(u,v) + ([P^n]_-, v^n)_C + ([P^t]_S, v^t)_C on every dof;
// constrained entries are zero.
Eigen::VectorXd nitsche_residual(const FeFunction& u, const ProblemData& data);

FeFunction solve(const LinearSystem& sys);

void write_triplets(std::ostream& os, const SparseMatrix& a);

} // namespace nitsche
