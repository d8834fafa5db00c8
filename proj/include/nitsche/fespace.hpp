#pragma once

#include "nitsche/mesh.hpp"
#include "nitsche/quadrature.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace nitsche {

struct Material {
  double E = 1.0;
  double nu = 0.3;

  double mu() const { return E / (2.0 * (1.0 + nu)); }
  double lambda() const { return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)); }
  void validate() const;
};

// grad(i,j) = d u_i / d x_j
inline Mat2 strain(const Mat2& grad) { return 0.5 * (grad + grad.transpose()); }
Mat2 stress_from_gradient(const Mat2& grad, const Material& m);

// Vector-valued continuous Lagrange space of degree 1 or 2 with homogeneous
// Dirichlet conditions on the closure of the Dirichlet boundary.
// Nodes: vertices first, then edge midpoints (degree 2). dof = 2*node + component.
class LagrangeSpace {
public:
  LagrangeSpace(std::shared_ptr<const Mesh> mesh, int degree);

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  int nodes_per_element() const { return degree_ == 1 ? 3 : 6; }
  int num_nodes() const { return num_nodes_; }
  Index num_dofs() const { return 2 * static_cast<Index>(num_nodes_); }
  Index num_free_dofs() const { return num_free_; }

  // Local nodes: 0..2 vertices, 3..5 midpoints of local faces 0..2.
  int element_node(int t, int local) const;
  Vec2 node_position(int n) const;
  bool is_constrained_node(int n) const { return constrained_[n]; }
  bool is_constrained_dof(Index d) const { return constrained_[d / 2]; }
  // Index into the reduced system, -1 for constrained dofs.
  Index free_index(Index dof) const { return free_index_[dof]; }
  const std::vector<Index>& free_dofs() const { return free_dofs_; }

  void shape_values(const std::array<double, 3>& bary, double* values) const;
  // Gradients in physical coordinates on element t.
  void shape_gradients(int t, const std::array<double, 3>& bary, Vec2* grads) const;

private:
  std::shared_ptr<const Mesh> mesh_;
  int degree_;
  int num_nodes_ = 0;
  std::vector<char> constrained_;
  std::vector<Index> free_index_;
  std::vector<Index> free_dofs_;
  Index num_free_ = 0;
};

class FeFunction {
public:
  FeFunction() = default;
  explicit FeFunction(std::shared_ptr<const LagrangeSpace> space);
  FeFunction(std::shared_ptr<const LagrangeSpace> space, Eigen::VectorXd coeffs);

  const LagrangeSpace& space() const { return *space_; }
  std::shared_ptr<const LagrangeSpace> space_ptr() const { return space_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }

  Vec2 value(int t, const std::array<double, 3>& bary) const;
  Mat2 gradient(int t, const std::array<double, 3>& bary) const;

private:
  std::shared_ptr<const LagrangeSpace> space_;
  Eigen::VectorXd coeffs_;
};

FeFunction interpolate(std::shared_ptr<const LagrangeSpace> space,
                       const std::function<Vec2(const Vec2&)>& fn);

// Point evaluation; throws PointLocationError naming the first point outside the mesh.
std::vector<Vec2> evaluate(const FeFunction& u, const std::vector<Vec2>& points);
std::vector<Mat2> evaluate_gradient(const FeFunction& u, const std::vector<Vec2>& points);

// Interpolates u into another space on a mesh covering the same domain.
FeFunction prolongate(const FeFunction& u, std::shared_ptr<const LagrangeSpace> target);

// L2 projection of a function of the edge parameter s in [0,1] onto P^k;
// coefficients in the monomial basis 1, s, s^2, ...
Eigen::VectorXd project_edge(const std::function<double(double)>& fn, int degree,
                             int quad_points = 8);

// L2 projection on element t onto P^k, returned as values at the given
// barycentric sample points (the representation the estimators need).
Eigen::MatrixXd project_element(const Mesh& mesh, int t,
                                const std::function<Vec2(const Vec2&)>& fn, int degree,
                                const std::vector<std::array<double, 3>>& samples,
                                int quad_degree = -1);

// Scaled monomials (x - c)^i (y - c)^j / h^(i+j), i + j <= k.
int monomial_count(int degree);
void monomials(const Vec2& x, const Vec2& centre, double h, int degree, double* out);
void monomial_gradients(const Vec2& x, const Vec2& centre, double h, int degree, Vec2* out);

} // namespace nitsche
