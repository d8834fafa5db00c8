#include "nitsche/fespace.hpp"

#include <cmath>

namespace nitsche {

void Material::validate() const {
  if (!(E > 0.0))
    throw Error("material: Young's modulus must be positive");
  if (!(nu > -1.0 && nu < 0.5))
    throw Error("material: Poisson ratio must lie in (-1, 0.5)");
}

Mat2 stress_from_gradient(const Mat2& grad, const Material& m) {
  const Mat2 eps = strain(grad);
  return m.lambda() * eps.trace() * Mat2::Identity() + 2.0 * m.mu() * eps;
}

LagrangeSpace::LagrangeSpace(std::shared_ptr<const Mesh> mesh, int degree)
    : mesh_(std::move(mesh)), degree_(degree) {
  if (degree_ != 1 && degree_ != 2)
    throw Error("LagrangeSpace: only degrees 1 and 2 are supported");
  const Mesh& m = *mesh_;
  num_nodes_ = m.num_vertices() + (degree_ == 2 ? m.num_faces() : 0);
  constrained_.assign(num_nodes_, 0);
  for (int v = 0; v < m.num_vertices(); ++v)
    constrained_[v] = m.is_dirichlet_vertex(v);
  if (degree_ == 2)
    for (int f = 0; f < m.num_faces(); ++f) {
      const Face& face = m.face(f);
      constrained_[m.num_vertices() + f] =
          face.label && face.label->kind == BoundaryKind::Dirichlet;
    }
  free_index_.assign(num_dofs(), -1);
  for (Index d = 0; d < num_dofs(); ++d)
    if (!constrained_[d / 2]) {
      free_index_[d] = static_cast<Index>(free_dofs_.size());
      free_dofs_.push_back(d);
    }
  num_free_ = static_cast<Index>(free_dofs_.size());
}

int LagrangeSpace::element_node(int t, int local) const {
  if (local < 3)
    return mesh_->triangle(t)[local];
  return mesh_->num_vertices() + mesh_->element_face(t, local - 3);
}

Vec2 LagrangeSpace::node_position(int n) const {
  const Mesh& m = *mesh_;
  if (n < m.num_vertices())
    return m.vertex(n);
  const Face& f = m.face(n - m.num_vertices());
  return 0.5 * (m.vertex(f.v[0]) + m.vertex(f.v[1]));
}

void LagrangeSpace::shape_values(const std::array<double, 3>& b, double* v) const {
  if (degree_ == 1) {
    v[0] = b[0];
    v[1] = b[1];
    v[2] = b[2];
    return;
  }
  for (int i = 0; i < 3; ++i) {
    v[i] = b[i] * (2.0 * b[i] - 1.0);
    v[3 + i] = 4.0 * b[(i + 1) % 3] * b[(i + 2) % 3];
  }
}

void LagrangeSpace::shape_gradients(int t, const std::array<double, 3>& b, Vec2* g) const {
  const auto gl = mesh_->barycentric_gradients(t);
  if (degree_ == 1) {
    g[0] = gl[0];
    g[1] = gl[1];
    g[2] = gl[2];
    return;
  }
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    g[i] = (4.0 * b[i] - 1.0) * gl[i];
    g[3 + i] = 4.0 * (b[j] * gl[k] + b[k] * gl[j]);
  }
}

FeFunction::FeFunction(std::shared_ptr<const LagrangeSpace> space)
    : space_(std::move(space)), coeffs_(Eigen::VectorXd::Zero(space_->num_dofs())) {}

FeFunction::FeFunction(std::shared_ptr<const LagrangeSpace> space, Eigen::VectorXd coeffs)
    : space_(std::move(space)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != space_->num_dofs())
    throw Error("FeFunction: coefficient vector has wrong size");
}

Vec2 FeFunction::value(int t, const std::array<double, 3>& bary) const {
  double n[6];
  space_->shape_values(bary, n);
  Vec2 u = Vec2::Zero();
  for (int i = 0; i < space_->nodes_per_element(); ++i) {
    const Index node = space_->element_node(t, i);
    u += n[i] * Vec2(coeffs_[2 * node], coeffs_[2 * node + 1]);
  }
  return u;
}

Mat2 FeFunction::gradient(int t, const std::array<double, 3>& bary) const {
  Vec2 g[6];
  space_->shape_gradients(t, bary, g);
  Mat2 grad = Mat2::Zero();
  for (int i = 0; i < space_->nodes_per_element(); ++i) {
    const Index node = space_->element_node(t, i);
    grad.row(0) += coeffs_[2 * node] * g[i].transpose();
    grad.row(1) += coeffs_[2 * node + 1] * g[i].transpose();
  }
  return grad;
}

FeFunction interpolate(std::shared_ptr<const LagrangeSpace> space,
                       const std::function<Vec2(const Vec2&)>& fn) {
  FeFunction u(space);
  for (int n = 0; n < space->num_nodes(); ++n) {
    if (space->is_constrained_node(n))
      continue;
    const Vec2 val = fn(space->node_position(n));
    u.coeffs()[2 * n] = val.x();
    u.coeffs()[2 * n + 1] = val.y();
  }
  return u;
}

std::vector<Vec2> evaluate(const FeFunction& u, const std::vector<Vec2>& points) {
  PointLocator loc(u.space().mesh());
  std::vector<Vec2> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::array<double, 3> b;
    const int t = loc.locate(points[i], &b);
    if (t < 0)
      throw PointLocationError("evaluate: point " + std::to_string(i) + " lies outside the mesh",
                               static_cast<Index>(i));
    out[i] = u.value(t, b);
  }
  return out;
}

std::vector<Mat2> evaluate_gradient(const FeFunction& u, const std::vector<Vec2>& points) {
  PointLocator loc(u.space().mesh());
  std::vector<Mat2> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::array<double, 3> b;
    const int t = loc.locate(points[i], &b);
    if (t < 0)
      throw PointLocationError("evaluate: point " + std::to_string(i) + " lies outside the mesh",
                               static_cast<Index>(i));
    out[i] = u.gradient(t, b);
  }
  return out;
}

FeFunction prolongate(const FeFunction& u, std::shared_ptr<const LagrangeSpace> target) {
  std::vector<Vec2> pts(target->num_nodes());
  for (int n = 0; n < target->num_nodes(); ++n)
    pts[n] = target->node_position(n);
  const auto vals = evaluate(u, pts);
  FeFunction out(target);
  for (int n = 0; n < target->num_nodes(); ++n) {
    if (target->is_constrained_node(n))
      continue;
    out.coeffs()[2 * n] = vals[n].x();
    out.coeffs()[2 * n + 1] = vals[n].y();
  }
  return out;
}

Eigen::VectorXd project_edge(const std::function<double(double)>& fn, int degree,
                             int quad_points) {
  const LineRule g = gauss_legendre(quad_points);
  const int n = degree + 1;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (std::size_t q = 0; q < g.points.size(); ++q) {
    const double s = g.points[q], w = g.weights[q];
    const double f = fn(s);
    for (int i = 0; i < n; ++i) {
      const double pi = std::pow(s, i);
      rhs[i] += w * f * pi;
      for (int j = 0; j < n; ++j)
        gram(i, j) += w * pi * std::pow(s, j);
    }
  }
  return gram.ldlt().solve(rhs);
}

int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

void monomials(const Vec2& x, const Vec2& c, double h, int degree, double* out) {
  const double X = (x.x() - c.x()) / h, Y = (x.y() - c.y()) / h;
  int k = 0;
  for (int d = 0; d <= degree; ++d)
    for (int j = 0; j <= d; ++j)
      out[k++] = std::pow(X, d - j) * std::pow(Y, j);
}

void monomial_gradients(const Vec2& x, const Vec2& c, double h, int degree, Vec2* out) {
  const double X = (x.x() - c.x()) / h, Y = (x.y() - c.y()) / h;
  int k = 0;
  for (int d = 0; d <= degree; ++d)
    for (int j = 0; j <= d; ++j) {
      const int i = d - j;
      const double gx = i > 0 ? i * std::pow(X, i - 1) * std::pow(Y, j) : 0.0;
      const double gy = j > 0 ? j * std::pow(X, i) * std::pow(Y, j - 1) : 0.0;
      out[k++] = Vec2(gx, gy) / h;
    }
}

Eigen::MatrixXd project_element(const Mesh& mesh, int t,
                                const std::function<Vec2(const Vec2&)>& fn, int degree,
                                const std::vector<std::array<double, 3>>& samples,
                                int quad_degree) {
  if (quad_degree < 0)
    quad_degree = 2 * degree + 4;
  const TriangleRule rule = triangle_rule(quad_degree);
  const int n = monomial_count(degree);
  const Vec2 c = mesh.centroid(t);
  const double h = mesh.diameter(t);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
  std::vector<double> m(n);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const Vec2 x = mesh.map_point(t, rule.points[q]);
    monomials(x, c, h, degree, m.data());
    const Vec2 f = fn(x);
    for (int i = 0; i < n; ++i) {
      rhs(i, 0) += rule.weights[q] * m[i] * f.x();
      rhs(i, 1) += rule.weights[q] * m[i] * f.y();
      for (int j = 0; j < n; ++j)
        gram(i, j) += rule.weights[q] * m[i] * m[j];
    }
  }
  const Eigen::MatrixXd coef = gram.ldlt().solve(rhs);
  Eigen::MatrixXd out(samples.size(), 2);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    monomials(mesh.map_point(t, samples[s]), c, h, degree, m.data());
    for (int comp = 0; comp < 2; ++comp) {
      double v = 0.0;
      for (int i = 0; i < n; ++i)
        v += coef(i, comp) * m[i];
      out(s, comp) = v;
    }
  }
  return out;
}

} // namespace nitsche
