#include "nitsche/assembly.hpp"

#include <Eigen/SparseLU>

#include <iomanip>
#include <ostream>

namespace nitsche {

VectorFn constant_field(const Vec2& v) {
  return [v](const Vec2&) { return v; };
}

Vec2 ProblemData::neumann_value(int tag, const Vec2& x) const {
  auto it = g_neumann.find(tag);
  return it == g_neumann.end() ? Vec2::Zero() : it->second(x);
}

void ProblemData::validate() const {
  material.validate();
  friction.validate();
  if (!(gamma0 > 0.0))
    throw Error("problem: Nitsche parameter gamma0 must be positive");
  if (!f)
    throw Error("problem: missing volume force");
}

int element_quad_degree(int fe_degree) { return 2 * fe_degree; }

std::vector<FacePoint> face_points(const Mesh& mesh, int face, int npoints) {
  const Face& f = mesh.face(face);
  const int t = f.elem[0];
  const int li = f.local[0];
  const auto& tri = mesh.triangle(t);
  const LineRule g = gauss_legendre(npoints);
  std::vector<FacePoint> pts(g.points.size());
  const Vec2& a = mesh.vertex(f.v[0]);
  const Vec2& b = mesh.vertex(f.v[1]);
  for (std::size_t q = 0; q < g.points.size(); ++q) {
    FacePoint& p = pts[q];
    p.face = face;
    p.element = t;
    p.s = g.points[q];
    p.x = (1.0 - p.s) * a + p.s * b;
    p.weight = g.weights[q] * f.length;
    p.bary = {0.0, 0.0, 0.0};
    for (int k = 1; k <= 2; ++k) {
      const int lv = (li + k) % 3;
      p.bary[lv] = tri[lv] == f.v[0] ? 1.0 - p.s : p.s;
    }
  }
  return pts;
}

TracePoint trace_at(const FeFunction& u, const FacePoint& p, const ProblemData& data) {
  const Mesh& mesh = u.space().mesh();
  const Face& f = mesh.face(p.face);
  TracePoint tp;
  tp.u = u.value(p.element, p.bary);
  tp.grad = u.gradient(p.element, p.bary);
  tp.n = f.normal;
  tp.t = f.tangent;
  tp.gamma = data.gamma0 / mesh.diameter(p.element);
  if (data.friction.law == FrictionLaw::Tresca) {
    const Vec2 mid = 0.5 * (mesh.vertex(f.v[0]) + mesh.vertex(f.v[1]));
    tp.s = data.friction.tresca_threshold(mid);
  }
  return tp;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

struct LocalBasis {
  int n = 0;
  double val[6];
  Vec2 grad[6];
  Index node[6];
};

LocalBasis basis_at(const LagrangeSpace& space, int t, const std::array<double, 3>& b) {
  LocalBasis lb;
  lb.n = space.nodes_per_element();
  space.shape_values(b, lb.val);
  space.shape_gradients(t, b, lb.grad);
  for (int i = 0; i < lb.n; ++i)
    lb.node[i] = space.element_node(t, i);
  return lb;
}

// Gradient of phi_i e_c.
Mat2 basis_gradient(const LocalBasis& lb, int i, int c) {
  Mat2 g = Mat2::Zero();
  g.row(c) = lb.grad[i].transpose();
  return g;
}

void add_stiffness(const LagrangeSpace& space, const Material& m, Triplets& trip) {
  const Mesh& mesh = space.mesh();
  const TriangleRule rule = triangle_rule(element_quad_degree(space.degree()));
  const int nloc = space.nodes_per_element();
  Eigen::MatrixXd ke(2 * nloc, 2 * nloc);
  for (int t = 0; t < mesh.num_elements(); ++t) {
    ke.setZero();
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const LocalBasis lb = basis_at(space, t, rule.points[q]);
      const double w = rule.weights[q] * mesh.area(t);
      for (int j = 0; j < nloc; ++j)
        for (int b = 0; b < 2; ++b) {
          const Mat2 sj = stress_from_gradient(basis_gradient(lb, j, b), m);
          for (int i = 0; i < nloc; ++i)
            for (int a = 0; a < 2; ++a)
              ke(2 * i + a, 2 * j + b) += w * sj.row(a).dot(lb.grad[i]);
        }
    }
    for (int i = 0; i < nloc; ++i)
      for (int j = 0; j < nloc; ++j)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            trip.emplace_back(static_cast<int>(2 * space.element_node(t, i) + a),
                              static_cast<int>(2 * space.element_node(t, j) + b),
                              ke(2 * i + a, 2 * j + b));
  }
}

template <class Fn> void for_each_labelled_face(const Mesh& mesh, BoundaryKind kind, Fn&& fn) {
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.face(f);
    if (face.label && face.label->kind == kind)
      fn(f, face);
  }
}

SparseMatrix to_matrix(Index n, const Triplets& trip) {
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

} // namespace

SparseMatrix assemble_stiffness(const LagrangeSpace& space, const Material& m) {
  Triplets trip;
  add_stiffness(space, m, trip);
  return to_matrix(space.num_dofs(), trip);
}

Eigen::VectorXd assemble_load(const LagrangeSpace& space, const ProblemData& data) {
  const Mesh& mesh = space.mesh();
  Eigen::VectorXd l = Eigen::VectorXd::Zero(space.num_dofs());
  const TriangleRule rule = triangle_rule(element_quad_degree(space.degree()));
  for (int t = 0; t < mesh.num_elements(); ++t)
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const LocalBasis lb = basis_at(space, t, rule.points[q]);
      const double w = rule.weights[q] * mesh.area(t);
      const Vec2 f = data.f(mesh.map_point(t, rule.points[q]));
      for (int i = 0; i < lb.n; ++i) {
        l[2 * lb.node[i]] += w * lb.val[i] * f.x();
        l[2 * lb.node[i] + 1] += w * lb.val[i] * f.y();
      }
    }
  for_each_labelled_face(mesh, BoundaryKind::Neumann, [&](int fi, const Face& face) {
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const Vec2 g = data.neumann_value(face.label->tag, p.x);
      const LocalBasis lb = basis_at(space, p.element, p.bary);
      for (int i = 0; i < lb.n; ++i) {
        l[2 * lb.node[i]] += p.weight * lb.val[i] * g.x();
        l[2 * lb.node[i] + 1] += p.weight * lb.val[i] * g.y();
      }
    }
  });
  return l;
}

SparseMatrix reduce(const LagrangeSpace& space, const SparseMatrix& full) {
  Triplets trip;
  trip.reserve(full.nonZeros());
  for (int k = 0; k < full.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(full, k); it; ++it) {
      const Index r = space.free_index(it.row()), c = space.free_index(it.col());
      if (r >= 0 && c >= 0)
        trip.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
    }
  return to_matrix(space.num_free_dofs(), trip);
}

Eigen::VectorXd reduce(const LagrangeSpace& space, const Eigen::VectorXd& full) {
  Eigen::VectorXd r(space.num_free_dofs());
  for (Index i = 0; i < space.num_free_dofs(); ++i)
    r[i] = full[space.free_dofs()[i]];
  return r;
}

Eigen::VectorXd expand(const LagrangeSpace& space, const Eigen::VectorXd& reduced) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(space.num_dofs());
  for (Index i = 0; i < space.num_free_dofs(); ++i)
    full[space.free_dofs()[i]] = reduced[i];
  return full;
}

LinearSystem assemble_elasticity_system(std::shared_ptr<const LagrangeSpace> space,
                                        const ProblemData& data) {
  LinearSystem sys;
  sys.space = space;
  sys.matrix = reduce(*space, assemble_stiffness(*space, data.material));
  sys.rhs = reduce(*space, assemble_load(*space, data));
  return sys;
}

LinearSystem assemble_newton_system(const FeFunction& u_prev, const ProblemData& data) {
  const LagrangeSpace& space = u_prev.space();
  const Mesh& mesh = space.mesh();
  const Material& m = data.material;
  Triplets trip;
  add_stiffness(space, m, trip);
  Eigen::VectorXd rhs = assemble_load(space, data);
  for_each_labelled_face(mesh, BoundaryKind::Contact, [&](int fi, const Face& face) {
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const TracePoint tp = trace_at(u_prev, p, data);
      const ContactState st = contact_state(tp, m, data.friction);
      const LocalBasis lb = basis_at(space, p.element, p.bary);
      // P(phi_j e_b) in the normal and tangential directions.
      double pn[12], pt[12], vn[12], vt[12];
      for (int j = 0; j < lb.n; ++j)
        for (int b = 0; b < 2; ++b) {
          const Vec2 sn = stress_from_gradient(basis_gradient(lb, j, b), m) * face.normal;
          const int k = 2 * j + b;
          vn[k] = lb.val[j] * face.normal[b];
          vt[k] = lb.val[j] * face.tangent[b];
          pn[k] = sn.dot(face.normal) - tp.gamma * vn[k];
          pt[k] = sn.dot(face.tangent) - tp.gamma * vt[k];
        }
      const int nk = 2 * lb.n;
      auto dof = [&](int k) { return static_cast<int>(2 * lb.node[k / 2] + k % 2); };
      if (st.normal_active)
        for (int i = 0; i < nk; ++i)
          for (int j = 0; j < nk; ++j)
            trip.emplace_back(dof(i), dof(j), -p.weight * pn[j] * vn[i]);
      if (st.stick) {
        for (int i = 0; i < nk; ++i)
          for (int j = 0; j < nk; ++j)
            trip.emplace_back(dof(i), dof(j), -p.weight * pt[j] * vt[i]);
        // [P^t]_S - P^t(u_prev) vanishes when sticking.
      } else if (data.friction.law == FrictionLaw::Coulomb && data.friction.linearize_threshold &&
                 st.normal_active) {
        // Slip with S = -mu P^n: the traction is linear in P^n.
        const double c = st.p_t > 0.0 ? -data.friction.mu : data.friction.mu;
        for (int i = 0; i < nk; ++i)
          for (int j = 0; j < nk; ++j)
            trip.emplace_back(dof(i), dof(j), -p.weight * c * pn[j] * vt[i]);
      } else {
        for (int i = 0; i < nk; ++i)
          rhs[dof(i)] += p.weight * st.pt_proj * vt[i];
      }
    }
  });
  LinearSystem sys;
  sys.space = u_prev.space_ptr();
  sys.matrix = reduce(space, to_matrix(space.num_dofs(), trip));
  sys.rhs = reduce(space, rhs);
  return sys;
}

Eigen::VectorXd nitsche_residual(const FeFunction& u, const ProblemData& data) {
  const LagrangeSpace& space = u.space();
  const Mesh& mesh = space.mesh();
  Eigen::VectorXd r = assemble_load(space, data) - assemble_stiffness(space, data.material) * u.coeffs();
  for_each_labelled_face(mesh, BoundaryKind::Contact, [&](int fi, const Face& face) {
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const ContactState st = contact_state(trace_at(u, p, data), data.material, data.friction);
      const LocalBasis lb = basis_at(space, p.element, p.bary);
      const Vec2 traction = st.pn_neg * face.normal + st.pt_proj * face.tangent;
      for (int i = 0; i < lb.n; ++i) {
        r[2 * lb.node[i]] += p.weight * lb.val[i] * traction.x();
        r[2 * lb.node[i] + 1] += p.weight * lb.val[i] * traction.y();
      }
    }
  });
  for (Index d = 0; d < space.num_dofs(); ++d)
    if (space.is_constrained_dof(d))
      r[d] = 0.0;
  return r;
}

FeFunction solve(const LinearSystem& sys) {
  if (sys.matrix.rows() == 0)
    return FeFunction(sys.space);
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(sys.matrix);
  lu.factorize(sys.matrix);
  if (lu.info() != Eigen::Success)
    throw SingularSystemError("sparse LU failed: " + lu.lastErrorMessage());
  Eigen::VectorXd x = lu.solve(sys.rhs);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw SingularSystemError("sparse LU solve failed");
  return FeFunction(sys.space, expand(*sys.space, x));
}

void write_triplets(std::ostream& os, const SparseMatrix& a) {
  os << "# rows " << a.rows() << " cols " << a.cols() << " nnz " << a.nonZeros() << "\n";
  os << std::setprecision(17);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

} // namespace nitsche
