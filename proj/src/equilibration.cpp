#include "nitsche/equilibration.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <thread>

namespace nitsche {

namespace {

constexpr int kLoadQuadDegree = 6;

enum class FaceKind { Free, Zero, Data };

// Rigid motions on a patch: two translations and a rotation about the vertex, scaled by h.
struct RigidBasis {
  Vec2 centre;
  double h;
  Vec2 operator()(int i, const Vec2& x) const {
    if (i == 0)
      return Vec2(1.0, 0.0);
    if (i == 1)
      return Vec2(0.0, 1.0);
    return Vec2(x.y() - centre.y(), centre.x() - x.x()) / h;
  }
  Vec2 eval(const Rigid& c, const Vec2& x) const {
    return c[0] * (*this)(0, x) + c[1] * (*this)(1, x) + c[2] * (*this)(2, x);
  }
};

// Hat function of vertex a restricted to the face, at edge parameter s.
double hat_on_face(const Face& f, int a, double s) {
  if (a == f.v[0])
    return 1.0 - s;
  if (a == f.v[1])
    return s;
  return 0.0;
}

// L2 projection onto P1(F) of psi_a * data, returned as endpoint values (v[0], v[1]).
std::array<Vec2, 2> project_face(const Mesh& mesh, int face, int a, const std::vector<Vec2>& data,
                                 const std::vector<FacePoint>& pts) {
  const Face& f = mesh.face(face);
  Vec2 m0 = Vec2::Zero(), m1 = Vec2::Zero();
  for (std::size_t q = 0; q < pts.size(); ++q) {
    const double w = pts[q].weight * hat_on_face(f, a, pts[q].s);
    m0 += w * (1.0 - pts[q].s) * data[q];
    m1 += w * pts[q].s * data[q];
  }
  const double c = 2.0 / f.length;
  return {c * (2.0 * m0 - m1), c * (2.0 * m1 - m0)};
}

// Integral over the face of a P1 vector field (endpoint values) against z.
double face_moment(const Mesh& mesh, int face, const std::array<Vec2, 2>& val,
                   const std::function<Vec2(const Vec2&)>& z) {
  const Face& f = mesh.face(face);
  const LineRule g = gauss_legendre(3);
  double sum = 0.0;
  for (std::size_t q = 0; q < g.points.size(); ++q) {
    const double s = g.points[q];
    const Vec2 x = (1.0 - s) * mesh.vertex(f.v[0]) + s * mesh.vertex(f.v[1]);
    sum += g.weights[q] * f.length * ((1.0 - s) * val[0] + s * val[1]).dot(z(x));
  }
  return sum;
}

std::array<Vec2, 3> weighted_load(const Mesh& mesh, int t, const VectorFn& f) {
  const TriangleRule r = triangle_rule(kLoadQuadDegree);
  std::array<Vec2, 3> out{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  for (std::size_t q = 0; q < r.points.size(); ++q) {
    const Vec2 fx = f(mesh.map_point(t, r.points[q]));
    for (int i = 0; i < 3; ++i)
      out[i] += r.weights[q] * mesh.area(t) * r.points[q][i] * fx;
  }
  return out;
}

int local_vertex(const Mesh& mesh, int t, int v) {
  const auto& tri = mesh.triangle(t);
  for (int i = 0; i < 3; ++i)
    if (tri[i] == v)
      return i;
  return -1;
}

// Coefficients of sigma(row, comp) at local vertex i in terms of the normal traces
// sigma_row . n_F at that vertex on the two faces through it (global face normals).
struct VertexRecovery {
  std::array<int, 2> local_face; // local faces (i+1)%3, (i+2)%3
  std::array<int, 2> endpoint;   // index of the vertex inside each face
  Mat2 inv;                      // sigma_row^T = inv * (s_A, s_B)^T
};

std::array<VertexRecovery, 3> vertex_recovery(const Mesh& mesh, int t) {
  std::array<VertexRecovery, 3> rec;
  const auto& tri = mesh.triangle(t);
  for (int i = 0; i < 3; ++i) {
    Mat2 n;
    for (int k = 0; k < 2; ++k) {
      const int lf = (i + 1 + k) % 3;
      const Face& f = mesh.face(mesh.element_face(t, lf));
      rec[i].local_face[k] = lf;
      rec[i].endpoint[k] = f.v[0] == tri[i] ? 0 : 1;
      n.row(k) = f.normal.transpose();
    }
    rec[i].inv = n.inverse();
  }
  return rec;
}

double max_entry(const StressField& s) {
  double m = 0.0;
  for (const auto& e : s.nodal)
    for (const Mat2& v : e)
      m = std::max(m, v.cwiseAbs().maxCoeff());
  return m;
}

} // namespace

Mat2 StressField::value(int t, const std::array<double, 3>& b) const {
  return b[0] * nodal[t][0] + b[1] * nodal[t][1] + b[2] * nodal[t][2];
}

Vec2 StressField::divergence(const Mesh& mesh, int t) const {
  const auto g = mesh.barycentric_gradients(t);
  Vec2 d = Vec2::Zero();
  for (int i = 0; i < 3; ++i)
    d += nodal[t][i] * g[i];
  return d;
}

StressField StressField::operator+(const StressField& o) const {
  StressField r(static_cast<int>(nodal.size()));
  for (std::size_t t = 0; t < nodal.size(); ++t)
    for (int i = 0; i < 3; ++i)
      r.nodal[t][i] = nodal[t][i] + o.nodal[t][i];
  return r;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads)
          fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool)
    th.join();
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

ContactTractions contact_tractions(const FeFunction& u_k, const FeFunction& u_prev,
                                   const ProblemData& data) {
  const Mesh& mesh = u_k.space().mesh();
  ContactTractions ct;
  ct.face_slot.assign(mesh.num_faces(), -1);
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    if (!f.label || f.label->kind != BoundaryKind::Contact)
      continue;
    ct.face_slot[fi] = static_cast<int>(ct.dis.size());
    std::vector<Vec2> dis, lin;
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const TracePoint tk = trace_at(u_k, p, data);
      const TracePoint tp = trace_at(u_prev, p, data);
      const ContactState st = contact_state(tk, data.material, data.friction);
      const double ln = p_lin_n(tk, tp, data.material);
      const double lt = p_lin_t(tk, tp, data.material, data.friction);
      dis.push_back(st.pn_neg * f.normal + st.pt_proj * f.tangent);
      lin.push_back((ln - st.pn_neg) * f.normal + (lt - st.pt_proj) * f.tangent);
    }
    ct.dis.push_back(std::move(dis));
    ct.lin.push_back(std::move(lin));
  }
  return ct;
}

struct EquilibrationContext::PatchGeometry {
  int a = -1;
  std::vector<int> elements;
  std::vector<int> faces;
  std::vector<FaceKind> kind;
  std::vector<std::array<int, 3>> element_faces; // patch face index per local face
  bool constrained = true;
  RigidBasis basis{};
  // Projected boundary data per patch face, endpoint values.
  std::vector<std::array<Vec2, 2>> data_dis, data_lin;
  // Kept rigid directions, rows over the basis.
  Eigen::MatrixXd directions;
  Eigen::Matrix3d gram;
  Rigid b_dis = Rigid::Zero(), b_lin = Rigid::Zero(); // boundary data moments
  std::vector<Vec2> load0;                            // element integrals of -psi f + sigma grad psi
};

EquilibrationContext::EquilibrationContext(const FeFunction& u_k, const FeFunction& u_prev,
                                           const ProblemData& data,
                                           const EquilibrationOptions& opts)
    : mesh_(u_k.space().mesh_ptr()), data_(&data), opts_(opts) {
  if (u_k.space().degree() != 1)
    throw Error("equilibration: only degree 1 displacements are supported");
  const Mesh& mesh = *mesh_;
  const int ne = mesh.num_elements();
  sigma_h_.resize(ne);
  psi_f_.resize(ne);
  for (int t = 0; t < ne; ++t) {
    sigma_h_[t] = stress_from_gradient(u_k.gradient(t, {1.0 / 3, 1.0 / 3, 1.0 / 3}), data.material);
    psi_f_[t] = weighted_load(mesh, t, data.f);
  }
  tractions_ = contact_tractions(u_k, u_prev, data);
  q_.assign(ne, {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()});
  incompat_.assign(mesh.num_vertices(), Rigid::Zero());
  balance();
}

EquilibrationContext::PatchGeometry EquilibrationContext::geometry(int a) const {
  const Mesh& mesh = *mesh_;
  PatchGeometry g;
  g.a = a;
  g.elements = mesh.vertex_elements(a);
  const bool boundary_vertex = mesh.is_boundary_vertex(a);
  std::map<int, int> index;
  auto in_patch = [&](int t) {
    return t >= 0 && std::binary_search(g.elements.begin(), g.elements.end(), t);
  };
  double h = 0.0;
  for (int t : g.elements) {
    h = std::max(h, mesh.diameter(t));
    std::array<int, 3> ef{};
    for (int k = 0; k < 3; ++k) {
      const int fi = mesh.element_face(t, k);
      auto it = index.find(fi);
      if (it == index.end()) {
        it = index.emplace(fi, static_cast<int>(g.faces.size())).first;
        g.faces.push_back(fi);
      }
      ef[k] = it->second;
    }
    g.element_faces.push_back(ef);
  }
  g.basis = {mesh.vertex(a), h};
  const int nf = static_cast<int>(g.faces.size());
  g.kind.assign(nf, FaceKind::Zero);
  g.data_dis.assign(nf, {Vec2::Zero(), Vec2::Zero()});
  g.data_lin.assign(nf, {Vec2::Zero(), Vec2::Zero()});
  for (int i = 0; i < nf; ++i) {
    const Face& f = mesh.face(g.faces[i]);
    if (!f.is_boundary()) {
      g.kind[i] = in_patch(f.elem[0]) && in_patch(f.elem[1]) ? FaceKind::Free : FaceKind::Zero;
      continue;
    }
    if (!boundary_vertex || (f.v[0] != a && f.v[1] != a))
      continue; // homogeneous normal trace on the patch boundary
    const BoundaryLabel& lab = *f.label;
    if (lab.kind == BoundaryKind::Dirichlet) {
      g.kind[i] = FaceKind::Free;
      g.constrained = false;
      continue;
    }
    g.kind[i] = FaceKind::Data;
    const std::vector<FacePoint> pts = face_points(mesh, g.faces[i], kContactQuadPoints);
    if (lab.kind == BoundaryKind::Neumann) {
      std::vector<Vec2> gv;
      for (const FacePoint& p : pts)
        gv.push_back(data_->neumann_value(lab.tag, p.x));
      g.data_dis[i] = project_face(mesh, g.faces[i], a, gv, pts);
    } else {
      const int slot = tractions_.face_slot[g.faces[i]];
      g.data_dis[i] = project_face(mesh, g.faces[i], a, tractions_.dis[slot], pts);
      g.data_lin[i] = project_face(mesh, g.faces[i], a, tractions_.lin[slot], pts);
    }
  }

  g.load0.resize(g.elements.size());
  for (std::size_t j = 0; j < g.elements.size(); ++j) {
    const int t = g.elements[j];
    const int la = local_vertex(mesh, t, a);
    g.load0[j] = -psi_f_[t][la] + mesh.area(t) * sigma_h_[t] * mesh.barycentric_gradients(t)[la];
  }

  if (g.constrained) {
    g.gram.setZero();
    for (int t : g.elements) {
      const Vec2 xc = mesh.centroid(t);
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
          g.gram(i, k) += mesh.area(t) * g.basis(i, xc).dot(g.basis(k, xc));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g.gram);
    const double top = eig.eigenvalues().maxCoeff();
    std::vector<int> keep;
    for (int i = 0; i < 3; ++i)
      if (eig.eigenvalues()[i] > 1e-10 * top)
        keep.push_back(i);
    g.directions.resize(static_cast<Eigen::Index>(keep.size()), 3);
    for (std::size_t k = 0; k < keep.size(); ++k)
      g.directions.row(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(keep[k]).transpose();
    for (int i = 0; i < nf; ++i) {
      if (g.kind[i] != FaceKind::Data)
        continue;
      for (int k = 0; k < 3; ++k) {
        auto z = [&](const Vec2& x) { return g.basis(k, x); };
        g.b_dis[k] += face_moment(mesh, g.faces[i], g.data_dis[i], z);
        g.b_lin[k] += face_moment(mesh, g.faces[i], g.data_lin[i], z);
      }
    }
  }
  return g;
}

void EquilibrationContext::balance() {
  const Mesh& mesh = *mesh_;
  const int nv = mesh.num_vertices();
  const int ne = mesh.num_elements();
  std::vector<PatchGeometry> geo(nv);
  parallel_for(nv, opts_.threads, [&](int a) { geo[a] = geometry(a); });

  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> trip;
  std::vector<double> rhs;
  double defect = 0.0, scale = 0.0;
  for (int a = 0; a < nv; ++a) {
    const PatchGeometry& g = geo[a];
    if (!g.constrained)
      continue;
    Rigid ell = -g.b_dis - g.b_lin;
    for (std::size_t j = 0; j < g.elements.size(); ++j) {
      const Vec2 xc = mesh.centroid(g.elements[j]);
      for (int k = 0; k < 3; ++k) {
        ell[k] += g.load0[j].dot(g.basis(k, xc));
        scale = std::max(scale, std::abs(g.load0[j].dot(g.basis(k, xc))));
      }
    }
    incompat_[a] = ell;
    for (Eigen::Index k = 0; k < g.directions.rows(); ++k) {
      const int row = static_cast<int>(rhs.size());
      const Eigen::Vector3d dir = g.directions.row(k).transpose();
      rhs.push_back(-dir.dot(ell));
      defect = std::max(defect, std::abs(dir.dot(ell)));
      for (int t : g.elements) {
        const int la = local_vertex(mesh, t, a);
        const Vec2 xc = mesh.centroid(t);
        Vec2 z = Vec2::Zero();
        for (int i = 0; i < 3; ++i)
          z += dir[i] * g.basis(i, xc);
        z *= mesh.area(t);
        // q^0 = alpha, q^1 = beta, q^2 = -alpha - beta
        for (int c = 0; c < 2; ++c) {
          const double alpha = (la == 0 ? 1.0 : 0.0) - (la == 2 ? 1.0 : 0.0);
          const double beta = (la == 1 ? 1.0 : 0.0) - (la == 2 ? 1.0 : 0.0);
          if (alpha != 0.0)
            trip.emplace_back(row, 4 * t + c, alpha * z[c]);
          if (beta != 0.0)
            trip.emplace_back(row, 4 * t + 2 + c, beta * z[c]);
        }
      }
    }
  }
  rotation_defect_ = scale > 0.0 ? defect / scale : 0.0;
  if (!opts_.balance_rotations || rhs.empty())
    return;

  const int m = static_cast<int>(rhs.size());
  SparseMatrix c(m, 4 * ne);
  c.setFromTriplets(trip.begin(), trip.end());
  // Inverse of the weights of sum_a |T| |q^a_T|^2 in the (alpha, beta) coordinates.
  std::vector<Trip> wt;
  for (int t = 0; t < ne; ++t) {
    const double s = 1.0 / (3.0 * mesh.area(t));
    for (int k = 0; k < 2; ++k) {
      wt.emplace_back(4 * t + k, 4 * t + k, 2.0 * s);
      wt.emplace_back(4 * t + 2 + k, 4 * t + 2 + k, 2.0 * s);
      wt.emplace_back(4 * t + k, 4 * t + 2 + k, -s);
      wt.emplace_back(4 * t + 2 + k, 4 * t + k, -s);
    }
  }
  SparseMatrix winv(4 * ne, 4 * ne);
  winv.setFromTriplets(wt.begin(), wt.end());
  const SparseMatrix cw = c * winv;
  const SparseMatrix normal = cw * SparseMatrix(c.transpose());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success)
    throw SingularSystemError("equilibration: rotational balancing system is singular");
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(rhs.data(), m);
  const Eigen::VectorXd mu = ldlt.solve(d);
  const Eigen::VectorXd x = SparseMatrix(cw.transpose()) * mu;
  if ((c * x - d).norm() > 1e-9 * std::max(d.norm(), 1e-300))
    throw SingularSystemError("equilibration: rotational balancing is inconsistent");
  for (int t = 0; t < ne; ++t) {
    const Vec2 alpha(x[4 * t], x[4 * t + 1]);
    const Vec2 beta(x[4 * t + 2], x[4 * t + 3]);
    q_[t] = {alpha, beta, -alpha - beta};
  }
}

PatchSolution EquilibrationContext::solve_patch(int a) const {
  const Mesh& mesh = *mesh_;
  const PatchGeometry g = geometry(a);
  const int ne = static_cast<int>(g.elements.size());
  const int nf = static_cast<int>(g.faces.size());
  const int ns = 4 * nf;

  PatchSolution sol;
  sol.vertex = a;
  sol.elements = g.elements;
  sol.constrained = g.constrained;

  // Rigid correction of the linearisation load.
  if (g.constrained) {
    Eigen::Matrix3d pinv = Eigen::Matrix3d::Zero();
    for (Eigen::Index k = 0; k < g.directions.rows(); ++k) {
      const Eigen::Vector3d dir = g.directions.row(k).transpose();
      pinv += dir * dir.transpose() / dir.dot(g.gram * dir);
    }
    sol.y = pinv * g.b_lin;
  }

  // Prescribed and free stress dofs: index = 4 * face + 2 * row + endpoint.
  Eigen::VectorXd fixed_dis = Eigen::VectorXd::Zero(ns), fixed_lin = Eigen::VectorXd::Zero(ns);
  std::vector<int> free_of(ns, -1);
  int nfree = 0;
  for (int i = 0; i < nf; ++i)
    for (int r = 0; r < 2; ++r)
      for (int e = 0; e < 2; ++e) {
        const int d = 4 * i + 2 * r + e;
        if (g.kind[i] == FaceKind::Free)
          free_of[d] = nfree++;
        else if (g.kind[i] == FaceKind::Data) {
          fixed_dis[d] = g.data_dis[i][e][r];
          fixed_lin[d] = g.data_lin[i][e][r];
        }
      }

  // Element maps: coefficient (i, row, comp) -> 12 entries over patch stress dofs.
  Eigen::MatrixXd amat = Eigen::MatrixXd::Zero(ns, ns);
  Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(2 * ne, ns);
  Eigen::MatrixXd cmat = Eigen::MatrixXd::Zero(ne, ns);
  Eigen::VectorXd fsig = Eigen::VectorXd::Zero(ns);
  std::vector<Eigen::MatrixXd> emaps(ne);
  for (int j = 0; j < ne; ++j) {
    const int t = g.elements[j];
    const auto rec = vertex_recovery(mesh, t);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(12, ns);
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          for (int k = 0; k < 2; ++k) {
            const int pf = g.element_faces[j][rec[i].local_face[k]];
            p(4 * i + 2 * r + c, 4 * pf + 2 * r + rec[i].endpoint[k]) += rec[i].inv(c, k);
          }
    const double area = mesh.area(t);
    const auto grad = mesh.barycentric_gradients(t);
    const int la = local_vertex(mesh, t, a);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(12, 12);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 12);
    Eigen::RowVectorXd skew = Eigen::RowVectorXd::Zero(12);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(12);
    for (int i = 0; i < 3; ++i) {
      for (int i2 = 0; i2 < 3; ++i2)
        for (int rc = 0; rc < 4; ++rc)
          m(4 * i + rc, 4 * i2 + rc) = area * (i == i2 ? 2.0 : 1.0) / 12.0;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          b(r, 4 * i + 2 * r + c) = area * grad[i][c];
          f(4 * i + 2 * r + c) = area * (i == la ? 2.0 : 1.0) / 12.0 * sigma_h_[t](r, c);
        }
      skew(4 * i + 1) = area / 3.0;
      skew(4 * i + 2) = -area / 3.0;
    }
    amat += p.transpose() * m * p;
    bmat.middleRows(2 * j, 2) = b * p;
    cmat.row(j) = skew * p;
    fsig += p.transpose() * f;
    emaps[j] = std::move(p);
  }

  // Divergence loads.
  Eigen::VectorXd fr_dis(2 * ne), fr_lin(2 * ne);
  sol.load_dis.resize(ne);
  sol.load_lin.resize(ne);
  for (int j = 0; j < ne; ++j) {
    const int t = g.elements[j];
    const Vec2 xc = mesh.centroid(t);
    const Vec2 yv = mesh.area(t) * g.basis.eval(sol.y, xc);
    const int la = local_vertex(mesh, t, a);
    const Vec2 qv = mesh.area(t) * q_[t][la];
    sol.load_dis[j] = g.load0[j] - yv + qv;
    sol.load_lin[j] = yv;
    fr_dis.segment<2>(2 * j) = sol.load_dis[j];
    fr_lin.segment<2>(2 * j) = sol.load_lin[j];
  }

  // Rigid-motion rows on the displacement multiplier.
  const int nk = g.constrained ? static_cast<int>(g.directions.rows()) : 0;
  Eigen::MatrixXd gmat = Eigen::MatrixXd::Zero(nk, 2 * ne);
  for (int k = 0; k < nk; ++k)
    for (int j = 0; j < ne; ++j) {
      const int t = g.elements[j];
      const Vec2 xc = mesh.centroid(t);
      Vec2 z = Vec2::Zero();
      for (int i = 0; i < 3; ++i)
        z += g.directions(k, i) * g.basis(i, xc);
      gmat.block(k, 2 * j, 1, 2) = mesh.area(t) * z.transpose();
    }

  const int n = nfree + 2 * ne + ne + nk;
  Eigen::MatrixXd kmat = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
  std::vector<int> free_list;
  for (int d = 0; d < ns; ++d)
    if (free_of[d] >= 0)
      free_list.push_back(d);
  const int ro = nfree, lo = nfree + 2 * ne, no = nfree + 3 * ne;
  for (int i = 0; i < nfree; ++i) {
    const int di = free_list[i];
    for (int k = 0; k < nfree; ++k)
      kmat(i, k) = amat(di, free_list[k]);
    for (int r = 0; r < 2 * ne; ++r) {
      kmat(i, ro + r) = bmat(r, di);
      kmat(ro + r, i) = bmat(r, di);
    }
    for (int j = 0; j < ne; ++j) {
      kmat(i, lo + j) = cmat(j, di);
      kmat(lo + j, i) = cmat(j, di);
    }
  }
  for (int k = 0; k < nk; ++k)
    for (int r = 0; r < 2 * ne; ++r) {
      kmat(ro + r, no + k) = gmat(k, r);
      kmat(no + k, ro + r) = gmat(k, r);
    }
  const Eigen::VectorXd* fixed[2] = {&fixed_dis, &fixed_lin};
  for (int w = 0; w < 2; ++w) {
    const Eigen::VectorXd ax = amat * *fixed[w];
    const Eigen::VectorXd bx = bmat * *fixed[w];
    const Eigen::VectorXd cx = cmat * *fixed[w];
    for (int i = 0; i < nfree; ++i)
      rhs(i, w) = (w == 0 ? fsig[free_list[i]] : 0.0) - ax[free_list[i]];
    rhs.block(ro, w, 2 * ne, 1) = (w == 0 ? fr_dis : fr_lin) - bx;
    rhs.block(lo, w, ne, 1) = -cx;
  }

  Eigen::MatrixXd x;
  if (n > 0) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kmat);
    sol.rcond = lu.rcond();
    if (!(sol.rcond > 1e-14))
      throw SingularSystemError("equilibration: singular patch system at vertex " +
                                std::to_string(a));
    x = lu.solve(rhs);
  } else {
    x = Eigen::MatrixXd::Zero(0, 2);
  }
  if (nk > 0) {
    const double ref = std::max(rhs.block(ro, 0, 2 * ne, 2).norm(), 1e-300);
    sol.multiplier = x.block(no, 0, nk, 2).norm() / ref;
  }

  sol.dis.resize(ne);
  sol.lin.resize(ne);
  for (int w = 0; w < 2; ++w) {
    Eigen::VectorXd s = *fixed[w];
    for (int i = 0; i < nfree; ++i)
      s[free_list[i]] = x(i, w);
    for (int j = 0; j < ne; ++j) {
      const Eigen::VectorXd c = emaps[j] * s;
      auto& out = w == 0 ? sol.dis[j] : sol.lin[j];
      for (int i = 0; i < 3; ++i)
        out[i] << c[4 * i], c[4 * i + 1], c[4 * i + 2], c[4 * i + 3];
    }
  }
  return sol;
}

StressReconstruction reconstruct(const FeFunction& u_k, const FeFunction& u_prev,
                                 const ProblemData& data, const EquilibrationOptions& opts) {
  const EquilibrationContext ctx(u_k, u_prev, data, opts);
  const Mesh& mesh = ctx.mesh();
  const int nv = mesh.num_vertices();
  std::vector<PatchSolution> sols(nv);
  parallel_for(nv, opts.threads, [&](int a) { sols[a] = ctx.solve_patch(a); });

  StressReconstruction rec;
  rec.dis = StressField(mesh.num_elements());
  rec.lin = StressField(mesh.num_elements());
  rec.y.resize(nv);
  rec.multiplier.resize(nv);
  rec.constrained.resize(nv);
  rec.rotation_defect = ctx.rotation_defect();
  for (int a = 0; a < nv; ++a) {
    const PatchSolution& s = sols[a];
    for (std::size_t j = 0; j < s.elements.size(); ++j)
      for (int i = 0; i < 3; ++i) {
        rec.dis.nodal[s.elements[j]][i] += s.dis[j][i];
        rec.lin.nodal[s.elements[j]][i] += s.lin[j][i];
      }
    rec.y[a] = s.y;
    rec.multiplier[a] = s.multiplier;
    rec.constrained[a] = s.constrained;
  }
  return rec;
}

double EquilibrationCheck::worst() const {
  return std::max({continuity, equilibrium, neumann, contact_dis_n, contact_dis_t, contact_lin_n,
                   contact_lin_t, weak_symmetry});
}

EquilibrationCheck verify_equilibration(const StressReconstruction& rec, const FeFunction& u_k,
                                        const FeFunction& u_prev, const ProblemData& data) {
  const Mesh& mesh = u_k.space().mesh();
  const StressField total = rec.total();
  const double s = std::max(max_entry(total), 1e-300);
  EquilibrationCheck out;

  auto at_vertex = [&](const StressField& f, int t, int v) {
    return f.nodal[t][local_vertex(mesh, t, v)];
  };

  for (int t = 0; t < mesh.num_elements(); ++t) {
    const double area = mesh.area(t);
    const auto lf = weighted_load(mesh, t, data.f);
    const Vec2 res = area * total.divergence(mesh, t) + lf[0] + lf[1] + lf[2];
    out.equilibrium =
        std::max(out.equilibrium, res.cwiseAbs().maxCoeff() / (s * area / mesh.diameter(t)));
    double skew = 0.0;
    for (int i = 0; i < 3; ++i)
      skew += area / 3.0 * (total.nodal[t][i](0, 1) - total.nodal[t][i](1, 0));
    out.weak_symmetry = std::max(out.weak_symmetry, std::abs(skew) / (s * area));
  }

  const ContactTractions ct = contact_tractions(u_k, u_prev, data);
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    const double scale = s * f.length;
    if (!f.is_boundary()) {
      for (int v : f.v) {
        const Vec2 jump = (at_vertex(total, f.elem[0], v) - at_vertex(total, f.elem[1], v)) * f.normal;
        out.continuity = std::max(out.continuity, jump.cwiseAbs().maxCoeff() / s);
      }
      continue;
    }
    if (f.label->kind == BoundaryKind::Dirichlet)
      continue;
    const std::vector<FacePoint> pts = face_points(mesh, fi, kContactQuadPoints);
    auto moments = [&](const StressField& fld, const std::vector<Vec2>& target) {
      // Moments of (sigma n - target) against the two endpoint hats.
      std::array<Vec2, 2> m{Vec2::Zero(), Vec2::Zero()};
      for (std::size_t q = 0; q < pts.size(); ++q) {
        const Vec2 r = fld.value(pts[q].element, pts[q].bary) * f.normal - target[q];
        m[0] += pts[q].weight * (1.0 - pts[q].s) * r;
        m[1] += pts[q].weight * pts[q].s * r;
      }
      return m;
    };
    if (f.label->kind == BoundaryKind::Neumann) {
      std::vector<Vec2> gv;
      for (const FacePoint& p : pts)
        gv.push_back(data.neumann_value(f.label->tag, p.x));
      for (const Vec2& m : moments(total, gv))
        out.neumann = std::max(out.neumann, m.cwiseAbs().maxCoeff() / scale);
      continue;
    }
    const int slot = ct.face_slot[fi];
    for (const Vec2& m : moments(rec.dis, ct.dis[slot])) {
      out.contact_dis_n = std::max(out.contact_dis_n, std::abs(m.dot(f.normal)) / scale);
      out.contact_dis_t = std::max(out.contact_dis_t, std::abs(m.dot(f.tangent)) / scale);
    }
    for (const Vec2& m : moments(rec.lin, ct.lin[slot])) {
      out.contact_lin_n = std::max(out.contact_lin_n, std::abs(m.dot(f.normal)) / scale);
      out.contact_lin_t = std::max(out.contact_lin_t, std::abs(m.dot(f.tangent)) / scale);
    }
  }
  return out;
}

} // namespace nitsche
