#include "nitsche/estimators.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nitsche {

namespace {

constexpr int kLoadQuadDegree = 6;

double sq(double x) { return x * x; }

// L2 projection onto P^k(F) of values given at the face points; monomial coefficients in s.
Eigen::VectorXd project_points(const std::vector<FacePoint>& pts, const std::vector<double>& v,
                               int degree) {
  const int n = degree + 1;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (std::size_t q = 0; q < pts.size(); ++q) {
    for (int i = 0; i < n; ++i) {
      const double pi = std::pow(pts[q].s, i);
      rhs[i] += pts[q].weight * v[q] * pi;
      for (int j = 0; j < n; ++j)
        gram(i, j) += pts[q].weight * pi * std::pow(pts[q].s, j);
    }
  }
  return gram.ldlt().solve(rhs);
}

double poly(const Eigen::VectorXd& c, double s) {
  double v = 0.0;
  for (Eigen::Index i = c.size() - 1; i >= 0; --i)
    v = v * s + c[i];
  return v;
}

// || v - Pi^k v ||_F^2 from point values.
double projection_defect(const std::vector<FacePoint>& pts, const std::vector<double>& v,
                         int degree) {
  const Eigen::VectorXd c = project_points(pts, v, degree);
  double sum = 0.0;
  for (std::size_t q = 0; q < pts.size(); ++q)
    sum += pts[q].weight * sq(v[q] - poly(c, pts[q].s));
  return sum;
}

template <class F>
double face_norm2(const std::vector<FacePoint>& pts, F&& fn) {
  double s = 0.0;
  for (std::size_t q = 0; q < pts.size(); ++q)
    s += pts[q].weight * fn(q);
  return s;
}

} // namespace

double trace_constant(const Mesh& mesh, int t, int local_face, int degree) {
  if (degree < 1)
    throw Error("trace_constant: degree must be positive");
  const auto& tri = mesh.triangle(t);
  const Vec2 a = mesh.vertex(tri[(local_face + 1) % 3]);
  const Vec2 b = mesh.vertex(tri[(local_face + 2) % 3]);
  const double hf = (b - a).norm();
  const Vec2 c = mesh.centroid(t);
  const double h = mesh.diameter(t);
  if (!(mesh.area(t) > 1e-14 * h * h))
    throw Error("trace_constant: degenerate element " + std::to_string(t));
  const int nm = monomial_count(degree);
  const int n = nm - 1;
  std::vector<double> m(nm);
  std::vector<Vec2> g(nm);

  Eigen::MatrixXd fa = Eigen::MatrixXd::Zero(n, n);
  const LineRule lr = gauss_legendre(degree + 1);
  Eigen::MatrixXd vals(lr.points.size(), n);
  for (std::size_t q = 0; q < lr.points.size(); ++q) {
    monomials((1.0 - lr.points[q]) * a + lr.points[q] * b, c, h, degree, m.data());
    for (int i = 0; i < n; ++i)
      vals(q, i) = m[i + 1];
  }
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(n);
  for (std::size_t q = 0; q < lr.points.size(); ++q)
    mean += lr.weights[q] * vals.row(q);
  for (std::size_t q = 0; q < lr.points.size(); ++q) {
    const Eigen::RowVectorXd r = vals.row(q) - mean;
    fa += lr.weights[q] * hf * r.transpose() * r;
  }

  Eigen::MatrixXd gb = Eigen::MatrixXd::Zero(n, n);
  const TriangleRule tr = triangle_rule(std::max(2 * degree - 2, 0));
  for (std::size_t q = 0; q < tr.points.size(); ++q) {
    monomial_gradients(mesh.map_point(t, tr.points[q]), c, h, degree, g.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        gb(i, j) += tr.weights[q] * mesh.area(t) * hf * g[i + 1].dot(g[j + 1]);
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(fa, gb);
  if (eig.info() != Eigen::Success)
    throw Error("trace_constant: eigenvalue problem failed on element " + std::to_string(t));
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

std::vector<double> EstimatorTable::total() const {
  std::vector<double> v(local.size());
  for (std::size_t t = 0; t < local.size(); ++t)
    v[t] = local[t].tot;
  return v;
}

IterationEstimate EstimatorTable::iteration_estimate() const {
  IterationEstimate e;
  e.osc = global.osc;
  e.str = global.str;
  e.lin = global.lin;
  e.neu = global.neu;
  e.cnt = global.cnt;
  e.frc = global.frc;
  e.lin_local.resize(local.size());
  e.rest_local.resize(local.size());
  for (std::size_t t = 0; t < local.size(); ++t) {
    const ElementEstimators& l = local[t];
    e.lin_local[t] = l.lin;
    e.rest_local[t] = l.osc + l.str + l.neu + l.cnt + l.frc;
  }
  return e;
}

EstimatorTable compute_estimators(const FeFunction& u_k, const FeFunction& u_prev,
                                  const StressReconstruction& rec, const ProblemData& data,
                                  const EstimatorOptions& opts) {
  const Mesh& mesh = u_k.space().mesh();
  const int ne = mesh.num_elements();
  const StressField total = rec.total();
  EstimatorTable tab;
  tab.local.resize(ne);

  const TriangleRule lr = triangle_rule(kLoadQuadDegree);
  const TriangleRule sr = triangle_rule(2);
  for (int t = 0; t < ne; ++t) {
    ElementEstimators& e = tab.local[t];
    const double area = mesh.area(t);
    const Vec2 div = total.divergence(mesh, t);
    std::vector<Vec2> fv(lr.points.size());
    Vec2 mean = Vec2::Zero();
    for (std::size_t q = 0; q < lr.points.size(); ++q) {
      fv[q] = data.f(mesh.map_point(t, lr.points[q]));
      mean += lr.weights[q] * fv[q];
    }
    double osc = 0.0, osc_rw = 0.0;
    for (std::size_t q = 0; q < lr.points.size(); ++q) {
      osc += lr.weights[q] * area * (fv[q] + div).squaredNorm();
      osc_rw += lr.weights[q] * area * (fv[q] - mean).squaredNorm();
    }
    const double hp = mesh.diameter(t) / std::numbers::pi;
    e.osc = hp * std::sqrt(osc);
    e.osc_rw = hp * std::sqrt(osc_rw);
    const Mat2 sig = stress_from_gradient(u_k.gradient(t, {1.0 / 3, 1.0 / 3, 1.0 / 3}), data.material);
    double str = 0.0, lin1 = 0.0;
    for (std::size_t q = 0; q < sr.points.size(); ++q) {
      str += sr.weights[q] * area * (rec.dis.value(t, sr.points[q]) - sig).squaredNorm();
      lin1 += sr.weights[q] * area * rec.lin.value(t, sr.points[q]).squaredNorm();
    }
    e.str = std::sqrt(str);
    e.lin1 = std::sqrt(lin1);
  }

  const ContactTractions ct = contact_tractions(u_k, u_prev, data);
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    if (!f.is_boundary() || f.label->kind == BoundaryKind::Dirichlet)
      continue;
    const int t = f.elem[0];
    ElementEstimators& e = tab.local[t];
    const std::vector<FacePoint> pts = face_points(mesh, fi, kContactQuadPoints);
    const double sh = std::sqrt(f.length);
    if (f.label->kind == BoundaryKind::Neumann) {
      std::vector<Vec2> g(pts.size());
      for (std::size_t q = 0; q < pts.size(); ++q)
        g[q] = data.neumann_value(f.label->tag, pts[q].x);
      const double ctf = opts.trace_safety * trace_constant(mesh, t, f.local[0], opts.trace_degree);
      const double d = face_norm2(pts, [&](std::size_t q) {
        return (g[q] - total.value(t, pts[q].bary) * f.normal).squaredNorm();
      });
      double rw = 0.0;
      for (int c = 0; c < 2; ++c) {
        std::vector<double> gc(pts.size());
        for (std::size_t q = 0; q < pts.size(); ++q)
          gc[q] = g[q][c];
        rw += projection_defect(pts, gc, 1);
      }
      e.neu += ctf * sh * std::sqrt(d);
      e.neu_rw += ctf * sh * std::sqrt(rw);
      continue;
    }
    const int slot = ct.face_slot[fi];
    std::vector<double> pn(pts.size()), pt(pts.size());
    for (std::size_t q = 0; q < pts.size(); ++q) {
      pn[q] = ct.dis[slot][q].dot(f.normal);
      pt[q] = ct.dis[slot][q].dot(f.tangent);
    }
    auto traction = [&](const StressField& s, std::size_t q) {
      return Vec2(s.value(t, pts[q].bary) * f.normal);
    };
    e.cnt += sh * std::sqrt(face_norm2(pts, [&](std::size_t q) {
      return sq(pn[q] - traction(rec.dis, q).dot(f.normal));
    }));
    e.frc += sh * std::sqrt(face_norm2(pts, [&](std::size_t q) {
      return sq(pt[q] - traction(rec.dis, q).dot(f.tangent));
    }));
    e.cnt_rw += sh * std::sqrt(projection_defect(pts, pn, 1));
    e.frc_rw += sh * std::sqrt(projection_defect(pts, pt, 1));
    e.lin2n += sh * std::sqrt(face_norm2(pts, [&](std::size_t q) {
      return sq(traction(rec.lin, q).dot(f.normal));
    }));
    e.lin2t += sh * std::sqrt(face_norm2(pts, [&](std::size_t q) {
      return sq(traction(rec.lin, q).dot(f.tangent));
    }));
  }

  ElementEstimators& gl = tab.global;
  double tot2 = 0.0, scale = 0.0;
  for (ElementEstimators& e : tab.local) {
    e.lin = e.lin1 + std::hypot(e.lin2n, e.lin2t);
    e.tot = std::hypot(e.osc + e.str + e.lin1 + e.neu, e.cnt + e.frc + e.lin2n + e.lin2t);
    scale = std::max(scale, e.tot);
    tot2 += sq(e.tot);
    gl.osc += sq(e.osc);
    gl.str += sq(e.str);
    gl.lin1 += sq(e.lin1);
    gl.lin2n += sq(e.lin2n);
    gl.lin2t += sq(e.lin2t);
    gl.neu += sq(e.neu);
    gl.cnt += sq(e.cnt);
    gl.frc += sq(e.frc);
    gl.lin += sq(e.lin);
    gl.osc_rw += sq(e.osc_rw);
    gl.neu_rw += sq(e.neu_rw);
    gl.cnt_rw += sq(e.cnt_rw);
    gl.frc_rw += sq(e.frc_rw);
  }
  for (double* v : {&gl.osc, &gl.str, &gl.lin1, &gl.lin2n, &gl.lin2t, &gl.neu, &gl.cnt, &gl.frc,
                    &gl.lin, &gl.osc_rw, &gl.neu_rw, &gl.cnt_rw, &gl.frc_rw})
    *v = std::sqrt(*v);
  gl.tot = std::sqrt(tot2);
  tab.bound = std::hypot(gl.osc + gl.str + gl.lin1 + gl.neu, gl.cnt + gl.frc + gl.lin2n + gl.lin2t);
  if (scale > 0.0)
    for (const ElementEstimators& e : tab.local)
      tab.rewrite_defect = std::max({tab.rewrite_defect, std::abs(e.osc - e.osc_rw) / scale,
                                     std::abs(e.neu - e.neu_rw) / scale,
                                     std::abs(e.cnt - e.cnt_rw) / scale,
                                     std::abs(e.frc - e.frc_rw) / scale});
  return tab;
}

IterateEstimate estimate_iterate(const FeFunction& u_k, const FeFunction& u_prev,
                                 const ProblemData& data, const EstimatorOptions& opts) {
  IterateEstimate out;
  out.reconstruction = reconstruct(u_k, u_prev, data, opts.equilibration);
  out.table = compute_estimators(u_k, u_prev, out.reconstruction, data, opts);
  return out;
}

std::vector<double> eta_sharp(const FeFunction& u, const ProblemData& data) {
  const Mesh& mesh = u.space().mesh();
  if (u.space().degree() != 1)
    throw Error("eta_sharp: only degree 1 displacements are supported");
  const int ne = mesh.num_elements();
  const std::array<double, 3> mid{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<Mat2> sig(ne);
  for (int t = 0; t < ne; ++t)
    sig[t] = stress_from_gradient(u.gradient(t, mid), data.material);

  // Squared contributions: volume per element, and per face with its kind.
  std::vector<double> vol(ne);
  const TriangleRule rule = triangle_rule(kLoadQuadDegree);
  for (int t = 0; t < ne; ++t) {
    const Eigen::MatrixXd pf = project_element(mesh, t, data.f, 1, rule.points, kLoadQuadDegree);
    double s = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q)
      s += rule.weights[q] * mesh.area(t) * pf.row(static_cast<Eigen::Index>(q)).squaredNorm();
    vol[t] = sq(mesh.diameter(t)) * s;
  }
  enum { Jump, Neu, Cnt, Frc };
  std::vector<std::array<double, 4>> face(mesh.num_faces(), {0, 0, 0, 0});
  const ContactTractions ct = contact_tractions(u, u, data);
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    const double hf = f.length;
    if (!f.is_boundary()) {
      const Vec2 j = (sig[f.elem[0]] - sig[f.elem[1]]) * f.normal;
      face[fi][Jump] = hf * j.squaredNorm() * f.length;
      continue;
    }
    if (f.label->kind == BoundaryKind::Dirichlet)
      continue;
    const std::vector<FacePoint> pts = face_points(mesh, fi, kContactQuadPoints);
    const Vec2 sn = sig[f.elem[0]] * f.normal;
    if (f.label->kind == BoundaryKind::Neumann) {
      for (int c = 0; c < 2; ++c) {
        std::vector<double> g(pts.size());
        for (std::size_t q = 0; q < pts.size(); ++q)
          g[q] = data.neumann_value(f.label->tag, pts[q].x)[c];
        const Eigen::VectorXd pc = project_points(pts, g, 2);
        face[fi][Neu] += hf * face_norm2(pts, [&](std::size_t q) { return sq(sn[c] - poly(pc, pts[q].s)); });
      }
      continue;
    }
    const int slot = ct.face_slot[fi];
    for (int k = 0; k < 2; ++k) {
      const Vec2 dir = k == 0 ? f.normal : f.tangent;
      std::vector<double> v(pts.size());
      for (std::size_t q = 0; q < pts.size(); ++q)
        v[q] = ct.dis[slot][q].dot(dir);
      const Eigen::VectorXd pc = project_points(pts, v, 2);
      face[fi][k == 0 ? Cnt : Frc] =
          hf * face_norm2(pts, [&](std::size_t q) { return sq(sn.dot(dir) - poly(pc, pts[q].s)); });
    }
  }

  std::vector<double> out(ne);
  for (int t = 0; t < ne; ++t) {
    const std::vector<int> nb = mesh.element_neighbourhood(t);
    std::vector<int> faces;
    double v = 0.0;
    for (int s : nb) {
      v += vol[s];
      for (int k = 0; k < 3; ++k)
        faces.push_back(mesh.element_face(s, k));
    }
    std::sort(faces.begin(), faces.end());
    faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
    std::array<double, 4> acc{0, 0, 0, 0};
    for (int fi : faces)
      for (int k = 0; k < 4; ++k)
        acc[k] += face[fi][k];
    out[t] = std::sqrt(v) + std::sqrt(acc[0]) + std::sqrt(acc[1]) + std::sqrt(acc[2]) +
             std::sqrt(acc[3]);
  }
  return out;
}

ErrorNorms error_norms(const FeFunction& u, const FeFunction& uref, const Material& m) {
  const Mesh& fine = uref.space().mesh();
  const Mesh& coarse = u.space().mesh();
  const bool same = &fine == &coarse;
  const PointLocator loc(coarse);
  const TriangleRule rule = triangle_rule(2 * std::max(u.space().degree(), uref.space().degree()));
  ErrorNorms n;
  for (int t = 0; t < fine.num_elements(); ++t) {
    const double area = fine.area(t);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& b = rule.points[q];
      int tc = t;
      std::array<double, 3> bc = b;
      if (!same) {
        tc = loc.locate(fine.map_point(t, b), &bc);
        if (tc < 0)
          throw PointLocationError("error_norms: quadrature point outside the mesh", t);
      }
      const Vec2 e = uref.value(t, b) - u.value(tc, bc);
      const Mat2 g = uref.gradient(t, b) - u.gradient(tc, bc);
      const double w = rule.weights[q] * area;
      n.l2 += w * e.squaredNorm();
      n.h1_semi += w * g.squaredNorm();
      n.energy += w * frob(stress_from_gradient(g, m), strain(g));
    }
  }
  n.h1 = std::sqrt(n.l2 + n.h1_semi);
  n.l2 = std::sqrt(n.l2);
  n.h1_semi = std::sqrt(n.h1_semi);
  n.energy = std::sqrt(n.energy);
  return n;
}

SurrogateBounds surrogate_bounds(const FeFunction& u, const FeFunction& uref,
                                 const ProblemData& data, double eta_tot) {
  const Mesh& mesh = u.space().mesh();
  const Material& m = data.material;
  const double en = error_norms(u, uref, m).energy;
  SurrogateBounds b;
  const PointLocator loc(uref.space().mesh());
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    if (!f.label || f.label->kind != BoundaryKind::Contact)
      continue;
    double cn = 0.0, cf = 0.0;
    for (const FacePoint& p : face_points(mesh, fi, 12)) {
      const ContactState st = contact_state(trace_at(u, p, data), m, data.friction);
      std::array<double, 3> br{};
      const int tr = loc.locate(p.x, &br);
      if (tr < 0)
        throw PointLocationError("surrogate_bounds: contact point outside the reference mesh", fi);
      const Vec2 sn = stress_from_gradient(uref.gradient(tr, br), m) * f.normal;
      cn += p.weight * sq(sn.dot(f.normal) - st.pn_neg);
      cf += p.weight * sq(sn.dot(f.tangent) - st.pt_proj);
    }
    b.contact_term += f.length * cn;
    b.friction_term += f.length * cf;
  }
  b.contact_term = std::sqrt(b.contact_term);
  b.friction_term = std::sqrt(b.friction_term);
  b.lower = std::sqrt(m.mu()) * en;
  b.upper = std::sqrt(2.0 * m.lambda() + 4.0 * m.mu()) * en + b.contact_term + b.friction_term;
  b.defined = b.lower > 0.0;
  if (b.defined) {
    b.eff_low = eta_tot / b.lower;
    b.eff_up = eta_tot / b.upper;
  }
  return b;
}

ContactInterval contact_interval(const FeFunction& u, const ProblemData& data, double rel_tol) {
  const Mesh& mesh = u.space().mesh();
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  double hmax = 0.0;
  for (int t = 0; t < mesh.num_elements(); ++t)
    hmax = std::max(hmax, mesh.diameter(t));
  std::vector<int> faces;
  for (int fi = 0; fi < mesh.num_faces(); ++fi) {
    const Face& f = mesh.face(fi);
    if (f.label && f.label->kind == BoundaryKind::Contact) {
      faces.push_back(fi);
      for (int v : f.v) {
        lo = lo.cwiseMin(mesh.vertex(v));
        hi = hi.cwiseMax(mesh.vertex(v));
      }
    }
  }
  ContactInterval ci;
  if (faces.empty())
    return ci;
  const int axis = (hi - lo).x() >= (hi - lo).y() ? 0 : 1;
  const double tol = rel_tol * hmax;
  // (coordinate, u^n + tol, in contact)
  struct Sample {
    double x, gap;
    bool in;
  };
  std::vector<Sample> pts;
  for (int fi : faces) {
    const Face& f = mesh.face(fi);
    const int t = f.elem[0];
    const auto& tri = mesh.triangle(t);
    for (int v : f.v) {
      std::array<double, 3> b{0, 0, 0};
      for (int i = 0; i < 3; ++i)
        b[i] = tri[i] == v ? 1.0 : 0.0;
      const double g = u.value(t, b).dot(f.normal) + tol;
      pts.push_back({mesh.vertex(v)[axis], g, g >= 0.0});
    }
    for (const FacePoint& p : face_points(mesh, fi, kContactQuadPoints)) {
      const ContactState st = contact_state(trace_at(u, p, data), data.material, data.friction);
      const double g = st.u_n + tol;
      pts.push_back({p.x[axis], g, st.normal_active || g >= 0.0});
    }
  }
  std::sort(pts.begin(), pts.end(), [](const Sample& a, const Sample& b) { return a.x < b.x; });
  int first = -1, last = -1;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i)
    if (pts[i].in) {
      if (first < 0)
        first = i;
      last = i;
    }
  if (first < 0)
    return ci;
  auto crossing = [&](int in, int out) {
    const Sample& a = pts[in];
    const Sample& b = pts[out];
    if (a.gap >= 0.0 && b.gap < 0.0)
      return a.x + (b.x - a.x) * a.gap / (a.gap - b.gap);
    return a.x;
  };
  ci.empty = false;
  ci.left = first > 0 ? crossing(first, first - 1) : pts[first].x;
  ci.right = last + 1 < static_cast<int>(pts.size()) ? crossing(last, last + 1) : pts[last].x;
  return ci;
}

} // namespace nitsche
