#include <doctest.h>

#include "fixtures.hpp"
#include "nitsche/newton.hpp"

#include <Eigen/SparseCholesky>

#include <random>

using namespace nitsche;
using namespace fixtures;

namespace {

double max_abs(const SparseMatrix& a) {
  double m = 0.0;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      m = std::max(m, std::abs(it.value()));
  return m;
}

FeFunction random_function(std::shared_ptr<const LagrangeSpace> space, double scale, int seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  FeFunction u(space);
  for (Index i = 0; i < space->num_dofs(); ++i)
    if (!space->is_constrained_dof(i))
      u.coeffs()[i] = d(rng);
  return u;
}

} // namespace

TEST_CASE("elasticity matrix is symmetric and positive definite after reduction") {
  for (int p : {1, 2}) {
    auto space = std::make_shared<const LagrangeSpace>(rect_mesh(6, 3), p);
    const SparseMatrix k = assemble_stiffness(*space, Material{1.0, 0.3});
    const SparseMatrix diff = SparseMatrix(k - SparseMatrix(k.transpose()));
    CHECK(max_abs(diff) <= 1e-13 * max_abs(k));
    Eigen::SimplicialLLT<SparseMatrix> llt(reduce(*space, k));
    CHECK(llt.info() == Eigen::Success);
    // Rigid motions lie in the kernel of the unreduced matrix.
    for (int mode = 0; mode < 3; ++mode) {
      Eigen::VectorXd r(space->num_dofs());
      for (int n = 0; n < space->num_nodes(); ++n) {
        const Vec2 x = space->node_position(n);
        const Vec2 v = mode == 0 ? Vec2(1, 0) : mode == 1 ? Vec2(0, 1) : Vec2(x.y(), -x.x());
        r[2 * n] = v.x();
        r[2 * n + 1] = v.y();
      }
      CHECK((k * r).norm() <= 1e-12 * max_abs(k) * r.norm());
    }
  }
}

TEST_CASE("stiffness of a single reference element") {
  // Oracle: a(u,u) = integral of sigma(u):eps(u) for a linear field on T.
  auto mesh = std::make_shared<const Mesh>(
      Mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}},
           {{edge_key(0, 1), N0}, {edge_key(1, 2), N0}, {edge_key(0, 2), N0}}));
  auto space = std::make_shared<const LagrangeSpace>(mesh, 1);
  Material m{2.0, 0.25};
  const SparseMatrix k = assemble_stiffness(*space, m);
  Mat2 g;
  g << 0.3, -0.7, 1.1, 0.4;
  auto lin = [&](const Vec2& x) { return Vec2(g * x); };
  const FeFunction u = interpolate(space, lin);
  const double energy = u.coeffs().dot(k * u.coeffs());
  CHECK(energy == doctest::Approx(0.5 * frob(stress_from_gradient(g, m), strain(g))).epsilon(1e-14));
}

TEST_CASE("linear patch test without contact") {
  // u = (c x, 0) vanishes on x = 0; constant stress, no body force.
  const double c = 0.01;
  auto mesh = std::make_shared<const Mesh>(
      build_rectangle_mesh(0, 2, 0, 1, 6, 3, {N0, N1, N0, D}, DiagonalPattern::Alternating));
  ProblemData d;
  d.material = {1.0, 0.3};
  Mat2 g = Mat2::Zero();
  g(0, 0) = c;
  const Mat2 sig = stress_from_gradient(g, d.material);
  d.g_neumann[0] = [sig](const Vec2& x) {
    return Vec2(sig * Vec2(0.0, x.y() > 0.5 ? 1.0 : -1.0));
  };
  d.g_neumann[1] = constant_field(Vec2(sig * Vec2(1.0, 0.0)));
  for (int p : {1, 2}) {
    auto space = std::make_shared<const LagrangeSpace>(mesh, p);
    const FeFunction uh = solve(assemble_elasticity_system(space, d));
    const FeFunction exact = interpolate(space, [c](const Vec2& x) { return Vec2(c * x.x(), 0.0); });
    CHECK((uh.coeffs() - exact.coeffs()).norm() <= 1e-12 * exact.coeffs().norm());
  }
}

TEST_CASE("load vector integrates the data") {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(4, 2), 2);
  ProblemData d = rect_data(FrictionLaw::Tresca);
  const Eigen::VectorXd l = assemble_load(*space, d);
  double fx = 0.0, fy = 0.0;
  for (int n = 0; n < space->num_nodes(); ++n) {
    fx += l[2 * n];
    fy += l[2 * n + 1];
  }
  CHECK(fy == doctest::Approx(-0.02 * 2.0).epsilon(1e-13));
  CHECK(fx == doctest::Approx(-0.028 * 1.0).epsilon(1e-13));
}

TEST_CASE("Newton matrix without active contact and without friction is the elasticity matrix") {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(6, 3), 1);
  ProblemData d = rect_data(FrictionLaw::Coulomb);
  // Lift the contact boundary and shear it: separated, slipping with S = 0.
  FeFunction u = interpolate(space, [](const Vec2& x) { return Vec2(0.01 * (1.0 - x.y()), 0.01 * (1.0 - x.y())); });
  const LinearSystem nw = assemble_newton_system(u, d);
  const LinearSystem el = assemble_elasticity_system(space, d);
  CHECK(max_abs(SparseMatrix(nw.matrix - el.matrix)) <= 1e-15 * max_abs(el.matrix));
  CHECK((nw.rhs - el.rhs).norm() <= 1e-15 * el.rhs.norm());
}

TEST_CASE("Newton matrix is nonsymmetric once contact is active") {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(6, 3), 1);
  ProblemData d = rect_data(FrictionLaw::Tresca);
  FeFunction u = interpolate(space, [](const Vec2& x) { return Vec2(0.0, -0.01 * (1.0 - x.y())); });
  const LinearSystem nw = assemble_newton_system(u, d);
  const SparseMatrix asym = SparseMatrix(nw.matrix - SparseMatrix(nw.matrix.transpose()));
  CHECK(max_abs(asym) > 1e-3 * max_abs(nw.matrix));
}

TEST_CASE("tangent matrix matches finite differences of the residual") {
  // Tresca friction: the generalised derivative is the classical one away from kinks.
  for (int p : {1, 2}) {
    auto space = std::make_shared<const LagrangeSpace>(rect_mesh(6, 3), p);
    ProblemData d = rect_data(FrictionLaw::Tresca);
    for (int seed = 0; seed < 3; ++seed) {
      const FeFunction u = random_function(space, 0.01, 10 + seed);
      const FeFunction delta = random_function(space, 1.0, 20 + seed);
      const LinearSystem sys = assemble_newton_system(u, d);
      const Eigen::VectorXd jd = sys.matrix * reduce(*space, delta.coeffs());
      const double eps = 1e-7;
      FeFunction up(space, u.coeffs() + eps * delta.coeffs());
      FeFunction um(space, u.coeffs() - eps * delta.coeffs());
      const Eigen::VectorXd fd =
          reduce(*space, (nitsche_residual(um, d) - nitsche_residual(up, d)) / (2.0 * eps));
      CHECK((fd - jd).norm() <= 1e-5 * jd.norm());
    }
  }
}

TEST_CASE("Coulomb tangent with a linearised threshold matches finite differences") {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(6, 3), 1);
  ProblemData d = rect_data(FrictionLaw::Coulomb);
  d.friction.linearize_threshold = true;
  for (int seed = 0; seed < 3; ++seed) {
    // Downward shift so that most contact points are active and slipping.
    FeFunction u = random_function(space, 0.01, 30 + seed);
    u = FeFunction(space, u.coeffs() + interpolate(space, [](const Vec2& x) {
                                         return Vec2(0.05 * (1.0 - x.y()), -0.02 * (1.0 - x.y()));
                                       }).coeffs());
    const FeFunction delta = random_function(space, 1.0, 40 + seed);
    const LinearSystem sys = assemble_newton_system(u, d);
    const Eigen::VectorXd jd = sys.matrix * reduce(*space, delta.coeffs());
    const double eps = 1e-7;
    FeFunction up(space, u.coeffs() + eps * delta.coeffs());
    FeFunction um(space, u.coeffs() - eps * delta.coeffs());
    const Eigen::VectorXd fd =
        reduce(*space, (nitsche_residual(um, d) - nitsche_residual(up, d)) / (2.0 * eps));
    CHECK((fd - jd).norm() <= 1e-5 * jd.norm());
    // Frozen threshold: the friction part of the derivative is missing.
    d.friction.linearize_threshold = false;
    const Eigen::VectorXd frozen = assemble_newton_system(u, d).matrix * reduce(*space, delta.coeffs());
    d.friction.linearize_threshold = true;
    CHECK((fd - frozen).norm() > 1e-3 * jd.norm());
  }
}

TEST_CASE("a converged Nitsche solution is a fixed point of the Newton step") {
  for (FrictionLaw law : {FrictionLaw::Tresca, FrictionLaw::Coulomb}) {
    auto space = std::make_shared<const LagrangeSpace>(rect_mesh(8, 4), 1);
    ProblemData d = rect_data(law);
    NewtonOptions opts;
    opts.mode = StoppingMode::ResidualOnly;
    opts.residual_tol = 1e-13;
    opts.max_iterations = 60;
    const NewtonResult r = newton_solve(FeFunction(space), d, opts);
    REQUIRE(r.converged);
    const FeFunction next = solve(assemble_newton_system(r.u, d));
    CHECK((next.coeffs() - r.u.coeffs()).norm() <= 1e-10 * r.u.coeffs().norm());
    // Newton step identity: A u_prev - b equals minus the residual.
    const LinearSystem sys = assemble_newton_system(r.u, d);
    const Eigen::VectorXd lhs = sys.matrix * reduce(*space, r.u.coeffs()) - sys.rhs;
    CHECK((lhs + reduce(*space, nitsche_residual(r.u, d))).norm() <= 1e-12 * sys.rhs.norm());
  }
}
