#include <doctest.h>

#include "fixtures.hpp"
#include "nitsche/estimators.hpp"

using namespace nitsche;
using namespace fixtures;

namespace {

Mesh single(const Vec2& a, const Vec2& b, const Vec2& c) {
  return Mesh({a, b, c}, {{{0, 1, 2}}},
              {{edge_key(0, 1), N0}, {edge_key(1, 2), N0}, {edge_key(0, 2), N0}});
}

std::pair<FeFunction, FeFunction> iterates(const ProblemData& d, int k) {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(8, 4), 1);
  FeFunction prev(space);
  for (int i = 0; i < k; ++i)
    prev = solve(assemble_newton_system(prev, d));
  return {solve(assemble_newton_system(prev, d)), prev};
}

} // namespace

TEST_CASE("trace constant") {
  const Mesh ref = single({0, 0}, {1, 0}, {0, 1});
  const double c = trace_constant(ref, 0, 0);
  CHECK(c > 0.0);
  CHECK(trace_constant(ref, 0, 0) == c);
  // Invariance under scaling and rigid motions.
  const double th = 0.7;
  auto map = [&](const Vec2& x) {
    return Vec2(3.0 * (std::cos(th) * x.x() - std::sin(th) * x.y()) + 5.0,
                3.0 * (std::sin(th) * x.x() + std::cos(th) * x.y()) - 2.0);
  };
  const Mesh moved = single(map({0, 0}), map({1, 0}), map({0, 1}));
  CHECK(trace_constant(moved, 0, 0) == doctest::Approx(c).epsilon(1e-10));
  // Higher degree oracle.
  const double hi = trace_constant(ref, 0, 0, 7);
  CHECK(hi >= c * (1.0 - 1e-12));
  CHECK(std::abs(hi - c) <= 0.05 * hi);
  for (int f = 0; f < 3; ++f)
    CHECK(trace_constant(ref, 0, f) > 0.0);
}

TEST_CASE("estimators on Newton iterates") {
  for (FrictionLaw law : {FrictionLaw::Tresca, FrictionLaw::Coulomb}) {
    const ProblemData d = rect_data(law);
    const auto [uk, up] = iterates(d, 1);
    const IterateEstimate est = estimate_iterate(uk, up, d);
    const EstimatorTable& tab = est.table;
    CHECK(tab.rewrite_defect <= 1e-9);
    // Constant f and constant g: oscillation and Neumann estimators vanish.
    CHECK(tab.global.osc_rw == 0.0);
    CHECK(tab.global.osc <= 1e-12 * tab.global.tot);
    CHECK(tab.global.neu <= 1e-12 * tab.global.tot);
    CHECK(tab.global.cnt > 0.0);
    CHECK(tab.global.lin > 0.0);
    CHECK(tab.bound >= tab.global.tot * (1.0 - 1e-14));
    double sum = 0.0;
    for (const ElementEstimators& e : tab.local) {
      CHECK(e.tot == doctest::Approx(std::hypot(e.osc + e.str + e.lin1 + e.neu,
                                                e.cnt + e.frc + e.lin2n + e.lin2t)));
      CHECK(e.lin == doctest::Approx(e.lin1 + std::hypot(e.lin2n, e.lin2t)));
      CHECK(std::min({e.osc, e.str, e.lin1, e.lin2n, e.lin2t, e.neu, e.cnt, e.frc}) >= 0.0);
      sum += e.cnt * e.cnt;
    }
    CHECK(tab.global.cnt * tab.global.cnt == doctest::Approx(sum).epsilon(1e-12));
    const IterationEstimate it = tab.iteration_estimate();
    CHECK(it.lin_local.size() == tab.local.size());
  }
}

TEST_CASE("non-constant load gives matching oscillation expressions") {
  ProblemData d = rect_data(FrictionLaw::Tresca);
  d.f = [](const Vec2& x) { return Vec2(0.01 * x.x(), -0.02 * (1.0 + x.y() * x.y())); };
  d.g_neumann[1] = [](const Vec2& x) { return Vec2(-0.028 * (1.0 + x.y()), 0.01 * x.y() * x.y()); };
  const auto [uk, up] = iterates(d, 2);
  const IterateEstimate est = estimate_iterate(uk, up, d);
  CHECK(est.table.global.osc > 0.0);
  CHECK(est.table.global.neu > 0.0);
  CHECK(est.table.rewrite_defect <= 1e-9);
  CHECK(est.table.global.osc == doctest::Approx(est.table.global.osc_rw).epsilon(1e-9));
  CHECK(est.table.global.neu == doctest::Approx(est.table.global.neu_rw).epsilon(1e-9));
}

TEST_CASE("error norms") {
  auto mesh = std::make_shared<const Mesh>(
      build_rectangle_mesh(0, 1, 0, 1, 2, 2, {N0, N0, N0, N0}, DiagonalPattern::Centred));
  auto fine = std::make_shared<const Mesh>(refine_uniform(*mesh));
  Material m{1.0, 0.3};
  auto p1 = std::make_shared<const LagrangeSpace>(mesh, 1);
  auto p2 = std::make_shared<const LagrangeSpace>(fine, 2);
  const FeFunction zero(p1);
  const FeFunction ux = interpolate(p2, [](const Vec2& x) { return Vec2(x.x(), 0.0); });
  const ErrorNorms n = error_norms(zero, ux, m);
  CHECK(n.energy * n.energy == doctest::Approx(m.lambda() + 2.0 * m.mu()).epsilon(1e-12));
  CHECK(n.h1_semi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.l2 * n.l2 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const FeFunction same = interpolate(p1, [](const Vec2& x) { return Vec2(x.x(), 0.0); });
  CHECK(error_norms(same, ux, m).h1 <= 1e-13);
  CHECK(error_norms(same, same, m).h1 == 0.0);
  const FeFunction quad = interpolate(p1, [](const Vec2& x) { return Vec2(x.x() * x.y(), x.y()); });
  CHECK(error_norms(quad, same, m).energy == doctest::Approx(error_norms(same, quad, m).energy).epsilon(1e-14));
  CHECK(error_norms(quad, ux, m).h1 > 0.0);
}

TEST_CASE("surrogate bounds") {
  const ProblemData d = rect_data(FrictionLaw::Tresca);
  const auto [uk, up] = iterates(d, 3);
  SurrogateBounds self = surrogate_bounds(uk, uk, d, 1.0);
  CHECK_FALSE(self.defined);
  CHECK(self.lower == 0.0);
  CHECK(self.upper == doctest::Approx(self.contact_term + self.friction_term));
  const SurrogateBounds b = surrogate_bounds(up, uk, d, 1.0);
  REQUIRE(b.defined);
  const Material& m = d.material;
  CHECK(b.upper >= std::sqrt((2.0 * m.lambda() + 4.0 * m.mu()) / m.mu()) * b.lower);
  CHECK(b.eff_low == doctest::Approx(1.0 / b.lower));
}

TEST_CASE("residual based estimator") {
  // Linear field with matching tractions: every term vanishes.
  auto mesh = std::make_shared<const Mesh>(
      build_rectangle_mesh(0, 2, 0, 1, 4, 2, {N0, N1, N0, D}, DiagonalPattern::Centred));
  ProblemData d;
  Mat2 g = Mat2::Zero();
  g(0, 0) = 0.01;
  const Mat2 sig = stress_from_gradient(g, d.material);
  d.g_neumann[0] = [sig](const Vec2& x) { return Vec2(sig * Vec2(0.0, x.y() > 0.5 ? 1.0 : -1.0)); };
  d.g_neumann[1] = constant_field(Vec2(sig * Vec2(1.0, 0.0)));
  auto space = std::make_shared<const LagrangeSpace>(mesh, 1);
  const FeFunction u = interpolate(space, [](const Vec2& x) { return Vec2(0.01 * x.x(), 0.0); });
  for (double v : eta_sharp(u, d))
    CHECK(v <= 1e-14);

  // One kinked face: the jump term alone.
  const BoundaryLabel lab = D;
  auto two = std::make_shared<const Mesh>(
      Mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{{0, 1, 2}}, {{0, 2, 3}}},
           {{edge_key(0, 1), lab}, {edge_key(1, 2), lab}, {edge_key(2, 3), lab}, {edge_key(0, 3), lab}}));
  auto sp = std::make_shared<const LagrangeSpace>(two, 1);
  FeFunction k(sp);
  k.coeffs()[2 * 1] = 0.1;
  const std::vector<double> es = eta_sharp(k, d);
  const int fd = two->face_index(0, 2);
  const Face& f = two->face(fd);
  const Vec2 jump = (stress_from_gradient(k.gradient(0, {1, 0, 0}), d.material) -
                     stress_from_gradient(k.gradient(1, {1, 0, 0}), d.material)) * f.normal;
  const double expect = std::sqrt(f.length) * jump.norm() * std::sqrt(f.length);
  CHECK(es[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(es[1] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("contact interval") {
  auto space = std::make_shared<const LagrangeSpace>(rect_mesh(8, 4), 1);
  const ContactInterval full = contact_interval(FeFunction(space), rect_data(FrictionLaw::Tresca));
  REQUIRE_FALSE(full.empty);
  CHECK(full.left == -1.0);
  CHECK(full.right == 1.0);
  // Lifted body: u^n = -u_y < 0 away from x in [-0.25, 0.25].
  const FeFunction lift = interpolate(space, [](const Vec2& x) {
    return Vec2(0.0, std::max(std::abs(x.x()) - 0.25, 0.0) * 0.1);
  });
  const ContactInterval part = contact_interval(lift, rect_data(FrictionLaw::Tresca));
  REQUIRE_FALSE(part.empty);
  CHECK(part.left == doctest::Approx(-0.25).epsilon(1e-3));
  CHECK(part.right == doctest::Approx(0.25).epsilon(1e-3));
  const FeFunction up = interpolate(space, [](const Vec2&) { return Vec2(0.0, 0.1); });
  CHECK(contact_interval(up, rect_data(FrictionLaw::Tresca)).empty);
}
