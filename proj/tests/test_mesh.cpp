#include <doctest.h>

#include "nitsche/mesh.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace nitsche;

namespace {

const BoundaryLabel D{BoundaryKind::Dirichlet, 0};
const BoundaryLabel C{BoundaryKind::Contact, 0};
const BoundaryLabel N0{BoundaryKind::Neumann, 0};
const BoundaryLabel N1{BoundaryKind::Neumann, 1};

Mesh unit_square(int n, DiagonalPattern p = DiagonalPattern::Uniform) {
  // Dirichlet on the left, contact on the right, traction free elsewhere.
  return build_rectangle_mesh(0, 1, 0, 1, n, n, {N0, C, N0, D}, p);
}

int count_label(const Mesh& m, const BoundaryLabel& l) {
  int c = 0;
  for (const Face& f : m.faces())
    if (f.label && *f.label == l)
      ++c;
  return c;
}

} // namespace

TEST_CASE("rectangle mesh counts") {
  Mesh m = unit_square(1);
  CHECK(m.num_elements() == 2);
  CHECK(m.num_vertices() == 4);
  CHECK(m.num_faces() == 5);

  Mesh m4 = unit_square(4);
  CHECK(m4.num_elements() == 32);
  CHECK(m4.num_vertices() == 25);
  CHECK(count_label(m4, C) == 4);
  CHECK(count_label(m4, D) == 4);
  CHECK(count_label(m4, N0) == 8);
  CHECK(m4.total_area() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(check_conformity(m4).empty());
}

TEST_CASE("vertex patches and element neighbourhoods on a regular grid") {
  Mesh m = unit_square(4);
  const int centre = 2 * 5 + 2;
  CHECK(m.vertex_elements(centre).size() == 6);
  // An element touching only interior vertices.
  int interior = -1;
  for (int t = 0; t < m.num_elements() && interior < 0; ++t) {
    bool ok = true;
    for (int v : m.triangle(t))
      ok = ok && !m.is_boundary_vertex(v);
    if (ok)
      interior = t;
  }
  REQUIRE(interior >= 0);
  CHECK(m.element_neighbourhood(interior).size() == 13);
  // Corner (1,0): the uniform pattern leaves one triangle there, the centred one two.
  CHECK(m.vertex_elements(4).size() == 1);
  CHECK(m.vertex_elements(0).size() == 2);
  Mesh c = unit_square(4, DiagonalPattern::Centred);
  for (int corner : {0, 4, 20, 24})
    CHECK(c.vertex_elements(corner).size() == 2);
}

TEST_CASE("faces carry lower-id orientation and outward boundary normals") {
  Mesh m = unit_square(3, DiagonalPattern::Centred);
  for (const Face& f : m.faces()) {
    CHECK(f.normal.norm() == doctest::Approx(1.0));
    CHECK(f.tangent.dot(f.normal) == doctest::Approx(0.0));
    const Vec2 mid = 0.5 * (m.vertex(f.v[0]) + m.vertex(f.v[1]));
    const Vec2 into0 = m.centroid(f.elem[0]) - mid;
    CHECK(into0.dot(f.normal) < 0.0);
    if (!f.is_boundary()) {
      CHECK(f.elem[0] < f.elem[1]);
      CHECK((m.centroid(f.elem[1]) - mid).dot(f.normal) > 0.0);
    }
  }
  // Bottom edges: n = (0,-1), t = (1,0).
  for (const Face& f : m.faces())
    if (f.is_boundary() && std::abs(m.vertex(f.v[0]).y()) < 1e-14 &&
        std::abs(m.vertex(f.v[1]).y()) < 1e-14) {
      CHECK(f.normal.y() == doctest::Approx(-1.0));
      CHECK(f.tangent.x() == doctest::Approx(1.0));
    }
}

TEST_CASE("bisection of a single element") {
  Mesh m = unit_square(2);
  Mesh r = refine(m, {3});
  CHECK(check_conformity(r).empty());
  CHECK(r.total_area() == doctest::Approx(m.total_area()).epsilon(1e-14));
  int children = 0;
  for (int t = 0; t < r.num_elements(); ++t)
    if (r.parent(t) == 3)
      ++children;
  CHECK(children >= 2);
  CHECK(r.num_elements() > m.num_elements());
  CHECK_THROWS_AS(refine(m, {99}), Error);
  // Empty marking is a no-op.
  Mesh same = refine(m, {});
  CHECK(same.num_elements() == m.num_elements());
}

TEST_CASE("uniform refinement multiplies the element count by four") {
  Mesh m = build_rectangle_mesh(-1, 1, 0, 1, 4, 2, {C, N0, D, N1}, DiagonalPattern::Centred);
  for (int level = 0; level < 3; ++level) {
    Mesh r = refine_uniform(m);
    CHECK(r.num_elements() == 4 * m.num_elements());
    CHECK(check_conformity(r).empty());
    CHECK(r.total_area() == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(mesh_stats(r).hmax == doctest::Approx(0.5 * mesh_stats(m).hmax));
    m = std::move(r);
  }
}

TEST_CASE("twelve rounds of local refinement keep the mesh conforming and shape regular") {
  Mesh m = unit_square(2, DiagonalPattern::Centred);
  const double a0 = m.total_area();
  for (int round = 0; round < 12; ++round) {
    // Refine towards the corner (1,0).
    std::vector<int> marked;
    for (int t = 0; t < m.num_elements(); ++t)
      if ((m.centroid(t) - Vec2(1.0, 0.0)).norm() < 0.3 || t % 17 == round % 17)
        marked.push_back(t);
    Mesh r = refine(m, marked);
    CHECK(check_conformity(r).empty());
    CHECK(r.total_area() == doctest::Approx(a0).epsilon(1e-12));
    CHECK(mesh_stats(r).min_angle_deg > 44.99);
    for (int t : marked) {
      int kids = 0;
      for (int c = 0; c < r.num_elements(); ++c)
        kids += r.parent(c) == t;
      CHECK(kids >= 2);
    }
    m = std::move(r);
  }
  CHECK(mesh_stats(m).hmin < 0.03);
}

TEST_CASE("boundary labels are inherited by bisected edges") {
  Mesh m = unit_square(2);
  Mesh r = refine_uniform(refine_uniform(m));
  CHECK(count_label(r, C) == 8);
  CHECK(count_label(r, D) == 8);
  CHECK(count_label(r, N0) == 16);
}

TEST_CASE("text format round trip") {
  Mesh m = refine(unit_square(3, DiagonalPattern::Centred), {0, 5});
  std::stringstream ss;
  write_mesh(ss, m);
  const std::string first = ss.str();
  Mesh back = read_mesh(ss);
  std::stringstream again;
  write_mesh(again, back);
  CHECK(again.str() == first);
  REQUIRE(back.num_vertices() == m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) {
    CHECK(back.vertex(v).x() == m.vertex(v).x());
    CHECK(back.vertex(v).y() == m.vertex(v).y());
  }
  CHECK(back.triangles() == m.triangles());
  CHECK(back.boundary_labels() == m.boundary_labels());
}

TEST_CASE("parse errors name the line") {
  std::stringstream ss("mesh2d v1\nvertices 3\n0 0\n1 0\n0 1\nboundary 0\n");
  try {
    read_mesh(ss);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 6);
    CHECK(std::string(e.what()).find("triangles") != std::string::npos);
  }
  std::stringstream bad("mesh2d v1\nvertices 1\n0 zero\n");
  CHECK_THROWS_AS(read_mesh(bad), ParseError);
  std::stringstream lab("mesh2d v1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 3\n"
                        "0 1 D\n1 2 X\n0 2 D\n");
  CHECK_THROWS_AS(read_mesh(lab), ParseError);
}

TEST_CASE("hanging vertices and clockwise elements are rejected") {
  // Left square split in two, right square split at its left edge midpoint.
  std::vector<Vec2> v{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {2, 0}, {2, 1}, {1, 0.5}};
  std::vector<std::array<int, 3>> t{{0, 1, 2}, {0, 2, 3}, {1, 4, 6}, {6, 4, 5}, {6, 5, 2}};
  std::map<EdgeKey, BoundaryLabel> b;
  for (auto [p, q] : std::vector<EdgeKey>{{0, 1}, {1, 4}, {4, 5}, {5, 2}, {2, 3}, {3, 0}})
    b[edge_key(p, q)] = D;
  CHECK_THROWS_AS(Mesh(v, t, b), Error);
  std::vector<std::array<int, 3>> cw{{0, 2, 1}};
  CHECK_THROWS_AS(Mesh({{0, 0}, {1, 0}, {0, 1}}, cw, {}), Error);
}

TEST_CASE("point location") {
  Mesh m = unit_square(4, DiagonalPattern::Centred);
  PointLocator loc(m);
  std::array<double, 3> b;
  for (int t = 0; t < m.num_elements(); ++t) {
    const int found = loc.locate(m.centroid(t), &b);
    CHECK(found == t);
    CHECK(b[0] == doctest::Approx(1.0 / 3.0));
  }
  CHECK(loc.locate(Vec2(1.5, 0.5)) == -1);
  // A shared vertex resolves to the lowest element id.
  CHECK(loc.locate(m.vertex(12)) == m.vertex_elements(12).front());
}
