#pragma once

#include "nitsche/types.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nitsche {

enum class BoundaryKind { Dirichlet, Neumann, Contact };

struct BoundaryLabel {
  BoundaryKind kind = BoundaryKind::Neumann;
  int tag = 0; // distinguishes Neumann parts (N0, N1, ...)

  bool operator==(const BoundaryLabel&) const = default;
};

std::string to_string(const BoundaryLabel& label);
BoundaryLabel parse_boundary_label(const std::string& text);

// An edge. For interior faces elem[0] < elem[1] and the normal points from
// elem[0] into elem[1]; boundary faces have elem[1] == -1 and the outward normal.
struct Face {
  std::array<int, 2> v{-1, -1}; // v[0] < v[1]
  std::array<int, 2> elem{-1, -1};
  std::array<int, 2> local{-1, -1}; // local face index inside elem[i]
  std::optional<BoundaryLabel> label;
  Vec2 normal = Vec2::Zero();
  Vec2 tangent = Vec2::Zero(); // normal rotated by +90 degrees
  double length = 0.0;

  bool is_boundary() const { return elem[1] < 0; }
};

using EdgeKey = std::pair<int, int>;
inline EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

// Conforming triangulation. Triangles are counter-clockwise; local face i is
// opposite local vertex i and local face 0, (v1,v2), is the refinement edge.
class Mesh {
public:
  Mesh() = default;
  Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
       std::map<EdgeKey, BoundaryLabel> boundary, std::vector<int> parents = {});

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_elements() const { return static_cast<int>(triangles_.size()); }
  int num_faces() const { return static_cast<int>(faces_.size()); }

  const Vec2& vertex(int i) const { return vertices_[i]; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const Face& face(int f) const { return faces_[f]; }
  const std::vector<Face>& faces() const { return faces_; }
  int element_face(int t, int local) const { return element_faces_[t][local]; }
  const std::map<EdgeKey, BoundaryLabel>& boundary_labels() const { return boundary_; }
  int face_index(int a, int b) const;

  // Parent element in the mesh this one was refined from, -1 for an initial mesh.
  int parent(int t) const { return parents_.empty() ? -1 : parents_[t]; }
  const std::vector<int>& parents() const { return parents_; }

  double area(int t) const { return areas_[t]; }
  double diameter(int t) const;
  Vec2 centroid(int t) const;
  // Gradients of the barycentric coordinates.
  std::array<Vec2, 3> barycentric_gradients(int t) const;
  Vec2 map_point(int t, const std::array<double, 3>& bary) const;

  // Elements sharing vertex v, ascending.
  const std::vector<int>& vertex_elements(int v) const { return vertex_elements_[v]; }
  bool is_boundary_vertex(int v) const { return boundary_vertex_[v]; }
  bool is_dirichlet_vertex(int v) const { return dirichlet_vertex_[v]; }

  // Elements sharing at least one vertex with t (t included), ascending.
  std::vector<int> element_neighbourhood(int t) const;

  double total_area() const;

private:
  void build();

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::map<EdgeKey, BoundaryLabel> boundary_;
  std::vector<int> parents_;
  std::vector<Face> faces_;
  std::vector<std::array<int, 3>> element_faces_;
  std::map<EdgeKey, int> face_lookup_;
  std::vector<double> areas_;
  std::vector<std::vector<int>> vertex_elements_;
  std::vector<char> boundary_vertex_;
  std::vector<char> dirichlet_vertex_;
};

enum class DiagonalPattern {
  Uniform,    // every cell split along (i,j)-(i+1,j+1)
  Alternating,
  Centred,    // diagonals point towards the domain centre, so every corner has two triangles
};

struct SideLabels {
  BoundaryLabel bottom, right, top, left;
};

Mesh build_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny,
                          const SideLabels& labels,
                          DiagonalPattern pattern = DiagonalPattern::Centred);

// Newest-vertex bisection of the marked elements plus the closure needed for
// conformity. Parents of the result refer to element ids of `mesh`.
Mesh refine(const Mesh& mesh, const std::vector<int>& marked);
// Every element bisected twice: element count times four.
Mesh refine_uniform(const Mesh& mesh);

// "mesh2d v1" text format.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
void save_mesh(const std::string& path, const Mesh& mesh);
Mesh load_mesh(const std::string& path);

struct MeshStats {
  int vertices = 0, elements = 0, faces = 0;
  std::map<std::string, int> boundary_faces; // by label
  double hmin = 0.0, hmax = 0.0, area = 0.0;
  double min_angle_deg = 0.0;
};
MeshStats mesh_stats(const Mesh& mesh);

// Returns an empty string when the mesh is conforming and consistent.
std::string check_conformity(const Mesh& mesh);

// Uniform-grid bucket search over element bounding boxes.
class PointLocator {
public:
  explicit PointLocator(const Mesh& mesh);
  // Lowest element id containing p (within tol in barycentric coordinates), or -1.
  int locate(const Vec2& p, std::array<double, 3>* bary = nullptr, double tol = 1e-10) const;

private:
  const Mesh* mesh_;
  Vec2 lo_, hi_;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

std::array<double, 3> barycentric(const Mesh& mesh, int t, const Vec2& p);

} // namespace nitsche
