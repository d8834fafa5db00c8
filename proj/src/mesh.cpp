#include "nitsche/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace nitsche {

std::string to_string(const BoundaryLabel& label) {
  switch (label.kind) {
  case BoundaryKind::Dirichlet:
    return "D";
  case BoundaryKind::Contact:
    return "C";
  case BoundaryKind::Neumann:
    return "N" + std::to_string(label.tag);
  }
  return "?";
}

BoundaryLabel parse_boundary_label(const std::string& text) {
  if (text == "D")
    return {BoundaryKind::Dirichlet, 0};
  if (text == "C")
    return {BoundaryKind::Contact, 0};
  if (text.size() >= 2 && text[0] == 'N') {
    int tag = 0;
    auto [ptr, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), tag);
    if (ec == std::errc() && ptr == text.data() + text.size() && tag >= 0)
      return {BoundaryKind::Neumann, tag};
  }
  throw Error("unknown boundary label '" + text + "'");
}

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
           std::map<EdgeKey, BoundaryLabel> boundary, std::vector<int> parents)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)),
      boundary_(std::move(boundary)), parents_(std::move(parents)) {
  if (!parents_.empty() && parents_.size() != triangles_.size())
    throw Error("mesh: parent list size mismatch");
  build();
}

void Mesh::build() {
  const int nv = num_vertices();
  const int nt = num_elements();
  areas_.resize(nt);
  element_faces_.assign(nt, {-1, -1, -1});
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    for (int i : tri)
      if (i < 0 || i >= nv)
        throw Error("mesh: element " + std::to_string(t) + " references vertex " +
                    std::to_string(i) + " out of range");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw Error("mesh: element " + std::to_string(t) + " is degenerate");
    const Vec2 e1 = vertices_[tri[1]] - vertices_[tri[0]];
    const Vec2 e2 = vertices_[tri[2]] - vertices_[tri[0]];
    const double a = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
    if (!(a > 0.0))
      throw Error("mesh: element " + std::to_string(t) + " has non-positive signed area");
    areas_[t] = a;
  }

  faces_.clear();
  face_lookup_.clear();
  for (int t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    for (int i = 0; i < 3; ++i) {
      const int p = tri[(i + 1) % 3], q = tri[(i + 2) % 3];
      const EdgeKey key = edge_key(p, q);
      auto it = face_lookup_.find(key);
      if (it == face_lookup_.end()) {
        Face f;
        f.v = {key.first, key.second};
        f.elem = {t, -1};
        f.local = {i, -1};
        const Vec2 d = vertices_[q] - vertices_[p];
        f.length = d.norm();
        f.normal = Vec2(d.y(), -d.x()) / f.length;
        f.tangent = Vec2(-f.normal.y(), f.normal.x());
        face_lookup_.emplace(key, static_cast<int>(faces_.size()));
        element_faces_[t][i] = static_cast<int>(faces_.size());
        faces_.push_back(f);
      } else {
        Face& f = faces_[it->second];
        if (f.elem[1] >= 0)
          throw Error("mesh: edge (" + std::to_string(p) + "," + std::to_string(q) +
                      ") shared by more than two elements");
        f.elem[1] = t;
        f.local[1] = i;
        element_faces_[t][i] = it->second;
      }
    }
  }

  boundary_vertex_.assign(nv, 0);
  dirichlet_vertex_.assign(nv, 0);
  for (auto& [key, label] : boundary_) {
    auto it = face_lookup_.find(key);
    if (it == face_lookup_.end())
      throw Error("mesh: boundary entry (" + std::to_string(key.first) + "," +
                  std::to_string(key.second) + ") is not an edge");
    if (!faces_[it->second].is_boundary())
      throw Error("mesh: boundary entry (" + std::to_string(key.first) + "," +
                  std::to_string(key.second) + ") is an interior edge");
    faces_[it->second].label = label;
  }
  for (const Face& f : faces_) {
    if (!f.is_boundary())
      continue;
    if (!f.label)
      throw Error("mesh: boundary edge (" + std::to_string(f.v[0]) + "," +
                  std::to_string(f.v[1]) + ") has no label (hanging vertex or missing label)");
    for (int v : f.v) {
      boundary_vertex_[v] = 1;
      if (f.label->kind == BoundaryKind::Dirichlet)
        dirichlet_vertex_[v] = 1;
    }
  }

  vertex_elements_.assign(nv, {});
  for (int t = 0; t < nt; ++t)
    for (int v : triangles_[t])
      vertex_elements_[v].push_back(t);
}

int Mesh::face_index(int a, int b) const {
  auto it = face_lookup_.find(edge_key(a, b));
  return it == face_lookup_.end() ? -1 : it->second;
}

double Mesh::diameter(int t) const {
  double h = 0.0;
  for (int i = 0; i < 3; ++i)
    h = std::max(h, faces_[element_faces_[t][i]].length);
  return h;
}

Vec2 Mesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

std::array<Vec2, 3> Mesh::barycentric_gradients(int t) const {
  const auto& tri = triangles_[t];
  std::array<Vec2, 3> g;
  const double twice = 2.0 * areas_[t];
  for (int i = 0; i < 3; ++i) {
    const Vec2& p = vertices_[tri[(i + 1) % 3]];
    const Vec2& q = vertices_[tri[(i + 2) % 3]];
    g[i] = Vec2(p.y() - q.y(), q.x() - p.x()) / twice;
  }
  return g;
}

Vec2 Mesh::map_point(int t, const std::array<double, 3>& b) const {
  const auto& tri = triangles_[t];
  return b[0] * vertices_[tri[0]] + b[1] * vertices_[tri[1]] + b[2] * vertices_[tri[2]];
}

std::vector<int> Mesh::element_neighbourhood(int t) const {
  std::vector<int> out;
  for (int v : triangles_[t])
    out.insert(out.end(), vertex_elements_[v].begin(), vertex_elements_[v].end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (double x : areas_)
    a += x;
  return a;
}

Mesh build_rectangle_mesh(double x0, double x1, double y0, double y1, int nx, int ny,
                          const SideLabels& labels, DiagonalPattern pattern) {
  if (nx < 1 || ny < 1)
    throw Error("build_rectangle_mesh: nx and ny must be positive");
  if (!(x1 > x0) || !(y1 > y0))
    throw Error("build_rectangle_mesh: empty rectangle");
  std::vector<Vec2> verts;
  verts.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      verts.emplace_back(x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny);
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      bool slash = true;
      if (pattern == DiagonalPattern::Alternating)
        slash = (i + j) % 2 == 0;
      else if (pattern == DiagonalPattern::Centred) {
        const double cx = x0 + (x1 - x0) * (i + 0.5) / nx - xm;
        const double cy = y0 + (y1 - y0) * (j + 0.5) / ny - ym;
        slash = cx * cy >= 0.0;
      }
      if (slash) {
        tris.push_back({b, c, a});
        tris.push_back({d, a, c});
      } else {
        tris.push_back({a, b, d});
        tris.push_back({c, d, b});
      }
    }
  std::map<EdgeKey, BoundaryLabel> bnd;
  for (int i = 0; i < nx; ++i) {
    bnd[edge_key(id(i, 0), id(i + 1, 0))] = labels.bottom;
    bnd[edge_key(id(i, ny), id(i + 1, ny))] = labels.top;
  }
  for (int j = 0; j < ny; ++j) {
    bnd[edge_key(id(0, j), id(0, j + 1))] = labels.left;
    bnd[edge_key(id(nx, j), id(nx, j + 1))] = labels.right;
  }
  return Mesh(std::move(verts), std::move(tris), std::move(bnd));
}

namespace {

struct Leaf {
  std::array<int, 3> v;
  int parent;
};

} // namespace

Mesh refine(const Mesh& mesh, const std::vector<int>& marked) {
  std::vector<Vec2> verts = mesh.vertices();
  std::map<EdgeKey, BoundaryLabel> bnd = mesh.boundary_labels();
  std::vector<Leaf> leaves;
  leaves.reserve(2 * mesh.num_elements());
  for (int t = 0; t < mesh.num_elements(); ++t)
    leaves.push_back({mesh.triangle(t), t});

  std::map<EdgeKey, int> midpoints;
  std::vector<int> todo;
  for (int t : marked) {
    if (t < 0 || t >= mesh.num_elements())
      throw Error("refine: marked element " + std::to_string(t) + " out of range");
    todo.push_back(t);
  }
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());

  while (!todo.empty()) {
    for (int l : todo) {
      const auto [v0, v1, v2] = leaves[l].v;
      const EdgeKey key = edge_key(v1, v2);
      int m;
      auto it = midpoints.find(key);
      if (it != midpoints.end()) {
        m = it->second;
      } else {
        m = static_cast<int>(verts.size());
        verts.push_back(0.5 * (verts[v1] + verts[v2]));
        midpoints.emplace(key, m);
        auto b = bnd.find(key);
        if (b != bnd.end()) {
          const BoundaryLabel lab = b->second;
          bnd.erase(b);
          bnd[edge_key(v1, m)] = lab;
          bnd[edge_key(m, v2)] = lab;
        }
      }
      const int parent = leaves[l].parent;
      leaves[l].v = {m, v0, v1};
      leaves.push_back({{m, v2, v0}, parent});
    }
    todo.clear();
    for (int l = 0; l < static_cast<int>(leaves.size()); ++l) {
      const auto& v = leaves[l].v;
      for (int i = 0; i < 3; ++i)
        if (midpoints.count(edge_key(v[(i + 1) % 3], v[(i + 2) % 3]))) {
          todo.push_back(l);
          break;
        }
    }
  }

  std::stable_sort(leaves.begin(), leaves.end(),
                   [](const Leaf& a, const Leaf& b) { return a.parent < b.parent; });
  std::vector<std::array<int, 3>> tris;
  std::vector<int> parents;
  tris.reserve(leaves.size());
  parents.reserve(leaves.size());
  for (const Leaf& l : leaves) {
    tris.push_back(l.v);
    parents.push_back(l.parent);
  }
  return Mesh(std::move(verts), std::move(tris), std::move(bnd), std::move(parents));
}

Mesh refine_uniform(const Mesh& mesh) {
  std::vector<int> all(mesh.num_elements());
  for (int t = 0; t < mesh.num_elements(); ++t)
    all[t] = t;
  Mesh once = refine(mesh, all);
  all.resize(once.num_elements());
  for (int t = 0; t < once.num_elements(); ++t)
    all[t] = t;
  Mesh twice = refine(once, all);
  // Parents relative to the input mesh.
  std::vector<int> parents(twice.num_elements());
  for (int t = 0; t < twice.num_elements(); ++t)
    parents[t] = once.parent(twice.parent(t));
  return Mesh(twice.vertices(), twice.triangles(), twice.boundary_labels(), std::move(parents));
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "mesh2d v1\n";
  os << "vertices " << mesh.num_vertices() << "\n";
  os << std::setprecision(17);
  for (const Vec2& p : mesh.vertices())
    os << p.x() << " " << p.y() << "\n";
  os << "triangles " << mesh.num_elements() << "\n";
  for (const auto& t : mesh.triangles())
    os << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "boundary " << mesh.boundary_labels().size() << "\n";
  for (const auto& [key, label] : mesh.boundary_labels())
    os << key.first << " " << key.second << " " << to_string(label) << "\n";
}

namespace {

class LineReader {
public:
  explicit LineReader(std::istream& is) : is_(is) {}

  // Next non-empty line, split into tokens.
  std::vector<std::string> next(const char* expecting) {
    std::string line;
    while (std::getline(is_, line)) {
      ++lineno_;
      std::istringstream ss(line);
      std::vector<std::string> tok;
      std::string w;
      while (ss >> w)
        tok.push_back(w);
      if (!tok.empty())
        return tok;
    }
    throw ParseError(std::string("unexpected end of input, expecting ") + expecting, lineno_ + 1);
  }
  int line() const { return lineno_; }

private:
  std::istream& is_;
  int lineno_ = 0;
};

template <class T> T parse_number(const std::string& s, int line) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("malformed number '" + s + "'", line);
  return value;
}

int parse_count(LineReader& r, const char* header) {
  auto tok = r.next(header);
  if (tok.size() != 2 || tok[0] != header)
    throw ParseError(std::string("expected '") + header + " <count>' header", r.line());
  const int n = parse_number<int>(tok[1], r.line());
  if (n < 0)
    throw ParseError("negative count", r.line());
  return n;
}

} // namespace

Mesh read_mesh(std::istream& is) {
  LineReader r(is);
  auto tok = r.next("header");
  if (tok.size() != 2 || tok[0] != "mesh2d" || tok[1] != "v1")
    throw ParseError("expected 'mesh2d v1' header", r.line());
  const int nv = parse_count(r, "vertices");
  std::vector<Vec2> verts(nv);
  for (int i = 0; i < nv; ++i) {
    tok = r.next("vertex");
    if (tok.size() != 2)
      throw ParseError("vertex line needs two coordinates", r.line());
    verts[i] = Vec2(parse_number<double>(tok[0], r.line()), parse_number<double>(tok[1], r.line()));
  }
  const int nt = parse_count(r, "triangles");
  std::vector<std::array<int, 3>> tris(nt);
  for (int i = 0; i < nt; ++i) {
    tok = r.next("triangle");
    if (tok.size() != 3)
      throw ParseError("triangle line needs three vertex ids", r.line());
    for (int k = 0; k < 3; ++k) {
      tris[i][k] = parse_number<int>(tok[k], r.line());
      if (tris[i][k] < 0 || tris[i][k] >= nv)
        throw ParseError("vertex id out of range", r.line());
    }
  }
  const int nb = parse_count(r, "boundary");
  std::map<EdgeKey, BoundaryLabel> bnd;
  for (int i = 0; i < nb; ++i) {
    tok = r.next("boundary edge");
    if (tok.size() != 3)
      throw ParseError("boundary line needs two vertex ids and a label", r.line());
    const int a = parse_number<int>(tok[0], r.line());
    const int b = parse_number<int>(tok[1], r.line());
    try {
      bnd[edge_key(a, b)] = parse_boundary_label(tok[2]);
    } catch (const Error& e) {
      throw ParseError(e.what(), r.line());
    }
  }
  return Mesh(std::move(verts), std::move(tris), std::move(bnd));
}

void save_mesh(const std::string& path, const Mesh& mesh) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write mesh file " + path);
  write_mesh(os, mesh);
}

Mesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open mesh file " + path);
  return read_mesh(is);
}

MeshStats mesh_stats(const Mesh& mesh) {
  MeshStats s;
  s.vertices = mesh.num_vertices();
  s.elements = mesh.num_elements();
  s.faces = mesh.num_faces();
  s.hmin = std::numeric_limits<double>::infinity();
  s.min_angle_deg = 180.0;
  for (const Face& f : mesh.faces())
    if (f.label)
      ++s.boundary_faces[to_string(*f.label)];
  for (int t = 0; t < mesh.num_elements(); ++t) {
    const double h = mesh.diameter(t);
    s.hmin = std::min(s.hmin, h);
    s.hmax = std::max(s.hmax, h);
    s.area += mesh.area(t);
    const auto& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i) {
      const Vec2 a = mesh.vertex(tri[(i + 1) % 3]) - mesh.vertex(tri[i]);
      const Vec2 b = mesh.vertex(tri[(i + 2) % 3]) - mesh.vertex(tri[i]);
      const double ang = std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0));
      s.min_angle_deg = std::min(s.min_angle_deg, ang * 180.0 / std::numbers::pi);
    }
  }
  if (mesh.num_elements() == 0)
    s.hmin = 0.0;
  return s;
}

std::string check_conformity(const Mesh& mesh) {
  std::ostringstream msg;
  std::vector<char> used(mesh.num_vertices(), 0);
  for (const auto& t : mesh.triangles())
    for (int v : t)
      used[v] = 1;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (!used[v])
      msg << "unused vertex " << v << "; ";
  // A hanging vertex lies strictly inside an edge that has only one neighbour.
  std::vector<int> bverts;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.is_boundary_vertex(v))
      bverts.push_back(v);
  for (const Face& f : mesh.faces()) {
    if (!f.is_boundary())
      continue;
    const Vec2& a = mesh.vertex(f.v[0]);
    const Vec2& b = mesh.vertex(f.v[1]);
    const Vec2 d = b - a;
    for (int w : bverts) {
      if (w == f.v[0] || w == f.v[1])
        continue;
      const Vec2 r = mesh.vertex(w) - a;
      const double s = r.dot(d) / d.squaredNorm();
      const double off = std::abs(r.x() * d.y() - r.y() * d.x()) / d.norm();
      if (s > 1e-12 && s < 1.0 - 1e-12 && off < 1e-12 * d.norm())
        msg << "hanging vertex " << w << " on edge " << f.v[0] << "-" << f.v[1] << "; ";
    }
  }
  return msg.str();
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  lo_ = Vec2::Constant(std::numeric_limits<double>::infinity());
  hi_ = -lo_;
  for (const Vec2& p : mesh.vertices()) {
    lo_ = lo_.cwiseMin(p);
    hi_ = hi_.cwiseMax(p);
  }
  const int n = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_elements()))));
  nx_ = ny_ = n;
  buckets_.assign(nx_ * ny_, {});
  const Vec2 span = (hi_ - lo_).cwiseMax(Vec2::Constant(1e-300));
  for (int t = 0; t < mesh.num_elements(); ++t) {
    Vec2 a = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 b = -a;
    for (int v : mesh.triangle(t)) {
      a = a.cwiseMin(mesh.vertex(v));
      b = b.cwiseMax(mesh.vertex(v));
    }
    const int i0 = std::clamp(static_cast<int>((a.x() - lo_.x()) / span.x() * nx_) - 1, 0, nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((b.x() - lo_.x()) / span.x() * nx_) + 1, 0, nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((a.y() - lo_.y()) / span.y() * ny_) - 1, 0, ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((b.y() - lo_.y()) / span.y() * ny_) + 1, 0, ny_ - 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        buckets_[j * nx_ + i].push_back(t);
  }
}

std::array<double, 3> barycentric(const Mesh& mesh, int t, const Vec2& p) {
  const auto g = mesh.barycentric_gradients(t);
  const auto& tri = mesh.triangle(t);
  std::array<double, 3> b;
  for (int i = 0; i < 3; ++i) {
    // lambda_i vanishes on the opposite edge, through vertex i+1.
    b[i] = g[i].dot(p - mesh.vertex(tri[(i + 1) % 3]));
  }
  return b;
}

int PointLocator::locate(const Vec2& p, std::array<double, 3>* bary, double tol) const {
  const Vec2 span = (hi_ - lo_).cwiseMax(Vec2::Constant(1e-300));
  const int i = static_cast<int>(std::floor((p.x() - lo_.x()) / span.x() * nx_));
  const int j = static_cast<int>(std::floor((p.y() - lo_.y()) / span.y() * ny_));
  if (i < -1 || j < -1 || i > nx_ || j > ny_)
    return -1;
  const auto& cand = buckets_[std::clamp(j, 0, ny_ - 1) * nx_ + std::clamp(i, 0, nx_ - 1)];
  for (int t : cand) {
    const auto b = barycentric(*mesh_, t, p);
    if (b[0] >= -tol && b[1] >= -tol && b[2] >= -tol) {
      if (bary)
        *bary = b;
      return t;
    }
  }
  return -1;
}

} // namespace nitsche
