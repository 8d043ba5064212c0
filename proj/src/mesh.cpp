#include "mfeec/mesh.hpp"

#include "mfeec/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mfeec {

SimplexKey canonical_key(std::vector<VertexRef> refs) {
  std::sort(refs.begin(), refs.end());
  if (!refs.empty()) {
    const Shift base = refs.front().s;
    for (auto& r : refs)
      for (int i = 0; i < 3; ++i) r.s[i] -= base[i];
  }
  return refs;
}

int sorting_sign(const std::vector<VertexRef>& refs) {
  int inv = 0;
  for (std::size_t i = 0; i < refs.size(); ++i)
    for (std::size_t j = i + 1; j < refs.size(); ++j)
      if (refs[j] < refs[i]) ++inv;
  return inv % 2 == 0 ? 1 : -1;
}

std::vector<std::vector<int>> sorted_subsets(int n, int size) {
  std::vector<std::vector<int>> out;
  if (size < 0 || size > n) return out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(cur.size()) == size) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

int SimplicialComplex::euler_characteristic() const {
  int chi = 0;
  for (int d = 0; d <= dim; ++d) chi += (d % 2 == 0 ? 1 : -1) * count(d);
  return chi;
}

Eigen::VectorXd SimplicialComplex::position(const VertexRef& r) const {
  Eigen::VectorXd p = vertices.col(r.v);
  if (periodic)
    for (int i = 0; i < ambient_dim; ++i) p[i] += r.s[static_cast<std::size_t>(i)] * period[i];
  return p;
}

Eigen::VectorXd SimplicialComplex::cell_vertex(int c, int j) const {
  return position(cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]);
}

Eigen::MatrixXd SimplicialComplex::cell_coordinates(int c) const {
  Eigen::MatrixXd X(ambient_dim, dim + 1);
  for (int j = 0; j <= dim; ++j) X.col(j) = cell_vertex(c, j);
  return X;
}

SimplicialComplex build_complex(std::string name, int ambient_dim, int dim, Eigen::MatrixXd vertices,
                                std::vector<std::vector<VertexRef>> cells, bool periodic, Eigen::VectorXd period) {
  SimplicialComplex K;
  K.name = std::move(name);
  K.ambient_dim = ambient_dim;
  K.dim = dim;
  K.periodic = periodic;
  K.period = periodic ? std::move(period) : Eigen::VectorXd::Ones(ambient_dim);
  if (periodic && K.period.size() != ambient_dim) throw std::invalid_argument("build_complex: period size mismatch");
  if (vertices.rows() != ambient_dim) throw std::invalid_argument("build_complex: vertex dimension mismatch");
  K.vertices = std::move(vertices);
  K.cells = std::move(cells);
  K.simplices.assign(static_cast<std::size_t>(dim + 1), {});
  K.index.assign(static_cast<std::size_t>(dim + 1), {});
  K.cell_faces.assign(K.cells.size(), std::vector<std::vector<int>>(static_cast<std::size_t>(dim + 1)));
  K.cell_orderings.assign(K.cells.size(), {});
  K.vertex_cells_.assign(static_cast<std::size_t>(K.num_vertices()), {});

  for (std::size_t c = 0; c < K.cells.size(); ++c) {
    const auto& cell = K.cells[c];
    if (static_cast<int>(cell.size()) != dim + 1) throw std::invalid_argument("build_complex: cell size mismatch");
    for (const auto& r : cell) {
      if (r.v < 0 || r.v >= K.num_vertices()) throw std::invalid_argument("build_complex: vertex id out of range");
      if (!periodic && r.s != Shift{0, 0, 0}) throw std::invalid_argument("build_complex: shift on non-periodic mesh");
      auto& vc = K.vertex_cells_[static_cast<std::size_t>(r.v)];
      if (vc.empty() || vc.back() != static_cast<int>(c)) vc.push_back(static_cast<int>(c));
    }
    for (int d = 0; d <= dim; ++d) {
      for (const auto& subset : sorted_subsets(dim + 1, d + 1)) {
        std::vector<VertexRef> refs;
        for (int j : subset) refs.push_back(cell[static_cast<std::size_t>(j)]);
        const SimplexKey key = canonical_key(refs);
        auto& idx = K.index[static_cast<std::size_t>(d)];
        auto [it, inserted] = idx.try_emplace(key, static_cast<int>(K.simplices[static_cast<std::size_t>(d)].size()));
        if (inserted) {
          K.simplices[static_cast<std::size_t>(d)].push_back(key);
        } else if (d == dim) {
          throw std::invalid_argument("build_complex: duplicate top cell");
        }
        K.cell_faces[c][static_cast<std::size_t>(d)].push_back(it->second);
        std::vector<int> order = subset;
        if (d < dim) {
          std::sort(order.begin(), order.end(), [&](int a, int b) {
            return cell[static_cast<std::size_t>(a)] < cell[static_cast<std::size_t>(b)];
          });
        }
        K.cell_orderings[c][subset] = order;
      }
    }
  }
  // Vertex ids are expected to be 0..V-1 in order of first appearance of the 0-simplex key.
  for (int v = 0; v < K.num_vertices(); ++v) {
    auto it = K.index[0].find(SimplexKey{VertexRef{v, {0, 0, 0}}});
    if (it == K.index[0].end()) throw std::invalid_argument("build_complex: unused vertex");
  }
  // Renumber 0-simplices so that simplex id == vertex id.
  {
    std::vector<int> remap(K.simplices[0].size());
    for (std::size_t i = 0; i < K.simplices[0].size(); ++i) remap[i] = K.simplices[0][i][0].v;
    std::vector<SimplexKey> sorted(K.simplices[0].size());
    for (std::size_t i = 0; i < remap.size(); ++i) sorted[static_cast<std::size_t>(remap[i])] = K.simplices[0][i];
    K.simplices[0] = sorted;
    K.index[0].clear();
    for (std::size_t i = 0; i < sorted.size(); ++i) K.index[0][sorted[i]] = static_cast<int>(i);
    for (auto& cf : K.cell_faces)
      for (auto& id : cf[0]) id = remap[static_cast<std::size_t>(id)];
  }
  return K;
}

Eigen::SparseMatrix<int> boundary_matrix(const SimplicialComplex& K, int d) {
  if (d < 1 || d > K.dim) throw std::invalid_argument("boundary_matrix: dimension out of range");
  std::vector<Eigen::Triplet<int>> trips;
  const auto& lower = K.index[static_cast<std::size_t>(d - 1)];
  for (int j = 0; j < K.count(d); ++j) {
    const std::vector<VertexRef> refs =
        d == K.dim ? K.cells[static_cast<std::size_t>(j)] : K.simplices[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)];
    for (int i = 0; i <= d; ++i) {
      std::vector<VertexRef> face;
      for (int m = 0; m <= d; ++m)
        if (m != i) face.push_back(refs[static_cast<std::size_t>(m)]);
      const int sign = (i % 2 == 0 ? 1 : -1) * sorting_sign(face);
      const int row = lower.at(canonical_key(face));
      trips.emplace_back(row, j, sign);
    }
  }
  Eigen::SparseMatrix<int> B(K.count(d - 1), K.count(d));
  B.setFromTriplets(trips.begin(), trips.end());
  B.prune(0);
  return B;
}

std::string check_triangulation(const SimplicialComplex& K) {
  // Codimension-one faces have exactly two cofaces.
  std::vector<int> cof(static_cast<std::size_t>(K.count(K.dim - 1)), 0);
  for (const auto& cf : K.cell_faces)
    for (int id : cf[static_cast<std::size_t>(K.dim - 1)]) ++cof[static_cast<std::size_t>(id)];
  for (std::size_t i = 0; i < cof.size(); ++i)
    if (cof[i] != 2) return "face " + std::to_string(i) + " has " + std::to_string(cof[i]) + " cofaces";

  // Pairwise intersections. Cells sharing no vertex id are disjoint; otherwise compare the
  // vertex occurrences of both cells under every relative lattice translation in {-1,0,1}^n.
  const int nshift = K.periodic ? K.ambient_dim : 0;
  std::vector<Shift> translations;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        const Shift t{a, b, c};
        bool ok = true;
        for (int i = nshift; i < 3; ++i)
          if (t[static_cast<std::size_t>(i)] != 0) ok = false;
        if (ok) translations.push_back(t);
      }
  for (int c1 = 0; c1 < K.num_cells(); ++c1) {
    std::set<int> near;
    for (const auto& r : K.cells[static_cast<std::size_t>(c1)])
      for (int c2 : K.vertex_cells(r.v))
        if (c2 >= c1) near.insert(c2);
    for (int c2 : near) {
      for (const auto& t : translations) {
        if (c1 == c2 && t == Shift{0, 0, 0}) continue;
        std::vector<VertexRef> shared;
        for (const auto& a : K.cells[static_cast<std::size_t>(c1)])
          for (auto b : K.cells[static_cast<std::size_t>(c2)]) {
            for (int i = 0; i < 3; ++i) b.s[static_cast<std::size_t>(i)] += t[static_cast<std::size_t>(i)];
            if (a == b) shared.push_back(a);
          }
        if (shared.empty()) continue;
        const int d = static_cast<int>(shared.size()) - 1;
        if (d >= K.dim) return "cells " + std::to_string(c1) + " and " + std::to_string(c2) + " coincide";
        if (!K.index[static_cast<std::size_t>(d)].count(canonical_key(shared)))
          return "intersection of cells " + std::to_string(c1) + " and " + std::to_string(c2) + " is not a stored face";
      }
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

ClosestPoint Surface::closest_point(const Eigen::Vector3d& x) const {
  ClosestPoint cp;
  switch (kind) {
    case SurfaceKind::Sphere: {
      const double n = x.norm();
      if (!(n > 0.0)) throw std::domain_error("closest_point: the sphere center has no closest point");
      cp.normal = x / n;
      cp.a = radius * cp.normal;
      cp.delta = n - radius;
      return cp;
    }
    case SurfaceKind::Torus: {
      const double rho = std::hypot(x[0], x[1]);
      if (!(rho > 0.0)) throw std::domain_error("closest_point: point on the torus axis");
      const Eigen::Vector3d c(major * x[0] / rho, major * x[1] / rho, 0.0);
      const Eigen::Vector3d w = x - c;
      const double wn = w.norm();
      if (!(wn > 0.0) || wn >= 2.0 * minor) throw std::domain_error("closest_point: point outside the tubular neighborhood");
      cp.normal = w / wn;
      cp.a = c + minor * cp.normal;
      cp.delta = wn - minor;
      return cp;
    }
    case SurfaceKind::FlatTorus:
      break;
  }
  throw std::domain_error("closest_point: flat torus is not embedded");
}

Eigen::Matrix3d Surface::closest_point_jacobian(const Eigen::Vector3d& x) const {
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  switch (kind) {
    case SurfaceKind::Sphere: {
      const double n = x.norm();
      if (!(n > 0.0)) throw std::domain_error("closest_point_jacobian: sphere center");
      const Eigen::Vector3d u = x / n;
      return (radius / n) * (I - u * u.transpose());
    }
    case SurfaceKind::Torus: {
      const double rho = std::hypot(x[0], x[1]);
      if (!(rho > 0.0)) throw std::domain_error("closest_point_jacobian: torus axis");
      const Eigen::Vector3d ch(x[0] / rho, x[1] / rho, 0.0);
      Eigen::Matrix3d Pxy = Eigen::Matrix3d::Zero();
      Pxy(0, 0) = Pxy(1, 1) = 1.0;
      const Eigen::Matrix3d Dc = (major / rho) * (Pxy - ch * ch.transpose());
      const Eigen::Vector3d w = x - major * ch;
      const double wn = w.norm();
      if (!(wn > 0.0) || wn >= 2.0 * minor) throw std::domain_error("closest_point_jacobian: outside the tubular neighborhood");
      const Eigen::Vector3d wh = w / wn;
      return Dc + (minor / wn) * (I - wh * wh.transpose()) * (I - Dc);
    }
    case SurfaceKind::FlatTorus:
      break;
  }
  throw std::domain_error("closest_point_jacobian: flat torus is not embedded");
}

double Surface::area() const {
  switch (kind) {
    case SurfaceKind::Sphere:
      return 4.0 * std::numbers::pi * radius * radius;
    case SurfaceKind::Torus:
      return 4.0 * std::numbers::pi * std::numbers::pi * major * minor;
    case SurfaceKind::FlatTorus:
      return 1.0;
  }
  return 0.0;
}

std::string Surface::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case SurfaceKind::Sphere:
      os << "sphere(R=" << radius << ")";
      break;
    case SurfaceKind::Torus:
      os << "torus(R=" << major << ",r=" << minor << ")";
      break;
    case SurfaceKind::FlatTorus:
      os << "flat-torus";
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

/// Reorders each triangle so that its normal agrees with the surface normal at the centroid.
void orient_outward(const Eigen::MatrixXd& X, std::vector<std::vector<VertexRef>>& cells, const Surface& s) {
  for (auto& c : cells) {
    const Eigen::Vector3d p0 = X.col(c[0].v), p1 = X.col(c[1].v), p2 = X.col(c[2].v);
    const Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
    const Eigen::Vector3d centroid = (p0 + p1 + p2) / 3.0;
    Eigen::Vector3d out;
    if (s.kind == SurfaceKind::Sphere) {
      out = centroid;
    } else {
      const double rho = std::hypot(centroid[0], centroid[1]);
      out = centroid - Eigen::Vector3d(s.major * centroid[0] / rho, s.major * centroid[1] / rho, 0.0);
    }
    if (n.dot(out) < 0) std::swap(c[1], c[2]);
  }
}

std::vector<VertexRef> tri(int a, int b, int c) { return {VertexRef{a, {}}, VertexRef{b, {}}, VertexRef{c, {}}}; }

}  // namespace

SimplicialComplex generate_sphere(int level, double radius) {
  if (level < 0) throw std::invalid_argument("generate_sphere: negative level");
  if (!(radius > 0)) throw std::invalid_argument("generate_sphere: radius must be positive");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> pts;
  for (int s1 : {-1, 1})
    for (int s2 : {-1, 1}) {
      pts.emplace_back(0.0, s1 * 1.0, s2 * phi);
      pts.emplace_back(s1 * 1.0, s2 * phi, 0.0);
      pts.emplace_back(s2 * phi, 0.0, s1 * 1.0);
    }
  // Faces are the triples of mutually adjacent vertices (edge length 2).
  std::vector<std::array<int, 3>> faces;
  auto adjacent = [&](int a, int b) { return std::abs((pts[static_cast<std::size_t>(a)] - pts[static_cast<std::size_t>(b)]).norm() - 2.0) < 1e-9; };
  for (int a = 0; a < 12; ++a)
    for (int b = a + 1; b < 12; ++b)
      for (int c = b + 1; c < 12; ++c)
        if (adjacent(a, b) && adjacent(b, c) && adjacent(a, c)) faces.push_back({a, b, c});
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      pts.push_back(0.5 * (pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]));
      const int id = static_cast<int>(pts.size()) - 1;
      mid[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& f : faces) {
      const int ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({ab, f[1], bc});
      next.push_back({ca, bc, f[2]});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  Eigen::MatrixXd X(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = radius * pts[i].normalized();
  std::vector<std::vector<VertexRef>> cells;
  for (const auto& f : faces) cells.push_back(tri(f[0], f[1], f[2]));
  orient_outward(X, cells, Surface::sphere(radius));
  return build_complex("sphere", 3, 2, std::move(X), std::move(cells));
}

SimplicialComplex generate_flat_torus(int m) {
  if (m < 1) throw std::invalid_argument("generate_flat_torus: m must be at least 1");
  Eigen::MatrixXd X(2, m * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) X.col(i + m * j) = Eigen::Vector2d(static_cast<double>(i) / m, static_cast<double>(j) / m);
  auto ref = [m](int i, int j) {
    const int si = i >= m ? 1 : 0, sj = j >= m ? 1 : 0;
    return VertexRef{(i - si * m) + m * (j - sj * m), {si, sj, 0}};
  };
  std::vector<std::vector<VertexRef>> cells;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      cells.push_back({ref(i, j), ref(i + 1, j), ref(i + 1, j + 1)});
      cells.push_back({ref(i, j), ref(i + 1, j + 1), ref(i, j + 1)});
    }
  return build_complex("flat-torus", 2, 2, std::move(X), std::move(cells), true, Eigen::Vector2d(1.0, 1.0));
}

SimplicialComplex generate_round_torus(int m, double R, double r) {
  if (m < 1) throw std::invalid_argument("generate_round_torus: m must be at least 1");
  if (!(R > r && r > 0)) throw std::invalid_argument("generate_round_torus: need R > r > 0");
  const int nu = 6 * m, nv = 3 * m;
  Eigen::MatrixXd X(3, nu * nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double th = 2.0 * std::numbers::pi * i / nu, ph = 2.0 * std::numbers::pi * j / nv;
      X.col(i + nu * j) = Eigen::Vector3d((R + r * std::cos(ph)) * std::cos(th), (R + r * std::cos(ph)) * std::sin(th), r * std::sin(ph));
    }
  auto id = [&](int i, int j) { return (i % nu) + nu * (j % nv); };
  std::vector<std::vector<VertexRef>> cells;
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      cells.push_back(tri(id(i, j), id(i + 1, j), id(i + 1, j + 1)));
      cells.push_back(tri(id(i, j), id(i + 1, j + 1), id(i, j + 1)));
    }
  orient_outward(X, cells, Surface::torus(R, r));
  return build_complex("torus", 3, 2, std::move(X), std::move(cells));
}

CubedSphere generate_cubed_sphere(int m) {
  if (m < 1) throw std::invalid_argument("generate_cubed_sphere: m must be at least 1");
  std::map<std::array<int, 3>, int> ids;
  std::vector<Eigen::Vector3d> pts;
  auto vertex = [&](const std::array<int, 3>& g) {
    auto [it, inserted] = ids.try_emplace(g, static_cast<int>(pts.size()));
    if (inserted) pts.emplace_back(2.0 * g[0] / m - 1.0, 2.0 * g[1] / m - 1.0, 2.0 * g[2] / m - 1.0);
    return it->second;
  };
  std::vector<std::vector<VertexRef>> cells;
  for (int axis = 0; axis < 3; ++axis)
    for (int side : {0, m}) {
      const int b = (axis + 1) % 3, c = (axis + 2) % 3;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          auto g = [&](int di, int dj) {
            std::array<int, 3> p{};
            p[static_cast<std::size_t>(axis)] = side;
            p[static_cast<std::size_t>(b)] = i + di;
            p[static_cast<std::size_t>(c)] = j + dj;
            return vertex(p);
          };
          const int v00 = g(0, 0), v10 = g(1, 0), v11 = g(1, 1), v01 = g(0, 1);
          cells.push_back(tri(v00, v10, v11));
          cells.push_back(tri(v00, v11, v01));
        }
    }
  CubedSphere out;
  Eigen::MatrixXd X(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.distortion = std::max(out.distortion, pts[i].norm());
    X.col(static_cast<Eigen::Index>(i)) = pts[i].normalized();
  }
  orient_outward(X, cells, Surface::sphere(1.0));
  out.complex = build_complex("cubed-sphere", 3, 2, std::move(X), std::move(cells));
  return out;
}

// ---------------------------------------------------------------------------

const LagrangeBasis& LagrangeBasis::get(int n, int degree) {
  static std::map<std::pair<int, int>, std::unique_ptr<LagrangeBasis>> cache;
  auto& slot = cache[{n, degree}];
  if (!slot) {
    if (degree < 1) throw std::invalid_argument("LagrangeBasis: degree must be at least 1");
    auto b = std::make_unique<LagrangeBasis>();
    b->n = n;
    b->degree = degree;
    const auto mons = monomials_upto(n, degree);
    const auto N = static_cast<Eigen::Index>(mons.size());
    b->nodes.resize(n, N);
    for (Eigen::Index j = 0; j < N; ++j)
      for (int i = 0; i < n; ++i) b->nodes(i, j) = static_cast<double>(mons[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) / degree;
    Eigen::MatrixXd V(N, N);
    for (Eigen::Index r = 0; r < N; ++r)
      for (Eigen::Index c = 0; c < N; ++c) V(r, c) = Polynomial::monomial(mons[static_cast<std::size_t>(c)])(b->nodes.col(r));
    const Eigen::MatrixXd C = V.inverse();
    for (Eigen::Index j = 0; j < N; ++j) {
      Polynomial p(n);
      for (Eigen::Index c = 0; c < N; ++c) p.add_term(mons[static_cast<std::size_t>(c)], C(c, j));
      p.prune(1e-13);
      std::vector<Polynomial> g;
      for (int i = 0; i < n; ++i) g.push_back(p.derivative(i));
      b->shape.push_back(std::move(p));
      b->grad.push_back(std::move(g));
    }
    slot = std::move(b);
  }
  return *slot;
}

Eigen::VectorXd CellMap::operator()(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(node_values.rows());
  for (std::size_t j = 0; j < basis->shape.size(); ++j) x += basis->shape[j](t) * node_values.col(static_cast<Eigen::Index>(j));
  return x;
}

Eigen::MatrixXd CellMap::jacobian(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(node_values.rows(), basis->n);
  for (std::size_t j = 0; j < basis->shape.size(); ++j)
    for (int i = 0; i < basis->n; ++i) J.col(i) += basis->grad[j][static_cast<std::size_t>(i)](t) * node_values.col(static_cast<Eigen::Index>(j));
  return J;
}

std::vector<CellMap> affine_cells(const SimplicialComplex& K) {
  std::vector<CellMap> out;
  const LagrangeBasis& b = LagrangeBasis::get(K.dim, 1);
  for (int c = 0; c < K.num_cells(); ++c) {
    const Eigen::MatrixXd X = K.cell_coordinates(c);
    CellMap m;
    m.cell = c;
    m.degree = 1;
    m.basis = &b;
    m.node_values.resize(K.ambient_dim, b.nodes.cols());
    for (Eigen::Index j = 0; j < b.nodes.cols(); ++j) {
      Eigen::VectorXd x = X.col(0);
      for (int i = 0; i < K.dim; ++i) x += b.nodes(i, j) * (X.col(i + 1) - X.col(0));
      m.node_values.col(j) = x;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<CellMap> lift_cells(const SimplicialComplex& K, const Surface& surface, int l) {
  if (l < 1 || l > 4) throw std::invalid_argument("lift_cells: degree must be in 1..4");
  if (K.ambient_dim != 3) throw std::invalid_argument("lift_cells: complex is not embedded in R^3");
  std::vector<CellMap> affine = affine_cells(K);
  if (l == 1) return affine;
  const LagrangeBasis& b = LagrangeBasis::get(K.dim, l);
  std::vector<CellMap> out;
  for (const auto& a : affine) {
    CellMap m;
    m.cell = a.cell;
    m.degree = l;
    m.basis = &b;
    m.node_values.resize(3, b.nodes.cols());
    for (Eigen::Index j = 0; j < b.nodes.cols(); ++j) m.node_values.col(j) = surface.closest_point(a(b.nodes.col(j))).a;
    out.push_back(std::move(m));
  }
  return out;
}

MeshGeometry::MeshGeometry(std::vector<CellMap> maps) : maps_(std::move(maps)) {}

MeshGeometry::MeshGeometry(std::vector<CellMap> maps, const Surface& surface) : maps_(std::move(maps)), surface_(surface) {}

Eigen::VectorXd MeshGeometry::point(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const {
  const Eigen::VectorXd x = map(c)(t);
  if (!surface_) return x;
  return surface_->closest_point(x).a;
}

Eigen::MatrixXd MeshGeometry::jacobian(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const {
  const CellMap& m = map(c);
  if (!surface_) return m.jacobian(t);
  return surface_->closest_point_jacobian(m(t)) * m.jacobian(t);
}

Eigen::MatrixXd MeshGeometry::metric(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const {
  const Eigen::MatrixXd J = jacobian(c, t);
  Eigen::MatrixXd g = J.transpose() * J;
  if (!(g.determinant() > 1e-14 * std::pow(g.trace(), static_cast<double>(g.rows()))))
    throw std::runtime_error("metric: degenerate cell " + std::to_string(c));
  return g;
}

MetricField pullback_metric(const CellMap& map) {
  return [map](const Eigen::VectorXd& t) {
    const Eigen::MatrixXd J = map.jacobian(t);
    Eigen::MatrixXd g = J.transpose() * J;
    if (!(g.determinant() > 0)) throw std::runtime_error("pullback_metric: rank-deficient Jacobian");
    return g;
  };
}

MetricField pullback_metric(const CellMap& map, const Surface& surface) {
  return [map, surface](const Eigen::VectorXd& t) {
    const Eigen::MatrixXd J = surface.closest_point_jacobian(map(t)) * map.jacobian(t);
    Eigen::MatrixXd g = J.transpose() * J;
    if (!(g.determinant() > 0)) throw std::runtime_error("pullback_metric: rank-deficient Jacobian");
    return g;
  };
}

MeshGeometry computational_geometry(const SimplicialComplex& K, const std::optional<Surface>& surface, int l) {
  if (!surface || surface->kind == SurfaceKind::FlatTorus) return MeshGeometry(affine_cells(K));
  return MeshGeometry(lift_cells(K, *surface, l));
}

MeshGeometry exact_geometry(const SimplicialComplex& K, const std::optional<Surface>& surface, int l) {
  if (!surface || surface->kind == SurfaceKind::FlatTorus) return MeshGeometry(affine_cells(K));
  return MeshGeometry(lift_cells(K, *surface, l), *surface);
}

// ---------------------------------------------------------------------------

namespace {

double metric_edge_length(const MeshGeometry& G, int c, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd nodes, weights;
  gauss_legendre_01(8, nodes, weights);
  double len = 0.0;
  for (Eigen::Index q = 0; q < nodes.size(); ++q) {
    const Eigen::VectorXd t = a + nodes[q] * (b - a);
    len += weights[q] * (G.jacobian(c, t) * (b - a)).norm();
  }
  return len;
}

Eigen::VectorXd reference_vertex(int n, int j) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  if (j > 0) p[j - 1] = 1.0;
  return p;
}

}  // namespace

MeshQualityReport quality_report(const SimplicialComplex& K, const MeshGeometry& G) {
  MeshQualityReport R;
  const int n = K.dim;
  const auto nc = static_cast<std::size_t>(K.num_cells());
  R.h_T.assign(nc, 0.0);
  R.c1_T.assign(nc, 0.0);
  std::vector<std::vector<double>> edge_len(nc);
  const auto edges = sorted_subsets(n + 1, 2);
  for (int c = 0; c < K.num_cells(); ++c) {
    for (const auto& e : edges) {
      const double len = metric_edge_length(G, c, reference_vertex(n, e[0]), reference_vertex(n, e[1]));
      edge_len[static_cast<std::size_t>(c)].push_back(len);
      R.h_T[static_cast<std::size_t>(c)] = std::max(R.h_T[static_cast<std::size_t>(c)], len);
    }
  }
  R.h_V.assign(static_cast<std::size_t>(K.num_vertices()), std::numeric_limits<double>::infinity());
  for (int c = 0; c < K.num_cells(); ++c)
    for (const auto& r : K.cells[static_cast<std::size_t>(c)])
      R.h_V[static_cast<std::size_t>(r.v)] = std::min(R.h_V[static_cast<std::size_t>(r.v)], R.h_T[static_cast<std::size_t>(c)]);

  const QuadratureRule q = quadrature_rule(n, 4);
  for (int c = 0; c < K.num_cells(); ++c) {
    const double h = R.h_T[static_cast<std::size_t>(c)];
    double jmax = 0.0, jinv = 0.0;
    for (int i = 0; i < q.size(); ++i) {
      const Eigen::MatrixXd J = G.jacobian(c, q.points.col(i));
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
      const auto& s = svd.singularValues();
      jmax = std::max(jmax, s[0]);
      jinv = std::max(jinv, 1.0 / s[s.size() - 1]);
    }
    R.c1_T[static_cast<std::size_t>(c)] = std::max(jmax / h, jinv * h);
    for (double len : edge_len[static_cast<std::size_t>(c)]) R.C_triangle = std::max(R.C_triangle, h / len);
    for (const auto& r : K.cells[static_cast<std::size_t>(c)]) R.C_triangle = std::max(R.C_triangle, h / R.h_V[static_cast<std::size_t>(r.v)]);
    std::set<int> touching;
    for (const auto& r : K.cells[static_cast<std::size_t>(c)])
      for (int c2 : K.vertex_cells(r.v)) touching.insert(c2);
    R.C_sharp = std::max(R.C_sharp, static_cast<int>(touching.size()));
  }
  R.h_min = *std::min_element(R.h_T.begin(), R.h_T.end());
  R.h_max = *std::max_element(R.h_T.begin(), R.h_T.end());
  return R;
}

double MeshQualityReport::h_star(const SimplicialComplex& K, int c, const Eigen::Ref<const Eigen::VectorXd>& t) const {
  const auto& cell = K.cells[static_cast<std::size_t>(c)];
  double l0 = 1.0 - t.sum();
  double h = l0 * h_V[static_cast<std::size_t>(cell[0].v)];
  for (int i = 0; i < t.size(); ++i) h += t[i] * h_V[static_cast<std::size_t>(cell[static_cast<std::size_t>(i + 1)].v)];
  return h;
}

Location locate(const SimplicialComplex& K, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (K.ambient_dim != K.dim) throw std::invalid_argument("locate: only flat meshes are supported");
  Eigen::VectorXd y = x;
  if (K.periodic)
    for (int i = 0; i < y.size(); ++i) y[i] -= std::floor(y[i] / K.period[i]) * K.period[i];
  Location best;
  double best_min = -std::numeric_limits<double>::infinity();
  const int n = K.dim;
  std::vector<Eigen::VectorXd> shifts;
  if (K.periodic && n == 2) {
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) shifts.push_back(Eigen::Vector2d(a * K.period[0], b * K.period[1]));
  } else {
    shifts.push_back(Eigen::VectorXd::Zero(n));
  }
  for (int c = 0; c < K.num_cells(); ++c) {
    const Eigen::MatrixXd X = K.cell_coordinates(c);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i) A.col(i) = X.col(i + 1) - X.col(0);
    const Eigen::MatrixXd Ai = A.inverse();
    for (const auto& s : shifts) {
      const Eigen::VectorXd t = Ai * (y + s - X.col(0));
      const double mn = std::min(t.minCoeff(), 1.0 - t.sum());
      if (mn > best_min) {
        best_min = mn;
        best.cell = c;
        best.t = t;
      }
      if (mn >= 0) return best;
    }
  }
  if (best_min < -1e-9) throw std::domain_error("locate: point not covered by the mesh");
  return best;
}

// ---------------------------------------------------------------------------

void write_mesh(std::ostream& os, const SimplicialComplex& K) {
  os << "MFEEC-MESH 1\n";
  os << K.ambient_dim << " " << K.dim << " " << (K.periodic ? 1 : 0) << "\n";
  os << std::setprecision(17);
  os << "V " << K.num_vertices() << "\n";
  for (int v = 0; v < K.num_vertices(); ++v) {
    for (int i = 0; i < K.ambient_dim; ++i) os << (i ? " " : "") << K.vertices(i, v);
    os << "\n";
  }
  for (int d = 0; d <= K.dim; ++d) {
    os << "S " << d << " " << K.count(d) << "\n";
    for (int s = 0; s < K.count(d); ++s) {
      const auto& refs = d == K.dim ? K.cells[static_cast<std::size_t>(s)] : K.simplices[static_cast<std::size_t>(d)][static_cast<std::size_t>(s)];
      for (std::size_t j = 0; j < refs.size(); ++j) os << (j ? " " : "") << refs[j].v;
      os << "\n";
    }
  }
  if (K.periodic) {
    os << "IDENT " << K.num_cells() << "\n";
    os << "PERIOD";
    for (int i = 0; i < K.ambient_dim; ++i) os << " " << K.period[i];
    os << "\n";
    for (const auto& cell : K.cells) {
      for (std::size_t j = 0; j < cell.size(); ++j)
        for (int i = 0; i < K.ambient_dim; ++i) os << (j || i ? " " : "") << cell[j].s[static_cast<std::size_t>(i)];
      os << "\n";
    }
  }
}

SimplicialComplex read_mesh(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "MFEEC-MESH" || version != 1) throw std::runtime_error("read_mesh: bad header");
  int ambient = 0, dim = 0, periodic = 0;
  if (!(is >> ambient >> dim >> periodic)) throw std::runtime_error("read_mesh: bad dimension line");
  std::string tag;
  int nv = 0;
  if (!(is >> tag >> nv) || tag != "V") throw std::runtime_error("read_mesh: expected vertex block");
  Eigen::MatrixXd X(ambient, nv);
  for (int v = 0; v < nv; ++v)
    for (int i = 0; i < ambient; ++i)
      if (!(is >> X(i, v))) throw std::runtime_error("read_mesh: truncated vertex block");
  std::vector<std::vector<VertexRef>> cells;
  std::vector<int> counts(static_cast<std::size_t>(dim + 1), 0);
  for (int d = 0; d <= dim; ++d) {
    int dd = 0, cnt = 0;
    if (!(is >> tag >> dd >> cnt) || tag != "S" || dd != d) throw std::runtime_error("read_mesh: expected simplex block");
    counts[static_cast<std::size_t>(d)] = cnt;
    for (int s = 0; s < cnt; ++s) {
      std::vector<VertexRef> refs(static_cast<std::size_t>(d + 1));
      for (auto& r : refs)
        if (!(is >> r.v)) throw std::runtime_error("read_mesh: truncated simplex block");
      if (d == dim) cells.push_back(refs);
    }
  }
  Eigen::VectorXd period;
  if (periodic) {
    int cnt = 0;
    if (!(is >> tag >> cnt) || tag != "IDENT" || cnt != static_cast<int>(cells.size())) throw std::runtime_error("read_mesh: expected IDENT block");
    if (!(is >> tag) || tag != "PERIOD") throw std::runtime_error("read_mesh: expected PERIOD line");
    period.resize(ambient);
    for (int i = 0; i < ambient; ++i) is >> period[i];
    for (auto& cell : cells)
      for (auto& r : cell)
        for (int i = 0; i < ambient; ++i)
          if (!(is >> r.s[static_cast<std::size_t>(i)])) throw std::runtime_error("read_mesh: truncated IDENT block");
  }
  SimplicialComplex K = build_complex("mesh", ambient, dim, std::move(X), std::move(cells), periodic != 0, period);
  for (int d = 0; d <= dim; ++d)
    if (K.count(d) != counts[static_cast<std::size_t>(d)]) throw std::runtime_error("read_mesh: simplex counts disagree with the cells");
  return K;
}

}  // namespace mfeec
