#pragma once

#include "mfeec/polyform.hpp"
#include "mfeec/polynomial.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <compare>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mfeec {

/// Integer lattice translation attached to a vertex occurrence on a periodic mesh.
using Shift = std::array<int, 3>;

/// A vertex occurrence: vertex id plus the period translation of its copy.
struct VertexRef {
  int v = 0;
  Shift s{0, 0, 0};
  auto operator<=>(const VertexRef&) const = default;
};

/// Canonical simplex key: vertex occurrences sorted ascending, shifts relative to the first one.
/// Without periodicity this is just the ascending vertex id list.
using SimplexKey = std::vector<VertexRef>;

SimplexKey canonical_key(std::vector<VertexRef> refs);

/// Sign of the permutation that sorts `refs`.
int sorting_sign(const std::vector<VertexRef>& refs);

/// Oriented simplicial complex, possibly with periodic identifications.
///
/// Top cells keep their own (positively oriented) vertex order; lower simplices are
/// oriented by their canonical key order. Simplex ids of top dimension coincide with cell ids.
struct SimplicialComplex {
  std::string name;
  int ambient_dim = 3;
  int dim = 2;
  bool periodic = false;
  /// Period per ambient axis (only used when periodic).
  Eigen::VectorXd period;
  /// Column j holds the coordinates of vertex j.
  Eigen::MatrixXd vertices;
  std::vector<std::vector<VertexRef>> cells;
  /// simplices[d] lists the canonical keys of all d-simplices.
  std::vector<std::vector<SimplexKey>> simplices;
  std::vector<std::map<SimplexKey, int>> index;
  /// cell_faces[c][d][i]: id of the d-face of cell c spanned by the i-th sorted local subset
  /// (lexicographic order of (d+1)-subsets of {0..dim}).
  std::vector<std::vector<std::vector<int>>> cell_faces;
  /// Per cell: sorted local subset -> local vertex order following the global orientation.
  std::vector<FaceOrdering> cell_orderings;

  int num_vertices() const { return static_cast<int>(vertices.cols()); }
  int count(int d) const { return d < 0 || d > dim ? 0 : static_cast<int>(simplices[d].size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int euler_characteristic() const;

  /// Coordinates of the j-th vertex of cell c in the unwrapped chart.
  Eigen::VectorXd cell_vertex(int c, int j) const;
  /// Columns are the unwrapped vertex coordinates of cell c.
  Eigen::MatrixXd cell_coordinates(int c) const;
  /// Coordinates of a vertex occurrence.
  Eigen::VectorXd position(const VertexRef& r) const;
  /// Cells containing vertex v (each listed once).
  const std::vector<int>& vertex_cells(int v) const { return vertex_cells_[static_cast<std::size_t>(v)]; }

  // Set by build_complex.
  std::vector<std::vector<int>> vertex_cells_;
};

/// Builds all faces, indices, and orderings. Cells must be given in positive orientation.
SimplicialComplex build_complex(std::string name, int ambient_dim, int dim, Eigen::MatrixXd vertices,
                                std::vector<std::vector<VertexRef>> cells, bool periodic = false,
                                Eigen::VectorXd period = {});

/// All sorted (size)-subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> sorted_subsets(int n, int size);

/// Signed incidence matrix from d-simplices to (d-1)-simplices (d >= 1), integer entries.
Eigen::SparseMatrix<int> boundary_matrix(const SimplicialComplex& K, int d);

/// Checks the triangulation axioms: two top cells meet in a stored common face or not at all
/// (in the universal cover for periodic meshes), and every codimension-one face has two cofaces.
/// Returns an empty string on success, otherwise a description of the first violation.
std::string check_triangulation(const SimplicialComplex& K);

// ---------------------------------------------------------------------------
// Surfaces

enum class SurfaceKind { Sphere, Torus, FlatTorus };

struct ClosestPoint {
  Eigen::Vector3d a;
  double delta = 0.0;
  Eigen::Vector3d normal;
};

/// Analytic embedded surface with closest-point projection.
struct Surface {
  SurfaceKind kind = SurfaceKind::Sphere;
  double radius = 1.0;        ///< sphere radius
  double major = 2.0;         ///< torus R
  double minor = 0.5;         ///< torus r

  static Surface sphere(double radius = 1.0) { return {SurfaceKind::Sphere, radius, 0.0, 0.0}; }
  static Surface torus(double R = 2.0, double r = 0.5) { return {SurfaceKind::Torus, 0.0, R, r}; }

  /// Throws std::domain_error outside the tubular neighborhood.
  ClosestPoint closest_point(const Eigen::Vector3d& x) const;
  /// Jacobian of the closest-point map a at x.
  Eigen::Matrix3d closest_point_jacobian(const Eigen::Vector3d& x) const;
  double area() const;
  std::string to_string() const;
};

// ---------------------------------------------------------------------------
// Generators

SimplicialComplex generate_sphere(int level, double radius = 1.0);
SimplicialComplex generate_flat_torus(int m);
SimplicialComplex generate_round_torus(int m, double R = 2.0, double r = 0.5);

struct CubedSphere {
  SimplicialComplex complex;
  /// Largest |x| / 1 over the cube boundary vertices before projection.
  double distortion = 0.0;
};
CubedSphere generate_cubed_sphere(int m);

// ---------------------------------------------------------------------------
// Cell maps and metrics

/// Equispaced Lagrange basis of degree l on Delta_n, nodes alpha / l in Cartesian coordinates.
struct LagrangeBasis {
  int n = 2;
  int degree = 1;
  Eigen::MatrixXd nodes;  ///< n x N
  std::vector<Polynomial> shape;
  std::vector<std::vector<Polynomial>> grad;  ///< grad[j][i] = d shape_j / d t_i

  static const LagrangeBasis& get(int n, int degree);
};

/// Degree-l polynomial map from the reference simplex of a cell to ambient space.
struct CellMap {
  int cell = 0;
  int degree = 1;
  Eigen::MatrixXd node_values;  ///< ambient x N, values at LagrangeBasis nodes
  const LagrangeBasis* basis = nullptr;

  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& t) const;
  /// ambient x n
  Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd>& t) const;
};

/// Affine chart of each cell (degree 1, the flat simplex in unwrapped coordinates).
std::vector<CellMap> affine_cells(const SimplicialComplex& K);

/// Degree-l interpolants of a composed with the affine charts; l = 1 returns the affine charts.
/// Throws std::domain_error when a node leaves the tubular neighborhood.
std::vector<CellMap> lift_cells(const SimplicialComplex& K, const Surface& surface, int l);

/// Point, Jacobian, and metric of each cell; either a polynomial cell map or its composition
/// with the closest-point projection ("exact" geometry).
class MeshGeometry {
 public:
  /// Polynomial geometry from the given cell maps.
  explicit MeshGeometry(std::vector<CellMap> maps);
  /// Exact geometry a o map for the given maps.
  MeshGeometry(std::vector<CellMap> maps, const Surface& surface);

  int num_cells() const { return static_cast<int>(maps_.size()); }
  int degree() const { return maps_.empty() ? 1 : maps_.front().degree; }
  bool exact() const { return surface_.has_value(); }
  const CellMap& map(int c) const { return maps_[static_cast<std::size_t>(c)]; }

  Eigen::VectorXd point(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const;
  Eigen::MatrixXd jacobian(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const;
  /// Pullback metric J^T J; throws std::runtime_error for a degenerate Jacobian.
  Eigen::MatrixXd metric(int c, const Eigen::Ref<const Eigen::VectorXd>& t) const;

 private:
  std::vector<CellMap> maps_;
  std::optional<Surface> surface_;
};

/// Pullback metric of a single cell map as an evaluator.
using MetricField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
MetricField pullback_metric(const CellMap& map);
MetricField pullback_metric(const CellMap& map, const Surface& surface);

/// Polynomial geometry of the complex: affine charts for flat tori, lifts of degree l otherwise.
MeshGeometry computational_geometry(const SimplicialComplex& K, const std::optional<Surface>& surface, int l);
/// Exact geometry (closest point composed with the degree-l lift); the polynomial one on flat tori.
MeshGeometry exact_geometry(const SimplicialComplex& K, const std::optional<Surface>& surface, int l);

// ---------------------------------------------------------------------------
// Quality

struct MeshQualityReport {
  std::vector<double> h_T;     ///< per cell: largest metric edge length
  std::vector<double> h_V;     ///< per vertex: smallest h_T over incident cells
  std::vector<double> c1_T;    ///< per cell: max(max |J| / h_T, max |J^+| h_T)
  int C_sharp = 0;             ///< largest number of cells meeting a cell
  double C_triangle = 1.0;     ///< max h_T / h_S over cells and their edges and vertices
  double h_min = 0.0;
  double h_max = 0.0;

  /// Piecewise-affine meshsize h* at the reference point t of cell c.
  double h_star(const SimplicialComplex& K, int c, const Eigen::Ref<const Eigen::VectorXd>& t) const;
};

MeshQualityReport quality_report(const SimplicialComplex& K, const MeshGeometry& geometry);

/// Cell and reference coordinates of a point of a flat periodic mesh (wrapping into the period cell).
struct Location {
  int cell = -1;
  Eigen::VectorXd t;
};
Location locate(const SimplicialComplex& K, const Eigen::Ref<const Eigen::VectorXd>& x);

// ---------------------------------------------------------------------------
// IO

void write_mesh(std::ostream& os, const SimplicialComplex& K);
SimplicialComplex read_mesh(std::istream& is);

}  // namespace mfeec
