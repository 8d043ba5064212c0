#pragma once

#include "mfeec/mesh.hpp"
#include "mfeec/polyform.hpp"
#include "mfeec/quadrature.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <vector>

namespace mfeec {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Global numbering of the degrees of freedom of a conforming space on a complex.
///
/// DOFs are numbered by subsimplex dimension, then subsimplex id, then weight index.
/// Orientation is carried by the local functionals: every cell builds its element with the
/// vertex orderings induced by the global simplex orientation, so shared functionals coincide.
struct DofTable {
  FormSpaceSpec spec;
  std::vector<int> per_simplex;  ///< DOFs attached to one simplex of each dimension
  std::vector<int> offset;       ///< first global index for each dimension
  int total = 0;
  /// cell_dofs[c][j]: global index of local functional j of cell c.
  std::vector<std::vector<int>> cell_dofs;
  /// Element of each cell (shared between cells with the same orderings).
  std::vector<std::shared_ptr<const LocalElement>> elements;
  /// One (cell, local index) pair per global DOF.
  std::vector<std::pair<int, int>> owner;

  int global_index(int dim, int simplex, int weight) const {
    return offset[static_cast<std::size_t>(dim)] + simplex * per_simplex[static_cast<std::size_t>(dim)] + weight;
  }
  const LocalElement& element(int c) const { return *elements[static_cast<std::size_t>(c)]; }
};

DofTable build_dof_table(const SimplicialComplex& K, const FormSpaceSpec& spec);

/// True when d maps the source space into the target space (consecutive spaces match).
bool compatible_pair(const FormSpaceSpec& from, const FormSpaceSpec& to);

/// Space for k+1 that pairs with `spec` in a complex: FULL r -> TRIMMED r, TRIMMED r -> TRIMMED r.
FormSpaceSpec next_space(const FormSpaceSpec& spec);
/// Space for k-1 whose derivative lands in `spec`: FULL r -> TRIMMED r+1 (equal to FULL r+1 at k-1 = 0),
/// TRIMMED r -> TRIMMED r.
FormSpaceSpec previous_space(const FormSpaceSpec& spec);

/// Matrix of d from `from` to `to`; rows via the owner cell's functionals.
SparseMatrix assemble_exterior_derivative(const SimplicialComplex& K, const DofTable& from, const DofTable& to);

/// Default mass quadrature order: 2r + 2l, plus 4 for non-polynomial (exact) geometry.
int default_mass_order(const FormSpaceSpec& spec, const MeshGeometry& G);

/// Metric-weighted mass matrix; quad_order < 0 selects default_mass_order.
SparseMatrix assemble_mass(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G, int quad_order = -1);

/// Physical form field: ambient point -> coefficients over sigma_set(k, ambient_dim).
using PhysicalSampler = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Reference-coordinate sampler of the pullback of u to cell c.
ReferenceSampler pullback_sampler(const MeshGeometry& G, int c, int k, const PhysicalSampler& u);

/// Global canonical interpolant; each DOF is evaluated once on its owner cell.
Eigen::VectorXd global_interpolate(const SimplicialComplex& K, const MeshGeometry& G, const DofTable& table,
                                   const PhysicalSampler& u, int quad_order = -1);

/// Cellwise field in reference coordinates: (cell, t) -> coefficients over sigma_set(k, n).
using CellSampler = std::function<Eigen::VectorXd(int, const Eigen::VectorXd&)>;

/// Global canonical interpolant of a cellwise reference field (traces must agree across faces).
Eigen::VectorXd global_interpolate_reference(const DofTable& table, const CellSampler& u, int quad_order = -1);

/// Values of the FE function at reference point t of cell c (coefficients over sigma_set(k, n)).
Eigen::VectorXd evaluate_fe(const DofTable& table, const Eigen::Ref<const Eigen::VectorXd>& coeffs, int c,
                            const Eigen::Ref<const Eigen::VectorXd>& t);

/// Values of d of the FE function at reference point t of cell c.
Eigen::VectorXd evaluate_fe_derivative(const DofTable& table, const Eigen::Ref<const Eigen::VectorXd>& coeffs, int c,
                                       const Eigen::Ref<const Eigen::VectorXd>& t);

/// Load vector F_i = <u, phi_i> for a physical field u.
Eigen::VectorXd assemble_load(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G,
                              const PhysicalSampler& u, int quad_order = -1);

/// L2 distance between the pullback of u and the FE function, under the metric of G.
double l2_error(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G,
                const Eigen::Ref<const Eigen::VectorXd>& coeffs, const PhysicalSampler& u, int quad_order = -1);

/// Induced inner product on k-covectors: Gram matrix of g^{-1} minors.
Eigen::MatrixXd form_gram(const Eigen::Ref<const Eigen::MatrixXd>& g, int k);

/// Coordinate text dump compatible with MatrixMarket (0-based indices as documented).
void write_matrix_market(std::ostream& os, const SparseMatrix& A);

}  // namespace mfeec
