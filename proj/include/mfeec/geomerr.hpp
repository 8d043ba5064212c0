#pragma once

#include "mfeec/hodge.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mfeec {

/// Mass matrices of one DOF space under the exact and the computational metric.
struct GeometryPair {
  SparseMatrix M_exact;
  SparseMatrix M_comp;
  /// Throws std::invalid_argument on mismatched sizes.
  void check() const;
};

/// Mass matrices of `table` under exact geometry and the degree-l lift.
GeometryPair make_geometry_pair(const SimplicialComplex& K, const Surface& surface, const DofTable& table, int l);

/// max |1 - lambda| over the generalized eigenvalues of (M_comp, M_exact), i.e. |I - A*A| in the exact norm.
/// Dense; throws std::invalid_argument when either matrix is not SPD or above max_dofs.
double geometric_error_norm(const GeometryPair& pair, int max_dofs = 10000);

/// C_A = sqrt(lambda_max(M_exact, M_comp)).
double operator_norm_CA(const GeometryPair& pair, int max_dofs = 10000);

struct CrimeGap {
  double gap = 0.0;         ///< |sigma~ - sigma^| + |u~ - u^| + |p~ - p^| in the exact norms
  double f_norm = 0.0;      ///< |f| in the exact M_k norm
  double geom_error = 0.0;  ///< largest geometric_error_norm over the blocks
  /// gap / (geom_error f_norm); zero when the metrics coincide.
  double constant() const { return geom_error > 0.0 && f_norm > 0.0 ? gap / (geom_error * f_norm) : 0.0; }
};

/// Solves both problems with the same load coefficients (F = M f in each metric) and compares.
/// The harmonic parts are compared as forms (H p), since the two harmonic bases differ.
/// Throws std::invalid_argument when the DOF spaces do not match.
CrimeGap crime_gap(const HodgeProblem& exact, const HodgeProblem& comp, const Eigen::VectorXd& f_coeffs);

/// Least squares slope of log(value) against log(h).
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< root mean square of the log residuals
};
SlopeFit fit_slope(const std::vector<double>& h, const std::vector<double>& values);

struct RateTable {
  std::string name;
  std::vector<double> h;  ///< strictly decreasing
  std::vector<double> values;

  /// Throws std::invalid_argument for fewer than 3 rows or h not strictly decreasing.
  SlopeFit fit() const;
  /// "h,value" rows after a comment header with the fitted slope; 17 significant digits.
  std::string to_csv() const;
};

/// Manufactured problem on an analytic surface: Hodge Laplacian eigenfunctions.
struct ManufacturedSolution {
  PhysicalSampler f, u, du, sigma;
  bool has_sigma = false;
  bool has_du = false;
};

/// sphere: k = 0 (x3 / 2), k = 1 (d x3), k = 2 (x3 vol); flat-torus: trigonometric forms for k = 0, 1, 2.
/// Throws std::invalid_argument for other surfaces.
ManufacturedSolution manufactured_solution(const std::string& surface, int k);

/// Complex for a named surface at a refinement level: sphere and torus levels as given,
/// flat torus m = 2^(level + 1), cubed sphere m = 2^level.
SimplicialComplex surface_complex(const std::string& surface, int level);
std::optional<Surface> surface_geometry(const std::string& surface);

struct StudyConfig {
  std::string surface = "sphere";
  FormSpaceSpec spec{Family::Full, 1, 0, 2};
  int geom_degree = 1;
  bool exact_geometry = true;  ///< solve with exact geometry; otherwise with the degree-l lift
  int level_min = 1;
  int level_max = 4;
  int quad_order = -1;
};

struct Study {
  StudyConfig config;
  std::vector<RateTable> tables;
  std::string to_json() const;
};

/// Solves the manufactured problem on each level and tabulates |u - u_h|, |du - D u_h|, |sigma - sigma_h|
/// and, on curved surfaces, the geometric error norm of the degree-l lift.
/// Throws std::invalid_argument for fewer than 3 levels.
Study convergence_study(const StudyConfig& config);

}  // namespace mfeec
