#pragma once

#include "mfeec/assembly.hpp"

#include <optional>
#include <string>

namespace mfeec {

/// Matrices of the mixed Hodge-Laplace problem for k-forms.
///
/// For k = 0 the (k-1) blocks are empty (zero rows or columns).
struct HodgeProblem {
  int k = 0;
  SparseMatrix M_prev;  ///< M_{k-1}
  SparseMatrix M;       ///< M_k
  SparseMatrix M_next;  ///< M_{k+1}
  SparseMatrix D_prev;  ///< D_{k-1}: V_{k-1} -> V_k
  SparseMatrix D;       ///< D_k: V_k -> V_{k+1}
  Eigen::VectorXd F;    ///< load vector <f, phi_i>

  int size_prev() const { return static_cast<int>(M_prev.rows()); }
  int size() const { return static_cast<int>(M.rows()); }
  /// Throws std::invalid_argument when the dimensions do not chain.
  void check() const;
};

/// The three spaces of a Hodge problem and their matrices on a given geometry.
struct HodgeSpaces {
  DofTable prev, cur, next;
  HodgeProblem problem;  ///< F left empty
};

/// Builds V_{k-1} = previous_space(spec), V_k = spec, V_{k+1} = next_space(spec) and their matrices.
HodgeSpaces build_hodge_spaces(const SimplicialComplex& K, const MeshGeometry& G, const FormSpaceSpec& spec);

struct HarmonicBasis {
  int k = 0;
  Eigen::MatrixXd columns;  ///< M-orthonormal basis of the discrete harmonic forms
  Eigen::MatrixXd gram;     ///< columns^T M columns
  int betti() const { return static_cast<int>(columns.cols()); }
};

/// Basis of ker D_k intersected with the M_k-orthogonal complement of range D_{k-1}.
///
/// The space is the kernel of A = D_k^T M_{k+1} D_k + M_k D_{k-1} diag(M_{k-1})^{-1} D_{k-1}^T M_k,
/// found by shifted inverse subspace iteration followed by Rayleigh-Ritz.
HarmonicBasis harmonic_forms(const HodgeProblem& P);

struct SolveReport {
  int k = 0;
  int dofs = 0;
  Eigen::VectorXd sigma, u, p;
  /// Max-norm residuals of the three weak equations.
  double residuals[3] = {0.0, 0.0, 0.0};
  int betti = 0;
  /// (|sigma| + |u| + |p|) / |f| in the M norms.
  double stability = 0.0;
  double max_harmonic_inner = 0.0;  ///< max |<u, q>| over harmonic basis columns
  double timing_ms = 0.0;
  std::optional<double> E, E_d;

  std::string to_json() const;
};

/// Solves the bordered saddle-point system
///   [ -M_{k-1}      D_{k-1}^T M_k       0    ] [sigma]   [0]
///   [ M_k D_{k-1}   D_k^T M_{k+1} D_k   M_k H] [  u  ] = [F]
///   [ 0             H^T M_k             0    ] [  p  ]   [0]
/// Throws std::runtime_error when the factorization fails.
SolveReport solve_hodge_laplace(const HodgeProblem& P, const HarmonicBasis& H);
SolveReport solve_hodge_laplace(const HodgeProblem& P);

/// Discrete Poincare-Friedrichs constant 1 / sqrt(lambda_min) of (D^T M_{k+1} D, M_k)
/// on the complement of ker D (dense; throws std::invalid_argument above max_dofs).
double poincare_constant(const SparseMatrix& D, const SparseMatrix& M, const SparseMatrix& M_next, int max_dofs = 6000);

struct ErrorFunctionals {
  double E = 0.0;     ///< L2 best approximation error of u
  double E_d = 0.0;   ///< HΛ best approximation error of u
  double E_du = 0.0;  ///< L2 best approximation error of du in V_{k+1}
  /// |u - I u| + |du - I du| with the canonical interpolant I; an upper bound for E_d.
  double componentwise = 0.0;
};

/// Best approximation errors by the L2 and HΛ orthogonal projections.
ErrorFunctionals error_functionals(const SimplicialComplex& K, const MeshGeometry& G, const HodgeSpaces& S,
                                   const PhysicalSampler& u, const PhysicalSampler& du);

/// Coefficients of the M-orthogonal projection of the load vector F.
Eigen::VectorXd l2_projection(const SparseMatrix& M, const Eigen::VectorXd& F);

}  // namespace mfeec
