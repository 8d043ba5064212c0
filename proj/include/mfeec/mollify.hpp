#pragma once

#include "mfeec/assembly.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mfeec {

/// mu(x) = c_n exp(1 / (|x|^2 - 1)) on the open unit ball, zero elsewhere.
struct Mollifier {
  int n = 2;
  double c = 1.0;  ///< normalization constant c_n

  double radial(double r) const;
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& y) const { return radial(y.norm()); }
  /// max |grad mu| (attained on the radial profile).
  double max_gradient() const;
};

/// n in {1, 2}; c_n from a high-order radial quadrature so that the integral is 1.
Mollifier standard_mollifier(int n);

/// Quadrature on the unit ball with the mollifier folded into the weights.
struct BallRule {
  int n = 2;
  Eigen::MatrixXd points;   ///< n x N
  Eigen::VectorXd weights;  ///< mu(y_q) times the cubature weight, renormalized to sum 1
  int size() const { return static_cast<int>(weights.size()); }
};

/// Tensor Gauss rule in polar coordinates (nr radial by nt angular points); Gauss rule on [-1, 1] for n = 1.
BallRule ball_rule(const Mollifier& mu, int nr = 12, int nt = 12);

/// Smoothing radius phi with gradient.
struct RadiusField {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  double epsilon = 0.0;    ///< max phi
  double lipschitz = 0.0;  ///< measured max |grad phi|
  double bound = 0.0;      ///< a priori bound on |grad phi|, if known
  std::string support;     ///< human-readable support description
};

RadiusField constant_radius(double epsilon, int n = 2);

/// phi = epsilon on B_a(center), zero outside B_b(center), built as epsilon times the
/// indicator of B_{(a+b)/2}(center) convolved with mu scaled to radius (b-a)/2.
/// Distances are periodic with the given period when period > 0.
/// Throws std::invalid_argument unless 0 <= a < b (and b < period / 2 when periodic).
RadiusField bump_field(const Eigen::Vector2d& center, double a, double b, double epsilon, const Mollifier& mu,
                       double period = 0.0);

/// (R_phi u)(x) = sum_q w_q (Phi_{phi,y_q}^* u)(x), Phi_{phi,y}(x) = x + phi(x) y.
Eigen::VectorXd mollify_at(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                           const Eigen::Ref<const Eigen::VectorXd>& x);

/// Exterior derivative of a form field by central differences with step h.
Eigen::VectorXd finite_difference_d(const PhysicalSampler& u, int k, const Eigen::Ref<const Eigen::VectorXd>& x, double h = 1e-5);

/// max over the sample points of |d(R u) - R(du)|, d(R u) by central differences (step 1e-5).
double commutation_residual(const PhysicalSampler& u, const PhysicalSampler& du, int k, const RadiusField& phi,
                            const BallRule& rule, const std::vector<Eigen::VectorXd>& samples);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double L = 0.0;  ///< measured max |grad phi| on the set
  bool ok() const { return lhs <= rhs * (1.0 + 1e-6); }
};

/// |R u|_{L^p(A)} against (1 + L)^k (1 - L)^{-n/p} |u|_{L^p(B_phi(A))} for the disk A = B_radius(center),
/// with B_phi(A) replaced by the disk of radius radius + max phi. p = 0 means p = infinity.
/// Throws std::invalid_argument when L >= 1.
BoundCheck lp_bound_check(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                          const Eigen::Vector2d& center, double radius, double p);

/// Pointwise bound |R u(x)| <= |B_1|^{(p-1)/p} max mu (1 + |grad phi(x)|)^k phi(x)^{-n/p} |u|_{L^p(B_phi(x)(x))}.
/// Requires phi(x) > 0.
BoundCheck pointwise_bound_check(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                                 const Mollifier& mu, const Eigen::Ref<const Eigen::VectorXd>& x, double p);

// ---------------------------------------------------------------------------
// Smoothed interpolation on the flat torus

/// Geometric constants of the patch condition eps C_triangle C_h <= beta.
struct PatchConstants {
  double beta = 0.0;        ///< min over cells of dist(T, boundary of the vertex patch) / h_T
  double C_triangle = 1.0;  ///< from the quality report
  double C_h = 1.0;         ///< max over cells of h* / h_T at the vertices
  double h_star = 0.0;      ///< value of the (constant) meshsize function
  bool constant_h_star = false;
  double max_epsilon() const { return beta / (C_triangle * C_h); }
};

PatchConstants patch_constants(const SimplicialComplex& K, const MeshGeometry& G);

/// Q = I o R with constant radius rho = eps h*: every ball point is a translation, and the
/// interpolant of each translated FE function is computed exactly by clipping against the mesh.
/// Throws std::domain_error when a translated face leaves its vertex patch.
SparseMatrix quasi_interpolant_matrix(const SimplicialComplex& K, const DofTable& table, double rho, const BallRule& rule);

/// Operator norm of A in the M norm: sqrt(lambda_max(A^T M A, M)) (dense).
double m_operator_norm(const Eigen::MatrixXd& A, const SparseMatrix& M);

struct SchoberlInverse {
  Eigen::MatrixXd J;
  double q = 0.0;       ///< |Id - Q|_M
  int terms = 0;        ///< Neumann series length
  double J_norm = 0.0;  ///< |J|_M
};

/// J = (Q restricted to the FE space)^{-1} = sum_m (Id - Q)^m, stopped once q^m < 1e-12.
/// Throws std::domain_error when |Id - Q|_M > 1/2.
SchoberlInverse schoberl_inverse(const SparseMatrix& Q, const SparseMatrix& M);

/// pi u = J I(R u) for a smooth periodic sampler with constant radius rho.
Eigen::VectorXd smoothed_projection(const SimplicialComplex& K, const MeshGeometry& G, const DofTable& table,
                                    const Eigen::MatrixXd& J, const PhysicalSampler& u, double rho, const BallRule& rule,
                                    int quad_order = -1);

struct EpsilonTrial {
  double epsilon = 0.0;
  double q = 0.0;  ///< max |Id - Q|_M over the spaces, or -1 if not computed
  std::string rejected;  ///< empty when accepted
};

struct EpsilonSearch {
  double epsilon = 0.0;
  double rho = 0.0;
  double q = 0.0;               ///< max over the spaces of |Id - Q|_M
  std::vector<SparseMatrix> Q;  ///< one per space, in input order
  PatchConstants patch;
  std::vector<EpsilonTrial> trials;
};

/// Downward search eps in {0.2, 0.1, 0.05, ...} (at most `steps` values) for the first eps meeting
/// the patch bound and |Id - Q|_M <= 1/2 on every given space. Throws std::domain_error when none does.
EpsilonSearch epsilon_search(const SimplicialComplex& K, const MeshGeometry& G, const std::vector<DofTable>& tables,
                             const BallRule& rule, int steps = 8);

struct MollifyReport {
  double epsilon = 0.0;
  double L = 0.0;
  bool half_bound_ok = false;
  double commutation_residual = 0.0;
  double J_norm = 0.0;
  std::string to_json() const;
};

}  // namespace mfeec
