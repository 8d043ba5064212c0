#pragma once

#include "mfeec/polynomial.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mfeec {

/// Strictly increasing list of coordinate indices (0-based); empty for k = 0.
using AscendingIndex = std::vector<int>;

/// All strictly ascending k-subsets of {0..d-1} in lexicographic order.
/// Empty when k < 0 or k > d; {[]} when k == 0.
std::vector<AscendingIndex> sigma_set(int k, int d);

/// Position of `sigma` inside sigma_set(sigma.size(), d).
int sigma_position(const AscendingIndex& sigma, int d);

int binomial(int n, int k);

/// Pulls back a k-form value (coefficients over sigma_set(k, A.rows())) along the
/// linear map A : R^{A.cols()} -> R^{A.rows()}. Result is over sigma_set(k, A.cols()).
Eigen::VectorXd pullback_value(const Eigen::Ref<const Eigen::VectorXd>& value, int k,
                               const Eigen::Ref<const Eigen::MatrixXd>& A);

/// Matrix of k x k minors C[s][t] = det(G[sigma_s, sigma_t]) over sigma_set(k, n).
/// With G the inverse metric this is the Gram matrix of the induced inner product on k-covectors.
Eigen::MatrixXd compound_matrix(const Eigen::Ref<const Eigen::MatrixXd>& G, int k);

/// Coefficient of the volume form in a ^ b, for a k-covector a and (n-k)-covector b.
double wedge_top(const Eigen::Ref<const Eigen::VectorXd>& a, int k,
                 const Eigen::Ref<const Eigen::VectorXd>& b, int n);

/// Sign of dx_i ^ dx_sigma relative to dx_{sorted(i, sigma)}; 0 if i is in sigma.
int insertion_sign(int i, const AscendingIndex& sigma);

/// Polynomial differential k-form on R^d: sum over sigma of u_sigma(x) dx^sigma.
class PolyForm {
 public:
  PolyForm(int dim, int degree);

  static PolyForm basic(int dim, const AscendingIndex& sigma, const Polynomial& coefficient);
  /// The 0-form given by p.
  static PolyForm scalar(const Polynomial& p);

  int dim() const { return dim_; }
  /// Form degree k.
  int degree() const { return k_; }
  /// Largest polynomial degree of any coefficient; -1 for the zero form.
  int polynomial_degree() const;

  const std::map<AscendingIndex, Polynomial>& terms() const { return terms_; }
  Polynomial coefficient(const AscendingIndex& sigma) const;
  void add(const AscendingIndex& sigma, const Polynomial& p);

  /// Coefficients at x over sigma_set(k, d).
  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool is_zero(double tol = 0.0) const;
  PolyForm& prune(double tol);

  PolyForm& operator+=(const PolyForm& o);
  PolyForm& operator-=(const PolyForm& o);
  PolyForm& operator*=(double s);
  friend PolyForm operator+(PolyForm a, const PolyForm& b) { return a += b; }
  friend PolyForm operator-(PolyForm a, const PolyForm& b) { return a -= b; }
  friend PolyForm operator*(PolyForm a, double s) { return a *= s; }
  friend PolyForm operator*(double s, PolyForm a) { return a *= s; }

  /// Flattened coefficients over (sigma, monomial of degree <= max_degree).
  Eigen::VectorXd coefficient_vector(int max_degree) const;

  std::string to_string() const;

 private:
  int dim_;
  int k_;
  std::map<AscendingIndex, Polynomial> terms_;
};

PolyForm exterior_derivative(const PolyForm& u);

/// Contraction with the position field X(x) = x. Rejects 0-forms.
PolyForm koszul(const PolyForm& u);

PolyForm wedge(const PolyForm& a, const PolyForm& b);

/// Pullback along t -> offset + A t.
PolyForm pullback_affine(const PolyForm& u, const Eigen::Ref<const Eigen::VectorXd>& offset,
                         const Eigen::Ref<const Eigen::MatrixXd>& A);

/// Offset and matrix of the affine map Delta_l -> Delta_d sending reference vertex j to
/// vertex `vertices[j]` of Delta_d (vertex 0 is the origin, vertex i the unit vector e_i).
struct AffineMap {
  Eigen::VectorXd offset;
  Eigen::MatrixXd matrix;
  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& t) const { return offset + matrix * t; }
};
AffineMap simplex_embedding(int d, const std::vector<int>& vertices);

/// Trace onto the subsimplex with the given ordered vertex list of Delta_d.
PolyForm trace_to_subsimplex(const PolyForm& u, const std::vector<int>& vertices);

/// Integral over Delta_d of a top-degree form (k == d), standard orientation.
double integrate_top_form(const PolyForm& u);

// ---------------------------------------------------------------------------
// Polynomial form spaces

enum class Family { Full, Trimmed };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct FormSpaceSpec {
  Family family = Family::Full;
  int r = 1;
  int k = 0;
  int d = 2;

  /// Valid as a finite element space: 0 <= k <= d, TRIMMED needs r >= 1,
  /// FULL needs r >= 1 unless k == d (then r >= 0).
  bool valid() const;
  bool operator==(const FormSpaceSpec&) const = default;
  std::string to_string() const;
};

/// Dimension of the polynomial space, from the closed-form binomial formulas.
/// Conventions: P_r is {0} for r < 0; P^-_r Lambda^0 = P_r Lambda^0; P^-_r Lambda^k = {0} for r <= 0, k >= 1.
int space_dimension(Family family, int r, int k, int d);

/// Basis of the space (permissive: any r, k, d; trivial spaces give an empty basis).
std::vector<PolyForm> build_basis(Family family, int r, int k, int d);
std::vector<PolyForm> build_basis(const FormSpaceSpec& spec);

/// Selects a maximal linearly independent subset using elimination with a pivot
/// threshold of rel_tol times the largest pivot.
std::vector<PolyForm> reduce_to_basis(const std::vector<PolyForm>& spanning, double rel_tol = 1e-10);

/// Rank of the coefficient matrix of a family of forms.
int form_rank(const std::vector<PolyForm>& forms, double rel_tol = 1e-10);

// ---------------------------------------------------------------------------
// Degrees of freedom and canonical interpolation

/// Moment functional u -> int_F tr_F u ^ weight, F given by its ordered vertices in Delta_d.
struct DofFunctional {
  /// Dimension of the simplex the face belongs to.
  int ambient_dim = 0;
  std::vector<int> face;
  PolyForm weight;
};

/// Maps a sorted vertex subset of Delta_d to the orientation-defining order of its vertices.
using FaceOrdering = std::map<std::vector<int>, std::vector<int>>;

/// Number of weight functions attached to one face of dimension `face_dim`.
int dofs_per_face(const FormSpaceSpec& spec, int face_dim);

/// Functionals grouped by face dimension, then face (lexicographic sorted subset), then weight.
std::vector<DofFunctional> dof_functionals(const FormSpaceSpec& spec, const FaceOrdering& ordering = {});

/// Form field in reference coordinates of Delta_d: point -> coefficients over sigma_set(k, d).
using ReferenceSampler = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Default exactness order for moment pairings: 2r + 2.
int default_dof_quadrature_order(const FormSpaceSpec& spec);

double apply_functional(const DofFunctional& f, int k, const ReferenceSampler& u, int quad_order);

/// A finite element on Delta_d: shape functions dual to the moment functionals.
class LocalElement {
 public:
  explicit LocalElement(const FormSpaceSpec& spec, const FaceOrdering& ordering = {});

  const FormSpaceSpec& spec() const { return spec_; }
  int size() const { return static_cast<int>(shape_.size()); }
  const std::vector<DofFunctional>& functionals() const { return functionals_; }
  /// Nodal shape functions: functional i applied to shape j is delta_ij.
  const std::vector<PolyForm>& shape_functions() const { return shape_; }
  /// Exterior derivatives of the shape functions.
  const std::vector<PolyForm>& shape_derivatives() const { return dshape_; }

  /// Functional values xi_j(u) for all j.
  Eigen::VectorXd moments(const ReferenceSampler& u, int quad_order = -1) const;

  /// Values of all shape functions at x: column j = shape j (rows over sigma_set(k, d)).
  Eigen::MatrixXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  FormSpaceSpec spec_;
  std::vector<DofFunctional> functionals_;
  std::vector<PolyForm> shape_;
  std::vector<PolyForm> dshape_;
};

/// Coefficients of the canonical interpolant in the build_basis(spec) basis.
/// quad_order < 0 selects default_dof_quadrature_order(spec).
Eigen::VectorXd canonical_interpolate(const ReferenceSampler& u, const FormSpaceSpec& spec, int quad_order = -1);

/// Sum of coefficients times basis forms.
PolyForm combine(const std::vector<PolyForm>& basis, const Eigen::Ref<const Eigen::VectorXd>& coefficients);

ReferenceSampler sampler_of(const PolyForm& u);

}  // namespace mfeec
