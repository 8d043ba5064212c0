#pragma once

#include <Eigen/Dense>

#include <map>
#include <vector>

namespace mfeec {

/// Exponent vector of a monomial x_0^{e_0} ... x_{n-1}^{e_{n-1}}.
using Exponent = std::vector<int>;

/// Graded lexicographic order: total degree first, then lexicographic with x_0 largest.
struct GradedLex {
  bool operator()(const Exponent& a, const Exponent& b) const;
};

/// All exponents of total degree <= max_degree in n variables, in graded-lex order.
std::vector<Exponent> monomials_upto(int num_vars, int max_degree);

/// All exponents of total degree exactly `degree`.
std::vector<Exponent> monomials_of_degree(int num_vars, int degree);

/// Sparse multivariate polynomial with real coefficients.
///
/// Coefficients are stored keyed by exponent in graded-lex order; zero terms
/// are dropped on every arithmetic operation.
class Polynomial {
 public:
  using TermMap = std::map<Exponent, double, GradedLex>;

  explicit Polynomial(int num_vars = 0) : num_vars_(num_vars) {}

  static Polynomial constant(int num_vars, double c);
  static Polynomial variable(int num_vars, int i);
  static Polynomial monomial(const Exponent& e, double c = 1.0);

  int num_vars() const { return num_vars_; }
  /// Total degree; -1 for the zero polynomial.
  int degree() const;
  bool is_zero(double tol = 0.0) const;
  const TermMap& terms() const { return terms_; }
  double coefficient(const Exponent& e) const;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Polynomial derivative(int i) const;

  /// Substitutes x = offset + A t, giving a polynomial in A.cols() variables.
  Polynomial compose_affine(const Eigen::Ref<const Eigen::VectorXd>& offset,
                            const Eigen::Ref<const Eigen::MatrixXd>& A) const;

  /// Exact integral over the reference simplex spanned by 0 and the unit vectors.
  double integrate_simplex() const;

  /// Drops terms with |coefficient| <= tol.
  Polynomial& prune(double tol);

  void add_term(const Exponent& e, double c);

  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial& operator*=(double s);

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator-(Polynomial a) { return a *= -1.0; }

  bool operator==(const Polynomial& other) const;

 private:
  int num_vars_ = 0;
  TermMap terms_;
};

/// Exact integral of x^alpha over the reference n-simplex: prod(alpha_i!) / (n + |alpha|)!.
double simplex_monomial_integral(const Exponent& alpha);

}  // namespace mfeec
