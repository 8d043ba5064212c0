#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mfeec {

/// Quadrature on the reference simplex Delta_d = conv(0, e_1, ..., e_d).
struct QuadratureRule {
  int d = 0;
  int order = 0;
  /// Column j is point j.
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
};

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre_01(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Collapsed-coordinate Gauss rule, exact for total degree <= order.
/// d in {0, 1, 2, 3}; order in [0, 10]. Throws std::invalid_argument otherwise.
QuadratureRule quadrature_rule(int d, int order);

/// Same construction without the order cap, for over-integration in tests and
/// reference computations.
QuadratureRule quadrature_rule_unchecked(int d, int order);

}  // namespace mfeec
