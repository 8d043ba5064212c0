#include "mfeec/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mfeec {

void gauss_legendre_01(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_01: n must be positive");
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Chebyshev-like initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[n - 1 - i] = 0.5 * (x + 1.0);
    weights[n - 1 - i] = 0.5 * w;
  }
}

QuadratureRule quadrature_rule_unchecked(int d, int order) {
  if (d < 0 || d > 3) throw std::invalid_argument("quadrature_rule: dimension must be 0..3");
  if (order < 0) throw std::invalid_argument("quadrature_rule: negative order");
  QuadratureRule q;
  q.d = d;
  q.order = order;
  if (d == 0) {
    q.points.resize(0, 1);
    q.weights = Eigen::VectorXd::Ones(1);
    return q;
  }
  // The collapse adds up to d-1 powers of (1-u) to the first variable's integrand.
  const int n = std::max(1, (order + d + 1) / 2);
  Eigen::VectorXd g, w;
  gauss_legendre_01(n, g, w);
  int total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  q.points.resize(d, total);
  q.weights.resize(total);
  int idx = 0;
  if (d == 1) {
    q.points.row(0) = g.transpose();
    q.weights = w;
    return q;
  }
  if (d == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double u = g[i], v = g[j];
        q.points(0, idx) = u;
        q.points(1, idx) = v * (1.0 - u);
        q.weights[idx] = w[i] * w[j] * (1.0 - u);
        ++idx;
      }
    return q;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const double u = g[i], v = g[j], s = g[l];
        q.points(0, idx) = u;
        q.points(1, idx) = v * (1.0 - u);
        q.points(2, idx) = s * (1.0 - u) * (1.0 - v);
        q.weights[idx] = w[i] * w[j] * w[l] * (1.0 - u) * (1.0 - u) * (1.0 - v);
        ++idx;
      }
  return q;
}

QuadratureRule quadrature_rule(int d, int order) {
  if (order > 10) throw std::invalid_argument("quadrature_rule: order above 10 is not supported");
  return quadrature_rule_unchecked(d, order);
}

}  // namespace mfeec
