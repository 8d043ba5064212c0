#include "doctest.h"

#include "mfeec/mollify.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mfeec;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd point(double x, double y) { return Eigen::Vector2d(x, y); }

/// Quadratic 0-form and its derivative.
struct Quadratic {
  double a[6];
  Eigen::VectorXd value(const Eigen::VectorXd& x) const {
    return Eigen::VectorXd::Constant(1, a[0] + a[1] * x[0] + a[2] * x[1] + a[3] * x[0] * x[0] + a[4] * x[0] * x[1] +
                                            a[5] * x[1] * x[1]);
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    return Eigen::Vector2d(a[1] + 2 * a[3] * x[0] + a[4] * x[1], a[2] + a[4] * x[0] + 2 * a[5] * x[1]);
  }
};

Quadratic random_quadratic(std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Quadratic q;
  for (double& c : q.a) c = U(rng);
  return q;
}

}  // namespace

TEST_CASE("standard mollifier") {
  for (int n : {1, 2}) {
    const Mollifier mu = standard_mollifier(n);
    CHECK(mu(Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)))) == 0.0);
    CHECK(mu(Eigen::VectorXd::Constant(n, 2.0)) == 0.0);
    CHECK(mu.radial(0.5) > 0.0);
    // Oracle: composite Simpson rule on the radial profile.
    const int N = 200000;
    double s = 0.0;
    for (int i = 0; i <= N; ++i) {
      const double r = static_cast<double>(i) / N;
      const double f = r < 1.0 ? std::exp(1.0 / (r * r - 1.0)) * (n == 1 ? 2.0 : 2 * kPi * r) : 0.0;
      s += f * (i == 0 || i == N ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    s /= 3.0 * N;
    CHECK(mu.radial(0.0) == doctest::Approx(std::exp(-1.0) / s).epsilon(1e-9));
    // Integral by an independent Cartesian midpoint rule in 2D.
    if (n == 2) {
      const int m = 1000;
      double total = 0.0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) total += mu(point(-1 + (i + 0.5) * 2.0 / m, -1 + (j + 0.5) * 2.0 / m));
      CHECK(total * 4.0 / (m * m) == doctest::Approx(1.0).epsilon(1e-6));
    }
    const BallRule b = ball_rule(mu);
    CHECK(b.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(b.weights.minCoeff() >= 0.0);
  }
  // Unnormalized ball rule integral of mu is 1 to 1e-8.
  const Mollifier mu = standard_mollifier(2);
  Eigen::VectorXd x, w;
  gauss_legendre_01(40, x, w);
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) s += w[i] * 2 * kPi * x[i] * mu.radial(x[i]);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_THROWS_AS(standard_mollifier(3), std::invalid_argument);
}

TEST_CASE("bump field") {
  const Mollifier mu = standard_mollifier(2);
  const Eigen::Vector2d c(0.5, 0.5);
  const double a = 0.1, b = 0.3, eps = 0.05;
  const RadiusField phi = bump_field(c, a, b, eps, mu, 1.0);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double r = a * U(rng), t = 2 * kPi * U(rng);
    const Eigen::VectorXd x = c + r * Eigen::Vector2d(std::cos(t), std::sin(t));
    CHECK(phi.value(x) == eps);
    CHECK(phi.gradient(x).norm() == 0.0);
  }
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = point(U(rng), U(rng));
    if ((x - c).norm() >= b) {
      CHECK(phi.value(x) == 0.0);
    }
    CHECK(phi.value(x) >= 0.0);
    CHECK(phi.value(x) <= eps);
  }
  // Periodic wrap: the bump around (0.05, 0.05) reaches (0.95, 0.95).
  const RadiusField wrap = bump_field(Eigen::Vector2d(0.05, 0.05), a, b, eps, mu, 1.0);
  CHECK(wrap.value(point(0.98, 0.99)) == eps);
  // Gradient against central differences of the value.
  for (double d : {0.12, 0.15, 0.2, 0.25, 0.28}) {
    const Eigen::VectorXd x = c + d * Eigen::Vector2d(0.6, 0.8);
    const double h = 1e-6;
    const Eigen::Vector2d fd((phi.value(x + h * Eigen::Vector2d::UnitX()) - phi.value(x - h * Eigen::Vector2d::UnitX())) / (2 * h),
                             (phi.value(x + h * Eigen::Vector2d::UnitY()) - phi.value(x - h * Eigen::Vector2d::UnitY())) / (2 * h));
    CHECK((phi.gradient(x) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
  CHECK(phi.lipschitz > 0.0);
  CHECK(phi.lipschitz <= phi.bound);
  CHECK_THROWS_AS(bump_field(c, 0.3, 0.1, eps, mu), std::invalid_argument);
}

TEST_CASE("translation map determinant") {
  std::mt19937 rng(5);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d y(N(rng), N(rng)), g(N(rng), N(rng));
    const Eigen::Matrix2d J = Eigen::Matrix2d::Identity() + y * g.transpose();
    CHECK(J.determinant() == doctest::Approx(1.0 + y.dot(g)).epsilon(1e-12));
    // The pullback of dx^1 ^ dx^2 is the determinant.
    CHECK(pullback_value(Eigen::VectorXd::Ones(1), 2, J)[0] == doctest::Approx(J.determinant()).epsilon(1e-12));
  }
}

TEST_CASE("mollify_at") {
  const Mollifier mu = standard_mollifier(2);
  const BallRule rule = ball_rule(mu);
  const Eigen::Vector2d c(0.5, 0.5);
  const RadiusField phi = bump_field(c, 0.1, 0.3, 0.05, mu);
  std::mt19937 rng(7);
  const Quadratic q = random_quadratic(rng);
  auto u0 = [&](const Eigen::VectorXd& x) { return q.value(x); };
  auto u1 = [&](const Eigen::VectorXd& x) { return q.grad(x); };
  std::uniform_real_distribution<double> U(-1.0, 2.0);
  int outside = 0;
  while (outside < 200) {
    const Eigen::VectorXd x = point(U(rng), U(rng));
    if ((x - c).norm() < 0.3) continue;
    ++outside;
    CHECK(mollify_at(u0, 0, phi, rule, x) == u0(x));
    CHECK(mollify_at(u1, 1, phi, rule, x) == u1(x));
  }
  auto one = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 3.5); };
  CHECK(mollify_at(one, 0, phi, rule, point(0.52, 0.47))[0] == doctest::Approx(3.5).epsilon(1e-14));

  // Constant radius and a linear function: odd moments vanish.
  auto lin = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, 2.0 - x[0] + 3 * x[1]); };
  const RadiusField flat = constant_radius(0.2);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = point(U(rng), U(rng));
    CHECK(mollify_at(lin, 0, flat, rule, x)[0] == doctest::Approx(lin(x)[0]).epsilon(1e-12));
  }
  // Quadratic with constant radius: brute-force Cartesian oracle of int mu(y) u(x + r y) dy.
  const Eigen::VectorXd x = point(0.3, -0.2);
  const int m = 800;
  double oracle = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Eigen::VectorXd y = point(-1 + (i + 0.5) * 2.0 / m, -1 + (j + 0.5) * 2.0 / m);
      oracle += mu(y) * u0(x + 0.2 * y)[0];
    }
  oracle *= 4.0 / (m * m);
  CHECK(mollify_at(u0, 0, flat, rule, x)[0] == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("mollification commutes with d") {
  const Mollifier mu = standard_mollifier(2);
  const BallRule rule = ball_rule(mu);
  const RadiusField phi = bump_field(Eigen::Vector2d(0.5, 0.5), 0.1, 0.3, 0.05, mu);
  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) samples.push_back(point(0.15 + 0.7 * i / 8, 0.15 + 0.7 * j / 8));
  std::mt19937 rng(11);
  const Quadratic q = random_quadratic(rng);
  auto u0 = [&](const Eigen::VectorXd& x) { return q.value(x); };
  auto du0 = [&](const Eigen::VectorXd& x) { return q.grad(x); };
  // R = Id; what remains is the round-off of the central differences.
  CHECK(commutation_residual(u0, du0, 0, constant_radius(0.0), rule, samples) <= 1e-9);
  auto c = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 2.0); };
  auto zero = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2); };
  CHECK(commutation_residual(c, zero, 0, phi, rule, samples) <= 1e-9);
  CHECK(commutation_residual(u0, du0, 0, phi, rule, samples) <= 1e-4);
  // 1-form w = (sin y, x^2) with dw = (2x - cos y) dx^dy.
  auto w = [](const Eigen::VectorXd& x) { return Eigen::Vector2d(std::sin(x[1]), x[0] * x[0]).eval(); };
  auto dw = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, 2 * x[0] - std::cos(x[1])); };
  CHECK(commutation_residual(w, dw, 1, phi, rule, samples) <= 1e-4);
}

TEST_CASE("Lp and pointwise bounds") {
  const Mollifier mu = standard_mollifier(2);
  const BallRule rule = ball_rule(mu);
  const Eigen::Vector2d c(0.5, 0.5);
  std::mt19937 rng(13);
  const Quadratic q = random_quadratic(rng);
  auto u0 = [&](const Eigen::VectorXd& x) { return q.value(x); };
  auto u1 = [&](const Eigen::VectorXd& x) { return q.grad(x); };

  const BoundCheck same = lp_bound_check(u0, 0, constant_radius(0.0), rule, c, 0.3, 2.0);
  CHECK(same.L == 0.0);
  CHECK(same.ok());
  auto k3 = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, -3.0); };
  const RadiusField phi = bump_field(c, 0.1, 0.3, 0.1, mu);
  const BoundCheck inf = lp_bound_check(k3, 0, phi, rule, c, 0.3, 0.0);
  CHECK(inf.lhs == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(inf.ok());
  for (double p : {1.0, 2.0, 4.0, 0.0}) {
    const BoundCheck b0 = lp_bound_check(u0, 0, phi, rule, c, 0.35, p);
    const BoundCheck b1 = lp_bound_check(u1, 1, phi, rule, c, 0.35, p);
    CAPTURE(p);
    CHECK(b0.L < 1.0);
    CHECK(b0.ok());
    CHECK(b1.ok());
  }
  const RadiusField steep = bump_field(c, 0.1, 0.12, 0.1, mu);
  CHECK_THROWS_AS(lp_bound_check(u0, 0, steep, rule, c, 0.3, 2.0), std::invalid_argument);

  for (const auto& x : {point(0.5, 0.5), point(0.62, 0.5), point(0.45, 0.7)})
    for (double p : {1.0, 2.0, 0.0}) {
      CHECK(pointwise_bound_check(u0, 0, phi, rule, mu, x, p).ok());
      CHECK(pointwise_bound_check(u1, 1, phi, rule, mu, x, p).ok());
    }
  CHECK_THROWS_AS(pointwise_bound_check(u0, 0, phi, rule, mu, point(2.0, 2.0), 2.0), std::invalid_argument);
}

namespace {

struct TorusFixture {
  SimplicialComplex K = generate_flat_torus(4);
  MeshGeometry G{affine_cells(K)};
  BallRule rule = ball_rule(standard_mollifier(2));
};

}  // namespace

TEST_CASE("patch constants on the flat torus") {
  TorusFixture f;
  const PatchConstants pc = patch_constants(f.K, f.G);
  CHECK(pc.constant_h_star);
  CHECK(pc.beta > 0.0);
  CHECK(pc.beta < 1.0);
  CHECK(pc.max_epsilon() > 0.0);
  // Translating a whole cell by less than beta h_T keeps it inside its vertex patch.
  const DofTable t = build_dof_table(f.K, {Family::Trimmed, 1, 2, 2});
  CHECK_NOTHROW(quasi_interpolant_matrix(f.K, t, 0.99 * pc.beta * pc.h_star / pc.C_h, f.rule));
  CHECK_THROWS_AS(quasi_interpolant_matrix(f.K, t, 1.5 * pc.h_star, f.rule), std::domain_error);
}

TEST_CASE("smoothed interpolant on the flat torus") {
  TorusFixture f;
  const std::vector<FormSpaceSpec> chain = {{Family::Full, 1, 0, 2}, {Family::Trimmed, 1, 1, 2}, {Family::Trimmed, 1, 2, 2}};
  std::vector<DofTable> T;
  for (const auto& s : chain) T.push_back(build_dof_table(f.K, s));
  const EpsilonSearch es = epsilon_search(f.K, f.G, T, f.rule);
  CHECK(es.q <= 0.5);
  CHECK(es.epsilon <= es.patch.max_epsilon());
  const std::vector<SparseMatrix>& Q = es.Q;
  CHECK((Q[0] * Eigen::VectorXd::Ones(T[0].total) - Eigen::VectorXd::Ones(T[0].total)).cwiseAbs().maxCoeff() <= 1e-8);
  for (int k = 0; k < 2; ++k) {
    const SparseMatrix D = assemble_exterior_derivative(f.K, T[static_cast<std::size_t>(k)], T[static_cast<std::size_t>(k) + 1]);
    const Eigen::MatrixXd diff = Eigen::MatrixXd(D * Q[static_cast<std::size_t>(k)]) - Eigen::MatrixXd(Q[static_cast<std::size_t>(k) + 1] * D);
    CHECK(diff.cwiseAbs().maxCoeff() <= 1e-6);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const SparseMatrix M = assemble_mass(f.K, T[k], f.G);
    const auto n = T[k].total;
    const double q = m_operator_norm(Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(Q[k]), M);
    CAPTURE(k);
    CHECK(q <= 0.5);
    // Every basis vector individually.
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
      const Eigen::VectorXd r = e - Q[k] * e;
      CHECK(std::sqrt(r.dot(M * r)) <= 0.5 * std::sqrt(e.dot(M * e)));
    }
    const SchoberlInverse J = schoberl_inverse(Q[k], M);
    CHECK(J.J_norm >= 1.0 - 1e-9);
    CHECK(J.J_norm <= 2.0 + 1e-6);
    // J inverts Q on the FE space.
    CHECK((J.J * Eigen::MatrixXd(Q[k]) - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("smoothed projection") {
  TorusFixture f;
  const std::vector<FormSpaceSpec> chain = {{Family::Full, 1, 0, 2}, {Family::Trimmed, 1, 1, 2}};
  std::vector<DofTable> T;
  for (const auto& s : chain) T.push_back(build_dof_table(f.K, s));
  const EpsilonSearch es = epsilon_search(f.K, f.G, T, f.rule);
  std::vector<Eigen::MatrixXd> J;
  std::vector<SparseMatrix> M;
  for (std::size_t k = 0; k < T.size(); ++k) {
    M.push_back(assemble_mass(f.K, T[k], f.G));
    J.push_back(schoberl_inverse(es.Q[k], M.back()).J);
  }
  // FE functions are fixed: pi u_h = J Q u_h.
  std::mt19937 rng(17);
  std::normal_distribution<double> N(0.0, 1.0);
  for (std::size_t k = 0; k < 2; ++k) {
    Eigen::VectorXd uh(T[k].total);
    for (auto& v : uh) v = N(rng);
    const Eigen::VectorXd r = J[k] * (es.Q[k] * uh) - uh;
    CHECK(std::sqrt(r.dot(M[k] * r)) <= 1e-8);
  }
  // Smooth periodic sampler: D pi u = pi du.
  auto u = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, std::sin(2 * kPi * x[0]) * std::cos(2 * kPi * x[1])); };
  auto du = [](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(2 * kPi * std::cos(2 * kPi * x[0]) * std::cos(2 * kPi * x[1]),
                           -2 * kPi * std::sin(2 * kPi * x[0]) * std::sin(2 * kPi * x[1]))
        .eval();
  };
  const Eigen::VectorXd pu = smoothed_projection(f.K, f.G, T[0], J[0], u, es.rho, f.rule, 12);
  const Eigen::VectorXd pdu = smoothed_projection(f.K, f.G, T[1], J[1], du, es.rho, f.rule, 12);
  const SparseMatrix D = assemble_exterior_derivative(f.K, T[0], T[1]);
  CHECK((D * pu - pdu).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("halving epsilon halves |Id - Q|") {
  TorusFixture f;
  const DofTable t = build_dof_table(f.K, {Family::Trimmed, 1, 1, 2});
  const SparseMatrix M = assemble_mass(f.K, t, f.G);
  const EpsilonSearch es = epsilon_search(f.K, f.G, {t}, f.rule);
  const auto n = t.total;
  auto q = [&](double rho) {
    return m_operator_norm(Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(quasi_interpolant_matrix(f.K, t, rho, f.rule)), M);
  };
  const double q1 = q(es.rho), q2 = q(es.rho / 2);
  CHECK(q2 / q1 >= 0.3);
  CHECK(q2 / q1 <= 0.8);
  MollifyReport rep{es.epsilon, 0.0, es.q <= 0.5, 0.0, 1.0};
  const std::string js = rep.to_json();
  for (const char* key : {"epsilon", "L", "half_bound_ok", "commutation_residual", "J_norm"})
    CHECK(js.find(std::string("\"") + key + "\"") != std::string::npos);
}
