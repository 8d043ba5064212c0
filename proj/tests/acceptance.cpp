// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 when any criterion fails.

#include "mfeec/geomerr.hpp"
#include "mfeec/mollify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace mfeec;

namespace {

constexpr double kPi = std::numbers::pi;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double m_norm(const SparseMatrix& M, const Eigen::VectorXd& v) { return std::sqrt(std::max(0.0, v.dot(M * v))); }

double max_abs(const Eigen::MatrixXd& A) { return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff(); }

void criterion_topology() {
  bool ok = true;
  double slowest = 0.0;
  std::string bad;
  auto check = [&](const SimplicialComplex& K, const std::string& name, const int expected[3]) {
    const auto t0 = Clock::now();
    const MeshGeometry G(affine_cells(K));
    for (Family f : {Family::Full, Family::Trimmed})
      for (int k = 0; k <= 2; ++k) {
        const int b = harmonic_forms(build_hodge_spaces(K, G, {f, 1, k, 2}).problem).betti();
        if (b != expected[k]) ok = false, bad += " " + name + ":k=" + std::to_string(k) + ":" + std::to_string(b);
      }
    const double dt = seconds_since(t0);
    slowest = std::max(slowest, dt);
    if (dt >= 5.0) ok = false, bad += " " + name + " took " + fmt(dt) + " s";
  };
  const int sphere[3] = {1, 0, 1}, torus[3] = {1, 2, 1};
  for (int level = 0; level <= 3; ++level) check(generate_sphere(level), "sphere" + std::to_string(level), sphere);
  for (int m : {2, 4, 8}) check(generate_flat_torus(m), "torus" + std::to_string(m), torus);
  report(1, ok, "Betti numbers (1,0,1) on sphere levels 0-3 and (1,2,1) on flat tori m = 2, 4, 8, FULL and TRIMMED r = 1; slowest mesh " +
                    fmt(slowest) + " s" + bad);
}

void criterion_complex() {
  double worst = 0.0;
  bool integer = true;
  std::vector<SimplicialComplex> meshes = {generate_sphere(1), generate_flat_torus(3), generate_round_torus(1), generate_cubed_sphere(1).complex};
  for (const auto& K : meshes) {
    for (Family f : {Family::Full, Family::Trimmed})
      for (int r = 1; r <= 3; ++r) {
        const FormSpaceSpec s0{f, r, 0, 2}, s1 = next_space(s0), s2 = next_space(s1);
        const DofTable t0 = build_dof_table(K, s0), t1 = build_dof_table(K, s1), t2 = build_dof_table(K, s2);
        const SparseMatrix D0 = assemble_exterior_derivative(K, t0, t1), D1 = assemble_exterior_derivative(K, t1, t2);
        worst = std::max(worst, max_abs(Eigen::MatrixXd(D1 * D0)));
        if (f == Family::Full && r == 1)
          for (const SparseMatrix* D : {&D0, &D1})
            for (int j = 0; j < D->outerSize(); ++j)
              for (SparseMatrix::InnerIterator it(*D, j); it; ++it)
                if (it.value() != -1.0 && it.value() != 0.0 && it.value() != 1.0) integer = false;
      }
  }
  report(2, worst <= 1e-12 && integer,
         "max |D_{k+1} D_k| = " + fmt(worst) + " over sphere, flat torus, round torus, cubed sphere with FULL/TRIMMED r = 1..3 complexes; "
         "lowest-order entries in {-1, 0, 1}: " + (integer ? "yes" : "no"));
}

void criterion_interpolant() {
  double worst = 0.0;
  std::mt19937 rng(23);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int m : {3, 4}) {
    const SimplicialComplex K = generate_flat_torus(m);
    const MeshGeometry G(affine_cells(K));
    for (int r = 1; r <= 3; ++r)
      for (Family f : {Family::Full, Family::Trimmed})
        for (int k = 0; k <= 1; ++k) {
          const FormSpaceSpec s{f, r, k, 2};
          const DofTable t = build_dof_table(K, s), tn = build_dof_table(K, next_space(s));
          Eigen::VectorXd u(t.total);
          for (auto& v : u) v = N(rng);
          // Piecewise polynomial samplers of degree <= r, evaluated cellwise so traces agree exactly.
          const Eigen::VectorXd Iu = global_interpolate_reference(t, [&](int c, const Eigen::VectorXd& x) { return evaluate_fe(t, u, c, x); });
          const Eigen::VectorXd Idu =
              global_interpolate_reference(tn, [&](int c, const Eigen::VectorXd& x) { return evaluate_fe_derivative(t, u, c, x); });
          const SparseMatrix D = assemble_exterior_derivative(K, t, tn);
          const SparseMatrix M = assemble_mass(K, tn, G);
          worst = std::max(worst, m_norm(M, D * Iu - Idu) / std::max(1.0, m_norm(M, Idu)));
        }
  }
  report(3, worst <= 1e-8, "|D I u - I du|_M / |I du|_M = " + fmt(worst) + " for degree <= r samplers, flat tori m = 3, 4, r <= 3, k <= 1");
}

void criterion_reference_mass() {
  Eigen::MatrixXd X(2, 3);
  X << 0, 1, 0, 0, 0, 1;
  const SimplicialComplex K = build_complex("triangle", 2, 2, X, {{VertexRef{0, {}}, VertexRef{1, {}}, VertexRef{2, {}}}});
  const Eigen::MatrixXd M(assemble_mass(K, build_dof_table(K, {Family::Full, 1, 0, 2}), MeshGeometry(affine_cells(K))));
  double err = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(M(i, j) - (i == j ? 1.0 / 12.0 : 1.0 / 24.0)));
  report(4, err <= 1e-12, "reference triangle P1 mass, max deviation from 1/12 and 1/24: " + fmt(err));
}

void criterion_hodge_rate() {
  std::vector<double> h, err;
  double slowest = 0.0;
  const ManufacturedSolution ms = manufactured_solution("sphere", 0);
  for (int level = 1; level <= 4; ++level) {
    const auto t0 = Clock::now();
    const SimplicialComplex K = generate_sphere(level);
    const MeshGeometry G = exact_geometry(K, Surface::sphere(), 1);
    HodgeSpaces S = build_hodge_spaces(K, G, {Family::Full, 1, 0, 2});
    S.problem.F = assemble_load(K, S.cur, G, ms.f);
    const SolveReport R = solve_hodge_laplace(S.problem);
    err.push_back(l2_error(K, S.cur, G, R.u, ms.u));
    h.push_back(quality_report(K, G).h_max);
    slowest = std::max(slowest, seconds_since(t0));
  }
  const double slope = fit_slope(h, err).slope;
  report(5, std::abs(slope - 2.0) <= 0.25 && slowest < 60.0,
         "sphere k = 0, f = x3: fitted L2 slope " + fmt(slope) + " over levels 1-4 (errors " + fmt(err.front()) + " .. " + fmt(err.back()) +
             "), slowest level " + fmt(slowest) + " s");
}

void criterion_geometric_rate() {
  std::string detail;
  bool ok = true;
  for (int l : {1, 2}) {
    std::vector<double> h, g;
    for (int level = 1; level <= 4; ++level) {
      const SimplicialComplex K = generate_sphere(level);
      const DofTable t = build_dof_table(K, {Family::Full, 1, 0, 2});
      g.push_back(geometric_error_norm(make_geometry_pair(K, Surface::sphere(), t, l)));
      h.push_back(quality_report(K, exact_geometry(K, Surface::sphere(), l)).h_max);
    }
    const double slope = fit_slope(h, g).slope;
    const bool pass = std::abs(slope - (l + 1)) <= 0.35;
    ok = ok && pass;
    detail += "l = " + std::to_string(l) + ": slope " + fmt(slope) + " (target " + std::to_string(l + 1) + " +- 0.35, " +
              (pass ? "met" : "not met") + "); ";
  }
  report(6, ok, "sphere geometric_error_norm, levels 1-4, " + detail);
}

void criterion_mollification() {
  const Mollifier mu = standard_mollifier(2);
  const BallRule rule = ball_rule(mu);
  const Eigen::Vector2d center(0.5, 0.5);
  const RadiusField phi = bump_field(center, 0.1, 0.3, 0.05, mu, 1.0);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 1.0);
  double a[6];
  for (double& v : a) v = U(rng);
  const PhysicalSampler q0 = [a](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, a[0] + a[1] * x[0] + a[2] * x[1] + a[3] * x[0] * x[0] + a[4] * x[0] * x[1] + a[5] * x[1] * x[1]);
  };
  const PhysicalSampler q1 = [a](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(a[1] + 2 * a[3] * x[0] + a[4] * x[1], a[2] + a[4] * x[0] + 2 * a[5] * x[1]).eval();
  };
  const double w = 2 * kPi;
  const PhysicalSampler p0 = [w](const Eigen::VectorXd& x) { return Eigen::VectorXd::Constant(1, std::sin(w * x[0]) * std::cos(w * x[1])); };
  const PhysicalSampler dp0 = [w](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(w * std::cos(w * x[0]) * std::cos(w * x[1]), -w * std::sin(w * x[0]) * std::sin(w * x[1])).eval();
  };
  const PhysicalSampler p1 = [w](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(std::sin(w * x[1]), std::cos(w * x[0]) * std::sin(w * x[1])).eval();
  };
  const PhysicalSampler dp1 = [w](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, -w * std::sin(w * x[0]) * std::sin(w * x[1]) - w * std::cos(w * x[1]));
  };
  const PhysicalSampler zero = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1).eval(); };

  double identity = 0.0;
  for (int found = 0; found < 200;) {
    const Eigen::VectorXd x = Eigen::Vector2d(P(rng), P(rng));
    if ((x - center).norm() < 0.3) continue;
    ++found;
    identity = std::max(identity, max_abs(mollify_at(p0, 0, phi, rule, x) - p0(x)));
    identity = std::max(identity, max_abs(mollify_at(p1, 1, phi, rule, x) - p1(x)));
  }
  double slack = 1e300;
  for (double p : {2.0, 0.0})
    for (const auto& [u, k] : {std::pair{q0, 0}, std::pair{q1, 1}, std::pair{p0, 0}, std::pair{p1, 1}}) {
      const BoundCheck b = lp_bound_check(u, k, phi, rule, center, 0.35, p);
      slack = std::min(slack, b.rhs - b.lhs);
    }
  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) samples.push_back(Eigen::Vector2d(0.15 + 0.7 * i / 8, 0.15 + 0.7 * j / 8));
  double residual = 0.0;
  residual = std::max(residual, commutation_residual(q0, q1, 0, phi, rule, samples));
  residual = std::max(residual, commutation_residual(q1, zero, 1, phi, rule, samples));
  residual = std::max(residual, commutation_residual(p0, dp0, 0, phi, rule, samples));
  residual = std::max(residual, commutation_residual(p1, dp1, 1, phi, rule, samples));
  report(7, identity <= 1e-14 && slack >= 0.0 && residual <= 1e-4,
         "identity outside supp phi: " + fmt(identity) + "; min Lp slack (p = 2, inf): " + fmt(slack) + "; commutation residual " + fmt(residual) +
             "; L = " + fmt(phi.lipschitz));
}

void criterion_smoothed_projection() {
  bool ok = true;
  std::string detail;
  const BallRule rule = ball_rule(standard_mollifier(2));
  for (int m : {4, 8}) {
    const SimplicialComplex K = generate_flat_torus(m);
    const MeshGeometry G(affine_cells(K));
    std::vector<DofTable> T;
    for (const FormSpaceSpec& s : {FormSpaceSpec{Family::Full, 1, 0, 2}, FormSpaceSpec{Family::Trimmed, 1, 1, 2}, FormSpaceSpec{Family::Trimmed, 1, 2, 2}})
      T.push_back(build_dof_table(K, s));
    const EpsilonSearch es = epsilon_search(K, G, T, rule);
    std::mt19937 rng(31);
    std::normal_distribution<double> N(0.0, 1.0);
    double basis = 0.0, J_norm = 0.0, idem = 0.0;
    std::vector<Eigen::MatrixXd> J;
    for (std::size_t i = 0; i < T.size(); ++i) {
      const SparseMatrix M = assemble_mass(K, T[i], G);
      for (int j = 0; j < T[i].total; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(T[i].total, j);
        basis = std::max(basis, m_norm(M, e - es.Q[i] * e) / m_norm(M, e));
      }
      const SchoberlInverse inv = schoberl_inverse(es.Q[i], M);
      J.push_back(inv.J);
      J_norm = std::max(J_norm, inv.J_norm);
      Eigen::VectorXd uh(T[i].total);
      for (auto& v : uh) v = N(rng);
      idem = std::max(idem, m_norm(M, inv.J * (es.Q[i] * uh) - uh));
    }
    double comm = 0.0;
    for (int k = 0; k <= 1; ++k) {
      const ManufacturedSolution ms = manufactured_solution("flat-torus", k);
      const auto kk = static_cast<std::size_t>(k);
      const Eigen::VectorXd pu = smoothed_projection(K, G, T[kk], J[kk], ms.u, es.rho, rule, 12);
      const Eigen::VectorXd pdu = smoothed_projection(K, G, T[kk + 1], J[kk + 1], ms.du, es.rho, rule, 12);
      comm = std::max(comm, max_abs(assemble_exterior_derivative(K, T[kk], T[kk + 1]) * pu - pdu));
    }
    const bool pass = basis <= 0.5 && J_norm <= 2.0 + 1e-6 && idem <= 1e-8 && comm <= 1e-6;
    ok = ok && pass;
    detail += "m = " + std::to_string(m) + ": eps " + fmt(es.epsilon) + ", max basis |(Q - I) e|/|e| " + fmt(basis) + ", |J| " + fmt(J_norm) +
              ", idempotence " + fmt(idem) + ", commutation " + fmt(comm) + "; ";
  }
  report(8, ok, detail);
}

void criterion_crime_gap() {
  const SimplicialComplex K = generate_sphere(2);
  const MeshGeometry G = exact_geometry(K, Surface::sphere(), 1);
  const HodgeSpaces S = build_hodge_spaces(K, G, {Family::Full, 1, 0, 2});
  const Eigen::VectorXd f = global_interpolate(K, G, S.cur, manufactured_solution("sphere", 0).f);
  const double zero = crime_gap(S.problem, S.problem, f).gap;
  std::vector<double> ts, gaps;
  for (double t : {1e-1, 1e-2, 1e-3}) {
    HodgeProblem P = S.problem;
    P.M = (1.0 + t) * S.problem.M;
    const CrimeGap g = crime_gap(S.problem, P, f);
    ts.push_back(t);
    gaps.push_back(g.gap / g.f_norm);
  }
  const double slope = fit_slope(ts, gaps).slope;
  report(9, zero == 0.0 && std::abs(slope - 1.0) <= 0.15,
         "gap at coinciding metrics " + fmt(zero) + "; gap/|f| under (1+t) M for t = 1e-1, 1e-2, 1e-3: slope " + fmt(slope));
}

void criterion_poincare() {
  const SimplicialComplex K = generate_flat_torus(16);
  const HodgeSpaces S = build_hodge_spaces(K, MeshGeometry(affine_cells(K)), {Family::Full, 1, 0, 2});
  const double c = poincare_constant(S.problem.D, S.problem.M, S.problem.M_next);
  const double target = 1.0 / (2 * kPi);
  report(10, std::abs(c / target - 1.0) <= 0.05, "flat torus m = 16, k = 0: C_PF = " + fmt(c) + " vs 1/(2 pi) = " + fmt(target));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  void (*criteria[])() = {criterion_topology,    criterion_complex,        criterion_interpolant,          criterion_reference_mass,
                          criterion_hodge_rate,  criterion_geometric_rate, criterion_mollification,        criterion_smoothed_projection,
                          criterion_crime_gap,   criterion_poincare};
  for (int i = 0; i < 10; ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(i + 1, false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of 10 criteria passed in %.1f s\n", 10 - failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
