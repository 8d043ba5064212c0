#include "mfeec/hodge.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mfeec {

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double m_norm(const SparseMatrix& M, const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : std::sqrt(std::max(0.0, v.dot(M * v)));
}

/// Modified Gram-Schmidt in the M inner product, applied twice; collapsed columns are redrawn.
void m_orthonormalize(const SparseMatrix& M, Eigen::MatrixXd& X, std::mt19937& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (int attempt = 0;; ++attempt) {
      const double before = std::sqrt(std::max(0.0, X.col(j).dot(M * X.col(j))));
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index i = 0; i < j; ++i) X.col(j) -= X.col(i).dot(M * X.col(j)) * X.col(i);
      const double after = std::sqrt(std::max(0.0, X.col(j).dot(M * X.col(j))));
      if (after > 1e-14 * before && after > 0.0) {
        X.col(j) /= after;
        break;
      }
      if (attempt > 10) throw std::runtime_error("harmonic_forms: cannot complete an M-orthonormal block");
      for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = N(rng);
    }
  }
}

SparseMatrix diagonal_inverse(const SparseMatrix& M) {
  SparseMatrix W(M.rows(), M.cols());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < M.rows(); ++i) t.emplace_back(i, i, 1.0 / M.coeff(i, i));
  W.setFromTriplets(t.begin(), t.end());
  return W;
}

}  // namespace

void HodgeProblem::check() const {
  const auto n = M.rows(), np = M_prev.rows(), nn = M_next.rows();
  if (M.cols() != n || M_prev.cols() != np || M_next.cols() != nn) throw std::invalid_argument("HodgeProblem: mass matrices must be square");
  if (D_prev.rows() != n || D_prev.cols() != np) throw std::invalid_argument("HodgeProblem: D_{k-1} does not chain");
  if (D.rows() != nn || D.cols() != n) throw std::invalid_argument("HodgeProblem: D_k does not chain");
  if (F.size() != 0 && F.size() != n) throw std::invalid_argument("HodgeProblem: load vector has the wrong size");
}

HodgeSpaces build_hodge_spaces(const SimplicialComplex& K, const MeshGeometry& G, const FormSpaceSpec& spec) {
  HodgeSpaces S;
  S.cur = build_dof_table(K, spec);
  HodgeProblem& P = S.problem;
  P.k = spec.k;
  P.M = assemble_mass(K, S.cur, G);
  if (spec.k > 0) {
    S.prev = build_dof_table(K, previous_space(spec));
    P.M_prev = assemble_mass(K, S.prev, G);
    P.D_prev = assemble_exterior_derivative(K, S.prev, S.cur);
  } else {
    P.M_prev.resize(0, 0);
    P.D_prev.resize(S.cur.total, 0);
  }
  if (spec.k < spec.d) {
    S.next = build_dof_table(K, next_space(spec));
    P.M_next = assemble_mass(K, S.next, G);
    P.D = assemble_exterior_derivative(K, S.cur, S.next);
  } else {
    P.M_next.resize(0, 0);
    P.D.resize(0, S.cur.total);
  }
  return S;
}

HarmonicBasis harmonic_forms(const HodgeProblem& P) {
  P.check();
  HarmonicBasis H;
  H.k = P.k;
  const int n = P.size();
  if (n == 0) return H;
  SparseMatrix A = SparseMatrix(P.D.transpose()) * P.M_next * P.D;
  if (P.size_prev() > 0) {
    const SparseMatrix B = P.M * P.D_prev;
    A += B * diagonal_inverse(P.M_prev) * SparseMatrix(B.transpose());
  }
  A = 0.5 * (A + SparseMatrix(A.transpose()));

  double lambda_max = 0.0;
  for (int i = 0; i < n; ++i) lambda_max = std::max(lambda_max, A.coeff(i, i) / P.M.coeff(i, i));
  if (lambda_max == 0.0) {
    H.columns = Eigen::MatrixXd::Identity(n, n);
    std::mt19937 rng(1);
    m_orthonormalize(P.M, H.columns, rng);
    H.gram = H.columns.transpose() * (P.M * H.columns);
    return H;
  }
  const double shift = 1e-10 * lambda_max;
  const double zero_tol = 1e-8 * lambda_max;
  Eigen::SimplicialLDLT<SparseMatrix> solver(A + shift * P.M);
  if (solver.info() != Eigen::Success) throw std::runtime_error("harmonic_forms: factorization failed");

  std::mt19937 rng(12345);
  std::normal_distribution<double> N(0.0, 1.0);
  int p = std::min(n, 6);
  for (;;) {
    Eigen::MatrixXd X(n, p);
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i) X(i, j) = N(rng);
    m_orthonormalize(P.M, X, rng);
    for (int it = 0; it < 4; ++it) {
      X = solver.solve(P.M * X);
      m_orthonormalize(P.M, X, rng);
    }
    const Eigen::MatrixXd Ar = X.transpose() * (A * X);
    const Eigen::MatrixXd Mr = X.transpose() * (P.M * X);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Ar + Ar.transpose()), 0.5 * (Mr + Mr.transpose()));
    int zeros = 0;
    while (zeros < p && es.eigenvalues()[zeros] < zero_tol) ++zeros;
    if (zeros == p && p < n) {
      p = std::min(n, 2 * p);
      continue;
    }
    H.columns = X * es.eigenvectors().leftCols(zeros);
    // One more inverse iteration removes what remains of the nonzero modes.
    if (zeros > 0) {
      H.columns = solver.solve(P.M * H.columns);
      m_orthonormalize(P.M, H.columns, rng);
    }
    break;
  }
  H.gram = H.columns.transpose() * (P.M * H.columns);
  return H;
}

SolveReport solve_hodge_laplace(const HodgeProblem& P) { return solve_hodge_laplace(P, harmonic_forms(P)); }

SolveReport solve_hodge_laplace(const HodgeProblem& P, const HarmonicBasis& H) {
  P.check();
  if (P.F.size() != P.size()) throw std::invalid_argument("solve_hodge_laplace: load vector missing");
  const auto t0 = std::chrono::steady_clock::now();
  const int ns = P.size_prev(), nu = P.size(), nb = H.betti();
  const int N = ns + nu + nb;

  const SparseMatrix MD = P.M * P.D_prev;  // nu x ns
  const SparseMatrix L = SparseMatrix(P.D.transpose()) * P.M_next * P.D;
  const Eigen::MatrixXd MH = P.M * H.columns;  // nu x nb

  std::vector<Eigen::Triplet<double>> t;
  auto put = [&t](const SparseMatrix& A, int r0, int c0, double s) {
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
  };
  put(P.M_prev, 0, 0, -1.0);
  put(SparseMatrix(MD.transpose()), 0, ns, 1.0);
  put(MD, ns, 0, 1.0);
  put(L, ns, ns, 1.0);
  for (int j = 0; j < nb; ++j)
    for (int i = 0; i < nu; ++i)
      if (MH(i, j) != 0.0) {
        t.emplace_back(ns + i, ns + nu + j, MH(i, j));
        t.emplace_back(ns + nu + j, ns + i, MH(i, j));
      }
  SparseMatrix A(N, N);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  rhs.segment(ns, nu) = P.F;
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw std::runtime_error("solve_hodge_laplace: singular saddle-point system");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw std::runtime_error("solve_hodge_laplace: solve failed");
  // One step of iterative refinement.
  x += lu.solve(rhs - A * x);

  SolveReport R;
  R.k = P.k;
  R.dofs = N;
  R.betti = nb;
  R.sigma = x.head(ns);
  R.u = x.segment(ns, nu);
  R.p = x.tail(nb);
  R.residuals[0] = max_abs(P.M_prev * R.sigma - SparseMatrix(MD.transpose()) * R.u);
  R.residuals[1] = max_abs(MD * R.sigma + L * R.u + MH * R.p - P.F);
  R.residuals[2] = max_abs(MH.transpose() * R.u);
  R.max_harmonic_inner = R.residuals[2];
  const double f_norm = std::sqrt(std::max(0.0, P.F.dot(l2_projection(P.M, P.F))));
  const double s_norm = m_norm(P.M_prev, R.sigma) + m_norm(P.M, R.u) + R.p.norm();
  R.stability = f_norm > 0.0 ? s_norm / f_norm : 0.0;
  R.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return R;
}

std::string SolveReport::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["dofs"] = dofs;
  j["residuals"] = {residuals[0], residuals[1], residuals[2]};
  j["betti"] = betti;
  j["errors"] = {{"E", E ? nlohmann::json(*E) : nlohmann::json()}, {"E_d", E_d ? nlohmann::json(*E_d) : nlohmann::json()}};
  j["timing_ms"] = timing_ms;
  return j.dump();
}

double poincare_constant(const SparseMatrix& D, const SparseMatrix& M, const SparseMatrix& M_next, int max_dofs) {
  const auto n = M.rows();
  if (n > max_dofs) throw std::invalid_argument("poincare_constant: dense eigensolve limited to " + std::to_string(max_dofs) + " DOFs");
  const Eigen::MatrixXd A = Eigen::MatrixXd(SparseMatrix(D.transpose()) * M_next * D);
  const Eigen::MatrixXd B = Eigen::MatrixXd(M);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()), 0.5 * (B + B.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double tol = 1e-8 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam[i] > tol) return 1.0 / std::sqrt(lam[i]);
  throw std::runtime_error("poincare_constant: D vanishes identically");
}

Eigen::VectorXd l2_projection(const SparseMatrix& M, const Eigen::VectorXd& F) {
  if (F.size() == 0) return F;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(M);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("l2_projection: mass matrix not positive definite");
  return ldlt.solve(F);
}

ErrorFunctionals error_functionals(const SimplicialComplex& K, const MeshGeometry& G, const HodgeSpaces& S,
                                   const PhysicalSampler& u, const PhysicalSampler& du) {
  const HodgeProblem& P = S.problem;
  ErrorFunctionals out;
  const Eigen::VectorXd Fu = assemble_load(K, S.cur, G, u);
  out.E = l2_error(K, S.cur, G, l2_projection(P.M, Fu), u);
  if (P.M_next.rows() == 0) {
    out.E_d = out.E;
    out.componentwise = l2_error(K, S.cur, G, global_interpolate(K, G, S.cur, u), u);
    return out;
  }
  const Eigen::VectorXd Fdu = assemble_load(K, S.next, G, du);
  out.E_du = l2_error(K, S.next, G, l2_projection(P.M_next, Fdu), du);
  const SparseMatrix Dt = P.D.transpose();
  const SparseMatrix A = P.M + Dt * P.M_next * P.D;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("error_functionals: HΛ Gram matrix not positive definite");
  const Eigen::VectorXd x = ldlt.solve(Eigen::VectorXd(Fu + Dt * Fdu));
  const double e0 = l2_error(K, S.cur, G, x, u);
  const double e1 = l2_error(K, S.next, G, P.D * x, du);
  out.E_d = std::sqrt(e0 * e0 + e1 * e1);
  // d I u = I d u, so v = I u bounds E_d componentwise.
  const Eigen::VectorXd Iu = global_interpolate(K, G, S.cur, u);
  out.componentwise = l2_error(K, S.cur, G, Iu, u) + l2_error(K, S.next, G, P.D * Iu, du);
  return out;
}

}  // namespace mfeec
