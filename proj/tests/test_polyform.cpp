#include "doctest.h"

#include "mfeec/polyform.hpp"

#include <cmath>
#include <random>

using namespace mfeec;

namespace {

long long choose(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  long long b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

// Closed-form dimension oracles.
long long dim_full(int r, int k, int d) { return r < 0 ? 0 : choose(r + d, r + k) * choose(r + k, k); }
long long dim_trimmed(int r, int k, int d) {
  if (k == 0) return dim_full(r, 0, d);
  return r <= 0 ? 0 : choose(r + k - 1, k) * choose(d + r, d - k);
}

PolyForm random_form(std::mt19937& rng, int d, int k, int deg) {
  std::uniform_int_distribution<int> U(-3, 3);
  PolyForm f(d, k);
  for (const auto& s : sigma_set(k, d)) {
    Polynomial p(d);
    for (const auto& e : monomials_upto(d, deg)) p.add_term(e, U(rng));
    f.add(s, p);
  }
  return f;
}

Polynomial X(int d, int i) { return Polynomial::variable(d, i); }
Polynomial one(int d) { return Polynomial::constant(d, 1.0); }

// Matrix whose columns are coefficient vectors of the forms.
Eigen::MatrixXd coefficient_matrix(const std::vector<PolyForm>& forms, int maxdeg, Eigen::Index rows) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(forms.size()));
  for (std::size_t j = 0; j < forms.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = forms[j].coefficient_vector(maxdeg);
  return M;
}

int matrix_rank(const Eigen::MatrixXd& M) {
  if (M.cols() == 0) return 0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  lu.setThreshold(1e-10);
  return static_cast<int>(lu.rank());
}

}  // namespace

TEST_CASE("sigma_set enumerates ascending index sets") {
  CHECK(sigma_set(0, 3) == std::vector<AscendingIndex>{{}});
  // 0-based storage of (1,2), (1,3), (2,3).
  CHECK(sigma_set(2, 3) == std::vector<AscendingIndex>{{0, 1}, {0, 2}, {1, 2}});
  CHECK(sigma_set(4, 3).empty());
  CHECK(sigma_set(-1, 3).empty());
  for (int d = 0; d <= 4; ++d)
    for (int k = 0; k <= d; ++k) CHECK(static_cast<long long>(sigma_set(k, d).size()) == choose(d, k));
}

TEST_CASE("exterior derivative examples") {
  const int d = 3;
  CHECK(exterior_derivative(PolyForm::scalar(X(d, 0))).terms() == PolyForm::basic(d, {0}, one(d)).terms());
  const PolyForm u = PolyForm::basic(d, {1}, X(d, 0));
  CHECK(exterior_derivative(u).terms() == PolyForm::basic(d, {0, 1}, one(d)).terms());
  const PolyForm w = PolyForm::basic(d, {2}, X(d, 0) * X(d, 0) * X(d, 1));
  CHECK(exterior_derivative(exterior_derivative(w)).is_zero());
}

TEST_CASE("koszul examples") {
  const int d = 2;
  const PolyForm vol = PolyForm::basic(d, {0, 1}, one(d));
  PolyForm expected = PolyForm::basic(d, {1}, X(d, 0)) - PolyForm::basic(d, {0}, X(d, 1));
  CHECK((koszul(vol) - expected).is_zero());
  CHECK((koszul(PolyForm::basic(d, {0}, one(d))) - PolyForm::scalar(X(d, 0))).is_zero());
  CHECK(koszul(koszul(vol)).is_zero());
  CHECK_THROWS(koszul(PolyForm::scalar(one(d))));
}

TEST_CASE("dd = 0 and kappa kappa = 0 on random forms") {
  std::mt19937 rng(11);
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k <= d; ++k)
      for (int deg = 0; deg <= 4; ++deg) {
        const PolyForm u = random_form(rng, d, k, deg);
        CHECK(exterior_derivative(exterior_derivative(u)).is_zero());
        if (k >= 2) CHECK(koszul(koszul(u)).is_zero());
      }
}

TEST_CASE("homotopy formula d kappa + kappa d = (r + k) on homogeneous forms") {
  std::mt19937 rng(12);
  std::uniform_int_distribution<int> U(-3, 3);
  for (int d = 2; d <= 3; ++d)
    for (int k = 1; k <= d; ++k)
      for (int r = 0; r <= 3; ++r) {
        PolyForm u(d, k);
        for (const auto& s : sigma_set(k, d)) {
          Polynomial p(d);
          for (const auto& e : monomials_of_degree(d, r)) p.add_term(e, U(rng));
          u.add(s, p);
        }
        PolyForm lhs = exterior_derivative(koszul(u));
        if (k < d) lhs += koszul(exterior_derivative(u));
        CHECK((lhs - u * static_cast<double>(r + k)).is_zero(1e-12));
      }
}

TEST_CASE("wedge product is graded commutative") {
  std::mt19937 rng(13);
  const int d = 3;
  const PolyForm a = random_form(rng, d, 1, 1);
  const PolyForm b = random_form(rng, d, 2, 1);
  const PolyForm c = random_form(rng, d, 1, 2);
  CHECK((wedge(a, b) - wedge(b, a)).is_zero(1e-12));
  CHECK((wedge(a, c) + wedge(c, a)).is_zero(1e-12));
  // Leibniz rule.
  const PolyForm lhs = exterior_derivative(wedge(a, c));
  const PolyForm rhs = wedge(exterior_derivative(a), c) - wedge(a, exterior_derivative(c));
  CHECK((lhs - rhs).is_zero(1e-12));
}

TEST_CASE("traces onto subsimplices") {
  const int d = 2;
  // Edge from the origin to e_1.
  const PolyForm dx1 = PolyForm::basic(d, {0}, one(d));
  const PolyForm dx2 = PolyForm::basic(d, {1}, one(d));
  const PolyForm t1 = trace_to_subsimplex(dx1, {0, 1});
  CHECK(t1.dim() == 1);
  CHECK((t1 - PolyForm::basic(1, {0}, one(1))).is_zero());
  CHECK(trace_to_subsimplex(dx2, {0, 1}).is_zero());
  const PolyForm c = PolyForm::scalar(Polynomial::constant(d, 2.5));
  CHECK((trace_to_subsimplex(c, {1, 2}) - PolyForm::scalar(Polynomial::constant(1, 2.5))).is_zero());
  CHECK(trace_to_subsimplex(c, {2}).terms().at({}).coefficient({}) == 2.5);
}

TEST_CASE("trace composition") {
  std::mt19937 rng(14);
  const PolyForm u = random_form(rng, 3, 1, 2);
  // Face {0,2,3} of Delta_3, then its edge {1,2} (local), equals edge {2,3} of Delta_3.
  const PolyForm a = trace_to_subsimplex(trace_to_subsimplex(u, {0, 2, 3}), {1, 2});
  const PolyForm b = trace_to_subsimplex(u, {2, 3});
  CHECK((a - b).is_zero(1e-12));
}

TEST_CASE("basis sizes match closed-form dimensions") {
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k <= d; ++k)
      for (int r = 0; r <= 3; ++r) {
        CHECK(static_cast<long long>(build_basis(Family::Full, r, k, d).size()) == dim_full(r, k, d));
        CHECK(static_cast<long long>(build_basis(Family::Trimmed, r, k, d).size()) == dim_trimmed(r, k, d));
        CHECK(space_dimension(Family::Full, r, k, d) == dim_full(r, k, d));
        CHECK(space_dimension(Family::Trimmed, r, k, d) == dim_trimmed(r, k, d));
      }
  CHECK(build_basis(FormSpaceSpec{Family::Full, 1, 0, 2}).size() == 3);
  CHECK(build_basis(FormSpaceSpec{Family::Trimmed, 1, 1, 2}).size() == 3);
  CHECK(build_basis(FormSpaceSpec{Family::Full, 2, 1, 3}).size() == 30);
  CHECK(build_basis(Family::Full, 1, 4, 3).empty());
}

TEST_CASE("consecutive spaces match: d P_{r+1} = d P-_{r+1} and kernels agree") {
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k < d; ++k)
      for (int r = 0; r <= 3; ++r) {
        std::vector<PolyForm> dfull, dtrim;
        for (const auto& b : build_basis(Family::Full, r + 1, k, d)) dfull.push_back(exterior_derivative(b));
        for (const auto& b : build_basis(Family::Trimmed, r + 1, k, d)) dtrim.push_back(exterior_derivative(b));
        const Eigen::Index rows = choose(d, k + 1) * choose(d + r + 1, d);
        const Eigen::MatrixXd A = coefficient_matrix(dfull, r + 1, rows);
        const Eigen::MatrixXd B = coefficient_matrix(dtrim, r + 1, rows);
        Eigen::MatrixXd AB(rows, A.cols() + B.cols());
        AB << A, B;
        const int ra = matrix_rank(A);
        CHECK(ra == matrix_rank(B));
        CHECK(ra == matrix_rank(AB));

        // Kernel of d on P_r equals kernel of d on P-_{r+1}: both equal d P_{r+1}Λ^{k-1} + constants.
        auto kernel_dim = [&](const std::vector<PolyForm>& basis) {
          std::vector<PolyForm> images;
          for (const auto& b : basis) images.push_back(exterior_derivative(b));
          const Eigen::Index rr = choose(d, k + 1) * choose(d + r + 1, d);
          return static_cast<int>(basis.size()) - matrix_rank(coefficient_matrix(images, r + 1, rr));
        };
        const auto full_r = build_basis(Family::Full, r, k, d);
        const auto trim_r1 = build_basis(Family::Trimmed, r + 1, k, d);
        CHECK(kernel_dim(full_r) == kernel_dim(trim_r1));
      }
}

TEST_CASE("P-_r is contained in P_r and contains P_{r-1}") {
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k <= d; ++k)
      for (int r = 1; r <= 3; ++r) {
        const auto full = build_basis(Family::Full, r, k, d);
        const auto trim = build_basis(Family::Trimmed, r, k, d);
        const auto lower = build_basis(Family::Full, r - 1, k, d);
        const Eigen::Index rows = choose(d, k) * choose(d + r, d);
        const Eigen::MatrixXd F = coefficient_matrix(full, r, rows);
        const Eigen::MatrixXd T = coefficient_matrix(trim, r, rows);
        const Eigen::MatrixXd L = coefficient_matrix(lower, r, rows);
        Eigen::MatrixXd FT(rows, F.cols() + T.cols()), TL(rows, T.cols() + L.cols());
        FT << F, T;
        TL << T, L;
        CHECK(matrix_rank(FT) == matrix_rank(F));
        CHECK(matrix_rank(TL) == matrix_rank(T));
      }
}

TEST_CASE("affine invariance of the spaces") {
  // Vertex permutation (0 1 2 3) -> (2 0 3 1) of Delta_3 as an affine automorphism.
  const AffineMap m = simplex_embedding(3, {2, 0, 3, 1});
  for (int k = 0; k <= 3; ++k)
    for (int r = 1; r <= 2; ++r)
      for (Family fam : {Family::Full, Family::Trimmed}) {
        const auto basis = build_basis(fam, r, k, 3);
        std::vector<PolyForm> all = basis;
        for (const auto& b : basis) all.push_back(pullback_affine(b, m.offset, m.matrix));
        CHECK(form_rank(all) == static_cast<int>(basis.size()));
      }
}

TEST_CASE("dof counts and unisolvence") {
  CHECK(dof_functionals(FormSpaceSpec{Family::Full, 1, 0, 2}).size() == 3);
  for (const auto& f : dof_functionals(FormSpaceSpec{Family::Full, 1, 0, 2})) CHECK(f.face.size() == 1);
  const auto edge = dof_functionals(FormSpaceSpec{Family::Trimmed, 1, 1, 2});
  CHECK(edge.size() == 3);
  for (const auto& f : edge) CHECK(f.face.size() == 2);
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k <= d; ++k)
      for (int r = 0; r <= 3; ++r)
        for (Family fam : {Family::Full, Family::Trimmed}) {
          const FormSpaceSpec spec{fam, r, k, d};
          if (!spec.valid()) continue;
          // Per-face counts times the number of faces, from the binomial oracle.
          long long count = 0;
          for (int f = k; f <= d; ++f) {
            const long long per = fam == Family::Full ? dim_trimmed(r - f + k, f - k, f) : dim_full(r - f + k - 1, f - k, f);
            count += per * choose(d + 1, f + 1);
          }
          const long long dim = fam == Family::Full ? dim_full(r, k, d) : dim_trimmed(r, k, d);
          CHECK(count == dim);
          CHECK(static_cast<long long>(dof_functionals(spec).size()) == dim);
          CHECK_NOTHROW(LocalElement{spec});
        }
}

TEST_CASE("canonical interpolation reproduces members of the space") {
  const FormSpaceSpec p1{Family::Full, 1, 0, 2};
  const Eigen::VectorXd c = canonical_interpolate(sampler_of(PolyForm::scalar(X(2, 0))), p1);
  const PolyForm back = combine(build_basis(p1), c);
  CHECK((back - PolyForm::scalar(X(2, 0))).is_zero(1e-12));

  std::mt19937 rng(21);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int d = 1; d <= 3; ++d)
    for (int k = 0; k <= d; ++k)
      for (int r = 1; r <= 3; ++r)
        for (Family fam : {Family::Full, Family::Trimmed}) {
          const FormSpaceSpec spec{fam, r, k, d};
          const auto basis = build_basis(spec);
          Eigen::VectorXd coef(static_cast<Eigen::Index>(basis.size()));
          for (auto& v : coef) v = U(rng);
          const Eigen::VectorXd got = canonical_interpolate(sampler_of(combine(basis, coef)), spec);
          CHECK((got - coef).cwiseAbs().maxCoeff() <= 1e-9);
        }
}

TEST_CASE("local element is nodal") {
  const FormSpaceSpec spec{Family::Trimmed, 2, 1, 2};
  const LocalElement el(spec);
  for (int j = 0; j < el.size(); ++j) {
    const Eigen::VectorXd m = el.moments(sampler_of(el.shape_functions()[j]));
    for (int i = 0; i < el.size(); ++i) CHECK(m[i] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
  }
}

TEST_CASE("interpolation commutes with d on smooth fields") {
  // u = sin(x1) cos(2 x2) dx1 + exp(x1 x2) dx2 ... as a 0-form and a 1-form on Delta_2.
  auto f0 = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(1);
    v[0] = std::sin(x[0]) * std::cos(2 * x[1]);
    return v;
  };
  auto df0 = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(2);
    v[0] = std::cos(x[0]) * std::cos(2 * x[1]);
    v[1] = -2 * std::sin(x[0]) * std::sin(2 * x[1]);
    return v;
  };
  auto f1 = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(2);
    v[0] = std::sin(x[1]);
    v[1] = std::exp(x[0] * x[1]);
    return v;
  };
  auto df1 = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(1);
    v[0] = x[1] * std::exp(x[0] * x[1]) - std::cos(x[1]);
    return v;
  };
  const int q = 14;
  for (int r = 1; r <= 3; ++r) {
    struct Case {
      FormSpaceSpec from, to;
      ReferenceSampler u, du;
    };
    std::vector<Case> cases = {
        {{Family::Full, r, 0, 2}, {Family::Trimmed, r, 1, 2}, f0, df0},
        {{Family::Trimmed, r, 0, 2}, {Family::Trimmed, r, 1, 2}, f0, df0},
        {{Family::Full, r, 1, 2}, {Family::Trimmed, r, 2, 2}, f1, df1},
        {{Family::Trimmed, r, 1, 2}, {Family::Full, r - 1, 2, 2}, f1, df1},
    };
    if (r >= 2) cases.push_back({{Family::Full, r, 0, 2}, {Family::Full, r - 1, 1, 2}, f0, df0});
    for (const auto& c : cases) {
      const PolyForm Iu = combine(build_basis(c.from), canonical_interpolate(c.u, c.from, q));
      const PolyForm Idu = combine(build_basis(c.to), canonical_interpolate(c.du, c.to, q));
      CHECK((exterior_derivative(Iu) - Idu).prune(1e-10).is_zero(1e-9));
    }
  }
}

TEST_CASE("interpolation commutes with traces") {
  auto f1 = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(2);
    v[0] = std::cos(x[0] + 2 * x[1]);
    v[1] = x[0] * x[0] * std::exp(x[1]);
    return v;
  };
  for (Family fam : {Family::Full, Family::Trimmed})
    for (int r = 1; r <= 2; ++r) {
      const FormSpaceSpec spec{fam, r, 1, 2};
      const PolyForm Iu = combine(build_basis(spec), canonical_interpolate(f1, spec, 14));
      const std::vector<int> edge = {1, 2};
      const AffineMap m = simplex_embedding(2, edge);
      auto traced = [&](const Eigen::VectorXd& t) { return pullback_value(f1(m(t)), 1, m.matrix); };
      const FormSpaceSpec espec{fam, r, 1, 1};
      const PolyForm Ie = combine(build_basis(espec), canonical_interpolate(traced, espec, 14));
      CHECK((trace_to_subsimplex(Iu, edge) - Ie).prune(1e-10).is_zero(1e-9));
    }
}
