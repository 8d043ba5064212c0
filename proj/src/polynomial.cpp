#include "mfeec/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mfeec {

bool GradedLex::operator()(const Exponent& a, const Exponent& b) const {
  const int da = std::accumulate(a.begin(), a.end(), 0);
  const int db = std::accumulate(b.begin(), b.end(), 0);
  if (da != db) return da < db;
  // Within a degree, x_0^d comes last so that the order is "x_0 largest".
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace {

void fill_degree(int num_vars, int remaining, int pos, Exponent& cur, std::vector<Exponent>& out) {
  if (pos == num_vars - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    cur[pos] = e;
    fill_degree(num_vars, remaining - e, pos + 1, cur, out);
  }
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

std::vector<Exponent> monomials_of_degree(int num_vars, int degree) {
  std::vector<Exponent> out;
  if (degree < 0) return out;
  if (num_vars == 0) {
    if (degree == 0) out.emplace_back();
    return out;
  }
  Exponent cur(num_vars, 0);
  fill_degree(num_vars, degree, 0, cur, out);
  std::sort(out.begin(), out.end(), GradedLex{});
  return out;
}

std::vector<Exponent> monomials_upto(int num_vars, int max_degree) {
  std::vector<Exponent> out;
  for (int d = 0; d <= max_degree; ++d) {
    auto part = monomials_of_degree(num_vars, d);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double simplex_monomial_integral(const Exponent& alpha) {
  const int n = static_cast<int>(alpha.size());
  double num = 1.0;
  int total = 0;
  for (int a : alpha) {
    num *= factorial(a);
    total += a;
  }
  return num / factorial(n + total);
}

Polynomial Polynomial::constant(int num_vars, double c) {
  Polynomial p(num_vars);
  p.add_term(Exponent(num_vars, 0), c);
  return p;
}

Polynomial Polynomial::variable(int num_vars, int i) {
  Polynomial p(num_vars);
  Exponent e(num_vars, 0);
  e.at(i) = 1;
  p.add_term(e, 1.0);
  return p;
}

Polynomial Polynomial::monomial(const Exponent& e, double c) {
  Polynomial p(static_cast<int>(e.size()));
  p.add_term(e, c);
  return p;
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  const auto& e = terms_.rbegin()->first;
  return std::accumulate(e.begin(), e.end(), 0);
}

bool Polynomial::is_zero(double tol) const {
  for (const auto& [e, c] : terms_)
    if (std::abs(c) > tol) return false;
  return true;
}

double Polynomial::coefficient(const Exponent& e) const {
  auto it = terms_.find(e);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::add_term(const Exponent& e, double c) {
  if (static_cast<int>(e.size()) != num_vars_)
    throw std::invalid_argument("Polynomial: exponent length mismatch");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(e, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double Polynomial::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != num_vars_) throw std::invalid_argument("Polynomial: point dimension mismatch");
  double sum = 0.0;
  for (const auto& [e, c] : terms_) {
    double m = c;
    for (int i = 0; i < num_vars_; ++i)
      for (int p = 0; p < e[i]; ++p) m *= x[i];
    sum += m;
  }
  return sum;
}

Polynomial Polynomial::derivative(int i) const {
  Polynomial out(num_vars_);
  for (const auto& [e, c] : terms_) {
    if (e[i] == 0) continue;
    Exponent f = e;
    f[i] -= 1;
    out.add_term(f, c * e[i]);
  }
  return out;
}

Polynomial Polynomial::compose_affine(const Eigen::Ref<const Eigen::VectorXd>& offset,
                                      const Eigen::Ref<const Eigen::MatrixXd>& A) const {
  if (offset.size() != num_vars_ || A.rows() != num_vars_)
    throw std::invalid_argument("Polynomial::compose_affine: dimension mismatch");
  const int m = static_cast<int>(A.cols());
  // Linear forms x_i(t) = offset_i + sum_j A_ij t_j and their powers, built lazily.
  std::vector<std::vector<Polynomial>> powers(num_vars_);
  for (int i = 0; i < num_vars_; ++i) {
    Polynomial lin = constant(m, offset[i]);
    for (int j = 0; j < m; ++j) lin += variable(m, j) * A(i, j);
    lin.prune(0.0);
    powers[i].push_back(constant(m, 1.0));
    powers[i].push_back(lin);
  }
  auto power = [&](int i, int p) -> const Polynomial& {
    while (static_cast<int>(powers[i].size()) <= p) powers[i].push_back(powers[i].back() * powers[i][1]);
    return powers[i][p];
  };
  Polynomial out(m);
  for (const auto& [e, c] : terms_) {
    Polynomial term = constant(m, c);
    for (int i = 0; i < num_vars_; ++i)
      if (e[i] > 0) term = term * power(i, e[i]);
    out += term;
  }
  return out;
}

double Polynomial::integrate_simplex() const {
  double sum = 0.0;
  for (const auto& [e, c] : terms_) sum += c * simplex_monomial_integral(e);
  return sum;
}

Polynomial& Polynomial::prune(double tol) {
  for (auto it = terms_.begin(); it != terms_.end();) {
    if (std::abs(it->second) <= tol)
      it = terms_.erase(it);
    else
      ++it;
  }
  return *this;
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  if (other.num_vars_ != num_vars_) throw std::invalid_argument("Polynomial: variable count mismatch");
  for (const auto& [e, c] : other.terms_) add_term(e, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  if (other.num_vars_ != num_vars_) throw std::invalid_argument("Polynomial: variable count mismatch");
  for (const auto& [e, c] : other.terms_) add_term(e, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [e, c] : terms_) c *= s;
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.num_vars_ != b.num_vars_) throw std::invalid_argument("Polynomial: variable count mismatch");
  Polynomial out(a.num_vars_);
  Exponent e(a.num_vars_);
  for (const auto& [ea, ca] : a.terms_)
    for (const auto& [eb, cb] : b.terms_) {
      for (int i = 0; i < a.num_vars_; ++i) e[i] = ea[i] + eb[i];
      out.add_term(e, ca * cb);
    }
  return out;
}

bool Polynomial::operator==(const Polynomial& other) const {
  return num_vars_ == other.num_vars_ && terms_ == other.terms_;
}

}  // namespace mfeec
