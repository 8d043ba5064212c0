#include "mfeec/polyform.hpp"

#include "mfeec/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfeec {

namespace {

void fill_sigma(int k, int d, int start, AscendingIndex& cur, std::vector<AscendingIndex>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < d; ++i) {
    cur.push_back(i);
    fill_sigma(k, d, i + 1, cur, out);
    cur.pop_back();
  }
}

/// Sign of the permutation sorting the concatenation of two disjoint ascending lists.
int merge_sign(const AscendingIndex& a, const AscendingIndex& b) {
  int inversions = 0;
  for (int x : a)
    for (int y : b) {
      if (x == y) return 0;
      if (x > y) ++inversions;
    }
  return inversions % 2 == 0 ? 1 : -1;
}

AscendingIndex merged(const AscendingIndex& a, const AscendingIndex& b) {
  AscendingIndex out;
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

double submatrix_det(const Eigen::Ref<const Eigen::MatrixXd>& A, const AscendingIndex& rows, const AscendingIndex& cols) {
  const int k = static_cast<int>(rows.size());
  if (k == 0) return 1.0;
  if (k == 1) return A(rows[0], cols[0]);
  if (k == 2) return A(rows[0], cols[0]) * A(rows[1], cols[1]) - A(rows[0], cols[1]) * A(rows[1], cols[0]);
  Eigen::MatrixXd S(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) S(i, j) = A(rows[i], cols[j]);
  return S.determinant();
}

}  // namespace

std::vector<AscendingIndex> sigma_set(int k, int d) {
  std::vector<AscendingIndex> out;
  if (k < 0 || k > d) return out;
  AscendingIndex cur;
  fill_sigma(k, d, 0, cur, out);
  return out;
}

namespace {

// Tables for the small dimensions used in hot loops.
const std::vector<AscendingIndex>& sigma_table(int k, int d) {
  static const auto tables = [] {
    std::vector<std::vector<std::vector<AscendingIndex>>> t(5);
    for (int dd = 0; dd <= 4; ++dd)
      for (int kk = 0; kk <= dd; ++kk) t[static_cast<std::size_t>(dd)].push_back(sigma_set(kk, dd));
    return t;
  }();
  return tables[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
}

}  // namespace

int sigma_position(const AscendingIndex& sigma, int d) {
  const int k = static_cast<int>(sigma.size());
  if (d <= 4 && k <= d) {
    const auto& all = sigma_table(k, d);
    auto it = std::lower_bound(all.begin(), all.end(), sigma);
    if (it == all.end() || *it != sigma) throw std::invalid_argument("sigma_position: index not in sigma set");
    return static_cast<int>(it - all.begin());
  }
  const auto all = sigma_set(k, d);
  auto it = std::lower_bound(all.begin(), all.end(), sigma);
  if (it == all.end() || *it != sigma) throw std::invalid_argument("sigma_position: index not in sigma set");
  return static_cast<int>(it - all.begin());
}

int binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  long long b = 1;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return static_cast<int>(b);
}

Eigen::VectorXd pullback_value(const Eigen::Ref<const Eigen::VectorXd>& value, int k,
                               const Eigen::Ref<const Eigen::MatrixXd>& A) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(A.cols());
  const auto src = sigma_set(k, n);
  const auto dst = sigma_set(k, m);
  if (value.size() != static_cast<Eigen::Index>(src.size()))
    throw std::invalid_argument("pullback_value: value size mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dst.size()));
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (value[s] == 0.0) continue;
    for (std::size_t t = 0; t < dst.size(); ++t) out[t] += value[s] * submatrix_det(A, src[s], dst[t]);
  }
  return out;
}

Eigen::MatrixXd compound_matrix(const Eigen::Ref<const Eigen::MatrixXd>& G, int k) {
  const auto sig = sigma_set(k, static_cast<int>(G.rows()));
  const auto n = static_cast<Eigen::Index>(sig.size());
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index t = 0; t < n; ++t) C(s, t) = submatrix_det(G, sig[s], sig[t]);
  return C;
}

double wedge_top(const Eigen::Ref<const Eigen::VectorXd>& a, int k, const Eigen::Ref<const Eigen::VectorXd>& b, int n) {
  const auto sa = sigma_set(k, n);
  const auto sb = sigma_set(n - k, n);
  double sum = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; j < sb.size(); ++j) {
      const int s = merge_sign(sa[i], sb[j]);
      if (s != 0) sum += s * a[i] * b[j];
    }
  }
  return sum;
}

int insertion_sign(int i, const AscendingIndex& sigma) {
  int before = 0;
  for (int s : sigma) {
    if (s == i) return 0;
    if (s < i) ++before;
  }
  return before % 2 == 0 ? 1 : -1;
}

// ---------------------------------------------------------------------------

PolyForm::PolyForm(int dim, int degree) : dim_(dim), k_(degree) {
  if (dim < 0) throw std::invalid_argument("PolyForm: negative dimension");
}

PolyForm PolyForm::basic(int dim, const AscendingIndex& sigma, const Polynomial& coefficient) {
  PolyForm f(dim, static_cast<int>(sigma.size()));
  f.add(sigma, coefficient);
  return f;
}

PolyForm PolyForm::scalar(const Polynomial& p) { return basic(p.num_vars(), {}, p); }

int PolyForm::polynomial_degree() const {
  int deg = -1;
  for (const auto& [s, p] : terms_) deg = std::max(deg, p.degree());
  return deg;
}

Polynomial PolyForm::coefficient(const AscendingIndex& sigma) const {
  auto it = terms_.find(sigma);
  return it == terms_.end() ? Polynomial(dim_) : it->second;
}

void PolyForm::add(const AscendingIndex& sigma, const Polynomial& p) {
  if (static_cast<int>(sigma.size()) != k_) throw std::invalid_argument("PolyForm::add: index length differs from degree");
  if (p.num_vars() != dim_) throw std::invalid_argument("PolyForm::add: variable count mismatch");
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] < 0 || sigma[i] >= dim_ || (i > 0 && sigma[i] <= sigma[i - 1]))
      throw std::invalid_argument("PolyForm::add: index not strictly ascending in range");
  }
  if (p.terms().empty()) return;
  auto [it, inserted] = terms_.try_emplace(sigma, p);
  if (!inserted) {
    it->second += p;
    if (it->second.terms().empty()) terms_.erase(it);
  }
}

Eigen::VectorXd PolyForm::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(binomial(dim_, k_));
  for (const auto& [s, p] : terms_) out[sigma_position(s, dim_)] = p(x);
  return out;
}

bool PolyForm::is_zero(double tol) const {
  for (const auto& [s, p] : terms_)
    if (!p.is_zero(tol)) return false;
  return true;
}

PolyForm& PolyForm::prune(double tol) {
  for (auto it = terms_.begin(); it != terms_.end();) {
    it->second.prune(tol);
    if (it->second.terms().empty())
      it = terms_.erase(it);
    else
      ++it;
  }
  return *this;
}

PolyForm& PolyForm::operator+=(const PolyForm& o) {
  if (o.dim_ != dim_ || o.k_ != k_) throw std::invalid_argument("PolyForm: incompatible operands");
  for (const auto& [s, p] : o.terms_) add(s, p);
  return *this;
}

PolyForm& PolyForm::operator-=(const PolyForm& o) {
  if (o.dim_ != dim_ || o.k_ != k_) throw std::invalid_argument("PolyForm: incompatible operands");
  for (const auto& [s, p] : o.terms_) add(s, -p);
  return *this;
}

PolyForm& PolyForm::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [sig, p] : terms_) p *= s;
  return *this;
}

Eigen::VectorXd PolyForm::coefficient_vector(int max_degree) const {
  const auto sig = sigma_set(k_, dim_);
  const auto mons = monomials_upto(dim_, max_degree);
  std::map<Exponent, int, GradedLex> pos;
  for (std::size_t i = 0; i < mons.size(); ++i) pos[mons[i]] = static_cast<int>(i);
  const auto nm = static_cast<Eigen::Index>(mons.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sig.size()) * nm);
  for (const auto& [s, p] : terms_) {
    const int sp = sigma_position(s, dim_);
    for (const auto& [e, c] : p.terms()) {
      auto it = pos.find(e);
      if (it == pos.end()) throw std::invalid_argument("coefficient_vector: degree exceeds max_degree");
      v[sp * nm + it->second] = c;
    }
  }
  return v;
}

std::string PolyForm::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [s, p] : terms_) {
    for (const auto& [e, c] : p.terms()) {
      if (!first) os << " + ";
      first = false;
      os << c;
      for (int i = 0; i < dim_; ++i)
        if (e[i] > 0) os << "*x" << i + 1 << (e[i] > 1 ? "^" + std::to_string(e[i]) : "");
      for (std::size_t j = 0; j < s.size(); ++j) os << (j == 0 ? " dx" : "^dx") << s[j] + 1;
    }
  }
  if (first) os << "0";
  return os.str();
}

PolyForm exterior_derivative(const PolyForm& u) {
  const int d = u.dim();
  PolyForm out(d, u.degree() + 1);
  if (u.degree() >= d) return out;
  for (const auto& [s, p] : u.terms()) {
    for (int i = 0; i < d; ++i) {
      const int sign = insertion_sign(i, s);
      if (sign == 0) continue;
      Polynomial dp = p.derivative(i);
      if (dp.terms().empty()) continue;
      out.add(merged({i}, s), dp * static_cast<double>(sign));
    }
  }
  return out;
}

PolyForm koszul(const PolyForm& u) {
  if (u.degree() == 0) throw std::invalid_argument("koszul: 0-forms are not in the domain");
  const int d = u.dim();
  PolyForm out(d, u.degree() - 1);
  for (const auto& [s, p] : u.terms()) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      AscendingIndex rest = s;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      out.add(rest, Polynomial::variable(d, s[j]) * p * sign);
    }
  }
  return out;
}

PolyForm wedge(const PolyForm& a, const PolyForm& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("wedge: dimension mismatch");
  PolyForm out(a.dim(), a.degree() + b.degree());
  if (out.degree() > a.dim()) return out;
  for (const auto& [sa, pa] : a.terms())
    for (const auto& [sb, pb] : b.terms()) {
      const int sign = merge_sign(sa, sb);
      if (sign == 0) continue;
      out.add(merged(sa, sb), pa * pb * static_cast<double>(sign));
    }
  return out;
}

PolyForm pullback_affine(const PolyForm& u, const Eigen::Ref<const Eigen::VectorXd>& offset,
                         const Eigen::Ref<const Eigen::MatrixXd>& A) {
  if (A.rows() != u.dim() || offset.size() != u.dim()) throw std::invalid_argument("pullback_affine: dimension mismatch");
  const int m = static_cast<int>(A.cols());
  const int k = u.degree();
  PolyForm out(m, k);
  if (k > m) return out;
  const auto dst = sigma_set(k, m);
  for (const auto& [s, p] : u.terms()) {
    Polynomial q = p.compose_affine(offset, A);
    for (const auto& t : dst) {
      const double det = submatrix_det(A, s, t);
      if (det != 0.0) out.add(t, q * det);
    }
  }
  return out;
}

AffineMap simplex_embedding(int d, const std::vector<int>& vertices) {
  if (vertices.empty()) throw std::invalid_argument("simplex_embedding: empty vertex list");
  auto corner = [d](int v) {
    if (v < 0 || v > d) throw std::invalid_argument("simplex_embedding: vertex out of range");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
    if (v > 0) p[v - 1] = 1.0;
    return p;
  };
  AffineMap map;
  map.offset = corner(vertices[0]);
  map.matrix.resize(d, static_cast<Eigen::Index>(vertices.size()) - 1);
  for (std::size_t j = 1; j < vertices.size(); ++j) map.matrix.col(static_cast<Eigen::Index>(j) - 1) = corner(vertices[j]) - map.offset;
  return map;
}

PolyForm trace_to_subsimplex(const PolyForm& u, const std::vector<int>& vertices) {
  const AffineMap map = simplex_embedding(u.dim(), vertices);
  return pullback_affine(u, map.offset, map.matrix);
}

double integrate_top_form(const PolyForm& u) {
  if (u.degree() != u.dim()) throw std::invalid_argument("integrate_top_form: form is not of top degree");
  AscendingIndex all(static_cast<std::size_t>(u.dim()));
  for (int i = 0; i < u.dim(); ++i) all[i] = i;
  return u.coefficient(all).integrate_simplex();
}

// ---------------------------------------------------------------------------

std::string to_string(Family f) { return f == Family::Full ? "full" : "trimmed"; }

Family family_from_string(const std::string& s) {
  if (s == "full" || s == "FULL") return Family::Full;
  if (s == "trimmed" || s == "TRIMMED") return Family::Trimmed;
  throw std::invalid_argument("unknown family '" + s + "'");
}

bool FormSpaceSpec::valid() const {
  if (d < 0 || k < 0 || k > d) return false;
  if (family == Family::Trimmed) return r >= 1;
  return r >= 1 || (k == d && r >= 0);
}

std::string FormSpaceSpec::to_string() const {
  std::ostringstream os;
  os << (family == Family::Full ? "P" : "P-") << r << "L" << k << "(D" << d << ")";
  return os.str();
}

int space_dimension(Family family, int r, int k, int d) {
  if (k < 0 || k > d || r < 0) return 0;
  if (family == Family::Full || k == 0) return binomial(r + d, r + k) * binomial(r + k, k);
  if (r == 0) return 0;
  return binomial(r + k - 1, k) * binomial(d + r, d - k);
}

std::vector<PolyForm> reduce_to_basis(const std::vector<PolyForm>& spanning, double rel_tol) {
  std::vector<PolyForm> out;
  if (spanning.empty()) return out;
  int maxdeg = 0;
  for (const auto& f : spanning) maxdeg = std::max(maxdeg, f.polynomial_degree());
  // Greedy Gaussian elimination: a candidate is kept when its reduced vector has a
  // pivot above rel_tol times the largest pivot seen so far.
  std::vector<Eigen::VectorXd> rows;
  std::vector<Eigen::Index> pivots;
  double largest = 0.0;
  for (const auto& f : spanning) {
    Eigen::VectorXd v = f.coefficient_vector(maxdeg);
    for (std::size_t i = 0; i < rows.size(); ++i) v -= v[pivots[i]] * rows[i];
    Eigen::Index p = 0;
    const double piv = v.cwiseAbs().maxCoeff(&p);
    largest = std::max(largest, piv);
    if (piv <= rel_tol * largest || piv == 0.0) continue;
    v /= v[p];
    rows.push_back(v);
    pivots.push_back(p);
    out.push_back(f);
  }
  return out;
}

int form_rank(const std::vector<PolyForm>& forms, double rel_tol) {
  return static_cast<int>(reduce_to_basis(forms, rel_tol).size());
}

std::vector<PolyForm> build_basis(Family family, int r, int k, int d) {
  std::vector<PolyForm> out;
  if (k < 0 || k > d || r < 0) return out;
  if (family == Family::Full || k == 0) {
    for (const auto& s : sigma_set(k, d))
      for (const auto& e : monomials_upto(d, r)) out.push_back(PolyForm::basic(d, s, Polynomial::monomial(e)));
    return out;
  }
  if (r == 0) return out;
  std::vector<PolyForm> spanning = build_basis(Family::Full, r - 1, k, d);
  for (const auto& f : build_basis(Family::Full, r - 1, k + 1, d)) spanning.push_back(koszul(f));
  return reduce_to_basis(spanning);
}

std::vector<PolyForm> build_basis(const FormSpaceSpec& spec) { return build_basis(spec.family, spec.r, spec.k, spec.d); }

// ---------------------------------------------------------------------------

namespace {

/// Weight family and degree for moments on a face of dimension f.
std::vector<PolyForm> face_weights(const FormSpaceSpec& spec, int f) {
  const int wk = f - spec.k;
  if (wk < 0) return {};
  if (spec.family == Family::Full) return build_basis(Family::Trimmed, spec.r - f + spec.k, wk, f);
  return build_basis(Family::Full, spec.r - f + spec.k - 1, wk, f);
}

void fill_subsets(int n, int size, int start, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == size) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < n; ++i) {
    cur.push_back(i);
    fill_subsets(n, size, i + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

int dofs_per_face(const FormSpaceSpec& spec, int face_dim) {
  const int wk = face_dim - spec.k;
  if (wk < 0) return 0;
  if (spec.family == Family::Full) return space_dimension(Family::Trimmed, spec.r - face_dim + spec.k, wk, face_dim);
  return space_dimension(Family::Full, spec.r - face_dim + spec.k - 1, wk, face_dim);
}

std::vector<DofFunctional> dof_functionals(const FormSpaceSpec& spec, const FaceOrdering& ordering) {
  if (!spec.valid()) throw std::invalid_argument("dof_functionals: invalid space " + spec.to_string());
  std::vector<DofFunctional> out;
  for (int f = spec.k; f <= spec.d; ++f) {
    const auto weights = face_weights(spec, f);
    if (weights.empty()) continue;
    std::vector<std::vector<int>> faces;
    std::vector<int> cur;
    fill_subsets(spec.d + 1, f + 1, 0, cur, faces);
    for (const auto& face : faces) {
      auto it = ordering.find(face);
      const std::vector<int>& ordered = it == ordering.end() ? face : it->second;
      for (const auto& w : weights) out.push_back({spec.d, ordered, w});
    }
  }
  return out;
}

int default_dof_quadrature_order(const FormSpaceSpec& spec) { return 2 * spec.r + 2; }

double apply_functional(const DofFunctional& f, int k, const ReferenceSampler& u, int quad_order) {
  const int fd = static_cast<int>(f.face.size()) - 1;
  const AffineMap map = simplex_embedding(f.ambient_dim, f.face);
  if (fd == 0) return u(map.offset)[0] * f.weight(Eigen::VectorXd::Zero(0))[0];
  const QuadratureRule q = quadrature_rule_unchecked(fd, quad_order);
  double sum = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    const Eigen::VectorXd t = q.points.col(i);
    const Eigen::VectorXd tr = pullback_value(u(map(t)), k, map.matrix);
    sum += q.weights[i] * wedge_top(tr, k, f.weight(t), fd);
  }
  return sum;
}

ReferenceSampler sampler_of(const PolyForm& u) {
  return [u](const Eigen::VectorXd& x) { return u(x); };
}

PolyForm combine(const std::vector<PolyForm>& basis, const Eigen::Ref<const Eigen::VectorXd>& coefficients) {
  if (basis.empty()) throw std::invalid_argument("combine: empty basis");
  if (coefficients.size() != static_cast<Eigen::Index>(basis.size())) throw std::invalid_argument("combine: size mismatch");
  PolyForm out(basis[0].dim(), basis[0].degree());
  for (std::size_t i = 0; i < basis.size(); ++i)
    if (coefficients[static_cast<Eigen::Index>(i)] != 0.0) out += basis[i] * coefficients[static_cast<Eigen::Index>(i)];
  return out;
}

namespace {

Eigen::MatrixXd unisolvence_matrix(const std::vector<DofFunctional>& fs, const std::vector<PolyForm>& basis, int k,
                                   int quad_order) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd V(static_cast<Eigen::Index>(fs.size()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const ReferenceSampler s = sampler_of(basis[j]);
    for (std::size_t i = 0; i < fs.size(); ++i) V(static_cast<Eigen::Index>(i), j) = apply_functional(fs[i], k, s, quad_order);
  }
  return V;
}

}  // namespace

LocalElement::LocalElement(const FormSpaceSpec& spec, const FaceOrdering& ordering)
    : spec_(spec), functionals_(dof_functionals(spec, ordering)) {
  const auto basis = build_basis(spec);
  if (basis.size() != functionals_.size())
    throw std::logic_error("LocalElement: functional count differs from space dimension for " + spec.to_string());
  const Eigen::MatrixXd V = unisolvence_matrix(functionals_, basis, spec.k, default_dof_quadrature_order(spec));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  if (!lu.isInvertible()) throw std::logic_error("LocalElement: singular unisolvence matrix for " + spec.to_string());
  const Eigen::MatrixXd Vinv = lu.inverse();
  shape_.reserve(basis.size());
  dshape_.reserve(basis.size());
  for (Eigen::Index j = 0; j < Vinv.cols(); ++j) {
    PolyForm s = combine(basis, Vinv.col(j));
    s.prune(1e-14);
    dshape_.push_back(exterior_derivative(s));
    shape_.push_back(std::move(s));
  }
}

Eigen::VectorXd LocalElement::moments(const ReferenceSampler& u, int quad_order) const {
  if (quad_order < 0) quad_order = default_dof_quadrature_order(spec_);
  Eigen::VectorXd m(static_cast<Eigen::Index>(functionals_.size()));
  for (std::size_t i = 0; i < functionals_.size(); ++i)
    m[static_cast<Eigen::Index>(i)] = apply_functional(functionals_[i], spec_.k, u, quad_order);
  return m;
}

Eigen::MatrixXd LocalElement::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::MatrixXd out(binomial(spec_.d, spec_.k), size());
  for (int j = 0; j < size(); ++j) out.col(j) = shape_[static_cast<std::size_t>(j)](x);
  return out;
}

Eigen::VectorXd canonical_interpolate(const ReferenceSampler& u, const FormSpaceSpec& spec, int quad_order) {
  if (quad_order < 0) quad_order = default_dof_quadrature_order(spec);
  const auto basis = build_basis(spec);
  const auto fs = dof_functionals(spec);
  const Eigen::MatrixXd V = unisolvence_matrix(fs, basis, spec.k, default_dof_quadrature_order(spec));
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(fs.size()));
  for (std::size_t i = 0; i < fs.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = apply_functional(fs[i], spec.k, u, quad_order);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
  if (!lu.isInvertible()) throw std::logic_error("canonical_interpolate: singular unisolvence matrix");
  return lu.solve(rhs);
}

}  // namespace mfeec
