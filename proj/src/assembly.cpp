#include "mfeec/assembly.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace mfeec {

namespace {

struct ElementKey {
  FormSpaceSpec spec;
  FaceOrdering ordering;
  bool operator<(const ElementKey& o) const {
    const auto a = std::tuple(static_cast<int>(spec.family), spec.r, spec.k, spec.d);
    const auto b = std::tuple(static_cast<int>(o.spec.family), o.spec.r, o.spec.k, o.spec.d);
    if (a != b) return a < b;
    return ordering < o.ordering;
  }
};

std::shared_ptr<const LocalElement> cached_element(const FormSpaceSpec& spec, const FaceOrdering& ordering) {
  static std::map<ElementKey, std::shared_ptr<const LocalElement>> cache;
  ElementKey key{spec, ordering};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto el = std::make_shared<const LocalElement>(spec, ordering);
  cache.emplace(std::move(key), el);
  return el;
}

/// Shape function values at the points of a rule: one (n_sigma x n_local) block per point.
struct Tabulation {
  std::vector<Eigen::MatrixXd> values;
};

const Tabulation& tabulate(const LocalElement& el, const QuadratureRule& q) {
  static std::map<std::tuple<const LocalElement*, int, int>, Tabulation> cache;
  auto key = std::tuple(&el, q.d, q.order);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Tabulation t;
  for (int i = 0; i < q.size(); ++i) t.values.push_back(el.evaluate(q.points.col(i)));
  return cache.emplace(key, std::move(t)).first->second;
}

}  // namespace

DofTable build_dof_table(const SimplicialComplex& K, const FormSpaceSpec& spec) {
  if (spec.d != K.dim) throw std::invalid_argument("build_dof_table: space dimension differs from the mesh dimension");
  if (!spec.valid()) throw std::invalid_argument("build_dof_table: invalid space " + spec.to_string());
  DofTable T;
  T.spec = spec;
  T.per_simplex.assign(static_cast<std::size_t>(K.dim + 1), 0);
  T.offset.assign(static_cast<std::size_t>(K.dim + 2), 0);
  for (int f = 0; f <= K.dim; ++f) {
    T.per_simplex[static_cast<std::size_t>(f)] = f < spec.k ? 0 : dofs_per_face(spec, f);
    T.offset[static_cast<std::size_t>(f + 1)] = T.offset[static_cast<std::size_t>(f)] + T.per_simplex[static_cast<std::size_t>(f)] * K.count(f);
  }
  T.total = T.offset[static_cast<std::size_t>(K.dim + 1)];
  T.owner.assign(static_cast<std::size_t>(T.total), {-1, -1});
  for (int c = 0; c < K.num_cells(); ++c) {
    auto el = cached_element(spec, K.cell_orderings[static_cast<std::size_t>(c)]);
    std::vector<int> dofs;
    dofs.reserve(static_cast<std::size_t>(el->size()));
    for (int f = spec.k; f <= K.dim; ++f) {
      const int per = T.per_simplex[static_cast<std::size_t>(f)];
      const auto& faces = K.cell_faces[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)];
      for (int id : faces)
        for (int w = 0; w < per; ++w) dofs.push_back(T.global_index(f, id, w));
    }
    if (static_cast<int>(dofs.size()) != el->size()) throw std::logic_error("build_dof_table: local DOF count mismatch");
    for (int j = 0; j < el->size(); ++j) {
      auto& o = T.owner[static_cast<std::size_t>(dofs[static_cast<std::size_t>(j)])];
      if (o.first < 0) o = {c, j};
    }
    T.cell_dofs.push_back(std::move(dofs));
    T.elements.push_back(std::move(el));
  }
  for (const auto& o : T.owner)
    if (o.first < 0) throw std::logic_error("build_dof_table: DOF without owner cell");
  return T;
}

bool compatible_pair(const FormSpaceSpec& from, const FormSpaceSpec& to) {
  if (!from.valid() || !to.valid() || to.d != from.d || to.k != from.k + 1) return false;
  // d P_r and d P-_r both lie in P_{r-1} and in P-_r.
  if (to.family == Family::Full) return to.r >= from.r - 1;
  return to.r >= from.r;
}

FormSpaceSpec next_space(const FormSpaceSpec& spec) { return {Family::Trimmed, spec.r, spec.k + 1, spec.d}; }

FormSpaceSpec previous_space(const FormSpaceSpec& spec) {
  if (spec.family == Family::Full) {
    if (spec.k - 1 == 0) return {Family::Full, spec.r + 1, 0, spec.d};
    return {Family::Trimmed, spec.r + 1, spec.k - 1, spec.d};
  }
  if (spec.k - 1 == 0) return {Family::Full, spec.r, 0, spec.d};
  return {Family::Trimmed, spec.r, spec.k - 1, spec.d};
}

SparseMatrix assemble_exterior_derivative(const SimplicialComplex& K, const DofTable& from, const DofTable& to) {
  if (!compatible_pair(from.spec, to.spec))
    throw std::invalid_argument("assemble_exterior_derivative: " + to.spec.to_string() + " does not contain d of " + from.spec.to_string());
  (void)K;
  const bool lowest = from.spec.r == 1 && to.spec.r == 1 && to.spec.family == Family::Trimmed;
  std::map<std::pair<const LocalElement*, const LocalElement*>, Eigen::MatrixXd> local;
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < to.total; ++i) {
    const auto [c, j] = to.owner[static_cast<std::size_t>(i)];
    const LocalElement& src = from.element(c);
    const LocalElement& dst = to.element(c);
    auto key = std::pair(&src, &dst);
    auto it = local.find(key);
    if (it == local.end()) {
      Eigen::MatrixXd Dl(dst.size(), src.size());
      for (int l = 0; l < src.size(); ++l) Dl.col(l) = dst.moments(sampler_of(src.shape_derivatives()[static_cast<std::size_t>(l)]));
      // The lowest-order matrix is an incidence matrix; remove quadrature round-off.
      if (lowest) Dl = Dl.array().round().matrix();
      Dl = (Dl.array().abs() < 1e-13).select(0.0, Dl);
      // d of each source shape function must be reproduced exactly by the target shapes.
      for (int l = 0; l < src.size(); ++l) {
        const PolyForm target = src.shape_derivatives()[static_cast<std::size_t>(l)];
        const int deg = std::max(0, target.polynomial_degree());
        const double scale = std::max(1.0, target.coefficient_vector(deg).cwiseAbs().maxCoeff());
        PolyForm rebuilt = combine(dst.shape_functions(), Dl.col(l));
        rebuilt -= target;
        if (!rebuilt.prune(1e-9 * scale).is_zero()) throw std::logic_error("assemble_exterior_derivative: derivative not reproduced");
      }
      it = local.emplace(key, std::move(Dl)).first;
    }
    const auto& row = it->second;
    const auto& sd = from.cell_dofs[static_cast<std::size_t>(c)];
    for (int l = 0; l < src.size(); ++l)
      if (row(j, l) != 0.0) trips.emplace_back(i, sd[static_cast<std::size_t>(l)], row(j, l));
  }
  SparseMatrix D(to.total, from.total);
  D.setFromTriplets(trips.begin(), trips.end());
  return D;
}

Eigen::MatrixXd form_gram(const Eigen::Ref<const Eigen::MatrixXd>& g, int k) {
  if (k == 0) return Eigen::MatrixXd::Ones(1, 1);
  return compound_matrix(g.inverse(), k);
}

int default_mass_order(const FormSpaceSpec& spec, const MeshGeometry& G) {
  return 2 * spec.r + 2 * G.degree() + (G.exact() ? 4 : 0);
}

SparseMatrix assemble_mass(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G, int quad_order) {
  if (quad_order < 0) quad_order = default_mass_order(table.spec, G);
  const QuadratureRule q = quadrature_rule_unchecked(K.dim, quad_order);
  const int k = table.spec.k;
  std::vector<Eigen::Triplet<double>> trips;
  for (int c = 0; c < K.num_cells(); ++c) {
    const LocalElement& el = table.element(c);
    const Tabulation& tab = tabulate(el, q);
    Eigen::MatrixXd Ml = Eigen::MatrixXd::Zero(el.size(), el.size());
    for (int i = 0; i < q.size(); ++i) {
      const Eigen::MatrixXd g = G.metric(c, q.points.col(i));
      const double vol = std::sqrt(g.determinant());
      const Eigen::MatrixXd& P = tab.values[static_cast<std::size_t>(i)];
      Ml.noalias() += (q.weights[i] * vol) * (P.transpose() * form_gram(g, k) * P);
    }
    const auto& dofs = table.cell_dofs[static_cast<std::size_t>(c)];
    for (int a = 0; a < el.size(); ++a)
      for (int b = 0; b < el.size(); ++b)
        trips.emplace_back(dofs[static_cast<std::size_t>(a)], dofs[static_cast<std::size_t>(b)], Ml(a, b));
  }
  SparseMatrix M(table.total, table.total);
  M.setFromTriplets(trips.begin(), trips.end());
  // Exact symmetry.
  SparseMatrix Mt = M.transpose();
  M = 0.5 * (M + Mt);
  return M;
}

ReferenceSampler pullback_sampler(const MeshGeometry& G, int c, int k, const PhysicalSampler& u) {
  return [&G, c, k, u](const Eigen::VectorXd& t) { return pullback_value(u(G.point(c, t)), k, G.jacobian(c, t)); };
}

Eigen::VectorXd global_interpolate(const SimplicialComplex& K, const MeshGeometry& G, const DofTable& table,
                                   const PhysicalSampler& u, int quad_order) {
  (void)K;
  if (quad_order < 0) quad_order = default_dof_quadrature_order(table.spec) + (G.exact() ? 4 : 2 * (G.degree() - 1));
  Eigen::VectorXd out(table.total);
  for (int i = 0; i < table.total; ++i) {
    const auto [c, j] = table.owner[static_cast<std::size_t>(i)];
    const LocalElement& el = table.element(c);
    out[i] = apply_functional(el.functionals()[static_cast<std::size_t>(j)], table.spec.k, pullback_sampler(G, c, table.spec.k, u), quad_order);
  }
  return out;
}

Eigen::VectorXd global_interpolate_reference(const DofTable& table, const CellSampler& u, int quad_order) {
  if (quad_order < 0) quad_order = default_dof_quadrature_order(table.spec);
  Eigen::VectorXd out(table.total);
  for (int i = 0; i < table.total; ++i) {
    const auto [c, j] = table.owner[static_cast<std::size_t>(i)];
    const LocalElement& el = table.element(c);
    const ReferenceSampler s = [&u, c = c](const Eigen::VectorXd& t) { return u(c, t); };
    out[i] = apply_functional(el.functionals()[static_cast<std::size_t>(j)], table.spec.k, s, quad_order);
  }
  return out;
}

Eigen::VectorXd evaluate_fe(const DofTable& table, const Eigen::Ref<const Eigen::VectorXd>& coeffs, int c,
                            const Eigen::Ref<const Eigen::VectorXd>& t) {
  const LocalElement& el = table.element(c);
  const auto& dofs = table.cell_dofs[static_cast<std::size_t>(c)];
  Eigen::VectorXd local(el.size());
  for (int j = 0; j < el.size(); ++j) local[j] = coeffs[dofs[static_cast<std::size_t>(j)]];
  return el.evaluate(t) * local;
}

Eigen::VectorXd evaluate_fe_derivative(const DofTable& table, const Eigen::Ref<const Eigen::VectorXd>& coeffs, int c,
                                       const Eigen::Ref<const Eigen::VectorXd>& t) {
  const LocalElement& el = table.element(c);
  const auto& dofs = table.cell_dofs[static_cast<std::size_t>(c)];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(binomial(table.spec.d, table.spec.k + 1));
  for (int j = 0; j < el.size(); ++j) out += coeffs[dofs[static_cast<std::size_t>(j)]] * el.shape_derivatives()[static_cast<std::size_t>(j)](t);
  return out;
}

Eigen::VectorXd assemble_load(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G,
                              const PhysicalSampler& u, int quad_order) {
  if (quad_order < 0) quad_order = default_mass_order(table.spec, G) + 4;
  const QuadratureRule q = quadrature_rule_unchecked(K.dim, quad_order);
  const int k = table.spec.k;
  Eigen::VectorXd F = Eigen::VectorXd::Zero(table.total);
  for (int c = 0; c < K.num_cells(); ++c) {
    const LocalElement& el = table.element(c);
    const Tabulation& tab = tabulate(el, q);
    const auto& dofs = table.cell_dofs[static_cast<std::size_t>(c)];
    for (int i = 0; i < q.size(); ++i) {
      const Eigen::VectorXd t = q.points.col(i);
      const Eigen::MatrixXd g = G.metric(c, t);
      const Eigen::VectorXd ur = pullback_value(u(G.point(c, t)), k, G.jacobian(c, t));
      const Eigen::VectorXd contrib = (q.weights[i] * std::sqrt(g.determinant())) * (tab.values[static_cast<std::size_t>(i)].transpose() * (form_gram(g, k) * ur));
      for (int j = 0; j < el.size(); ++j) F[dofs[static_cast<std::size_t>(j)]] += contrib[j];
    }
  }
  return F;
}

double l2_error(const SimplicialComplex& K, const DofTable& table, const MeshGeometry& G,
                const Eigen::Ref<const Eigen::VectorXd>& coeffs, const PhysicalSampler& u, int quad_order) {
  if (quad_order < 0) quad_order = default_mass_order(table.spec, G) + 4;
  const QuadratureRule q = quadrature_rule_unchecked(K.dim, quad_order);
  const int k = table.spec.k;
  double sum = 0.0;
  for (int c = 0; c < K.num_cells(); ++c) {
    const LocalElement& el = table.element(c);
    const Tabulation& tab = tabulate(el, q);
    const auto& dofs = table.cell_dofs[static_cast<std::size_t>(c)];
    Eigen::VectorXd local(el.size());
    for (int j = 0; j < el.size(); ++j) local[j] = coeffs[dofs[static_cast<std::size_t>(j)]];
    for (int i = 0; i < q.size(); ++i) {
      const Eigen::VectorXd t = q.points.col(i);
      const Eigen::MatrixXd g = G.metric(c, t);
      const Eigen::VectorXd e = pullback_value(u(G.point(c, t)), k, G.jacobian(c, t)) - tab.values[static_cast<std::size_t>(i)] * local;
      sum += q.weights[i] * std::sqrt(g.determinant()) * e.dot(form_gram(g, k) * e);
    }
  }
  return std::sqrt(std::max(sum, 0.0));
}

void write_matrix_market(std::ostream& os, const SparseMatrix& A) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << "% 0-based indices\n";
  os << A.rows() << " " << A.cols() << " " << A.nonZeros() << "\n";
  os << std::setprecision(17);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

}  // namespace mfeec
