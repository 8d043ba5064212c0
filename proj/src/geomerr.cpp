#include "mfeec/geomerr.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mfeec {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd dense_spd(const SparseMatrix& M, int max_dofs, const char* what) {
  if (M.rows() != M.cols()) throw std::invalid_argument(std::string(what) + ": matrix is not square");
  if (M.rows() > max_dofs) throw std::invalid_argument(std::string(what) + ": too many DOFs for a dense eigensolve");
  Eigen::MatrixXd D(M);
  D = 0.5 * (D + D.transpose()).eval();
  if (Eigen::LLT<Eigen::MatrixXd>(D).info() != Eigen::Success) throw std::invalid_argument(std::string(what) + ": matrix is not SPD");
  return D;
}

/// Generalized eigenvalues of (A, B), ascending.
Eigen::VectorXd pencil(const SparseMatrix& A, const SparseMatrix& B, int max_dofs, const char* what) {
  const Eigen::MatrixXd Ad = dense_spd(A, max_dofs, what), Bd = dense_spd(B, max_dofs, what);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Ad, Bd, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": eigensolver failed");
  return es.eigenvalues();
}

double m_norm(const SparseMatrix& M, const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : std::sqrt(std::max(0.0, v.dot(M * v))); }

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void GeometryPair::check() const {
  if (M_exact.rows() != M_comp.rows() || M_exact.cols() != M_comp.cols())
    throw std::invalid_argument("GeometryPair: mass matrices of different spaces");
}

GeometryPair make_geometry_pair(const SimplicialComplex& K, const Surface& surface, const DofTable& table, int l) {
  return {assemble_mass(K, table, exact_geometry(K, surface, l)), assemble_mass(K, table, computational_geometry(K, surface, l))};
}

double geometric_error_norm(const GeometryPair& pair, int max_dofs) {
  pair.check();
  if (pair.M_exact.rows() == 0) return 0.0;
  const Eigen::VectorXd ev = pencil(pair.M_comp, pair.M_exact, max_dofs, "geometric_error_norm");
  return std::max(std::abs(1.0 - ev.minCoeff()), std::abs(1.0 - ev.maxCoeff()));
}

double operator_norm_CA(const GeometryPair& pair, int max_dofs) {
  pair.check();
  if (pair.M_exact.rows() == 0) return 1.0;
  return std::sqrt(pencil(pair.M_exact, pair.M_comp, max_dofs, "operator_norm_CA").maxCoeff());
}

CrimeGap crime_gap(const HodgeProblem& exact, const HodgeProblem& comp, const Eigen::VectorXd& f_coeffs) {
  exact.check();
  comp.check();
  if (exact.k != comp.k || exact.size() != comp.size() || exact.size_prev() != comp.size_prev() ||
      exact.M_next.rows() != comp.M_next.rows())
    throw std::invalid_argument("crime_gap: the two problems live on different DOF spaces");
  if (f_coeffs.size() != exact.size()) throw std::invalid_argument("crime_gap: load coefficients have the wrong size");

  HodgeProblem pe = exact, pc = comp;
  pe.F = exact.M * f_coeffs;
  pc.F = comp.M * f_coeffs;
  const HarmonicBasis He = harmonic_forms(pe), Hc = harmonic_forms(pc);
  const SolveReport Re = solve_hodge_laplace(pe, He), Rc = solve_hodge_laplace(pc, Hc);

  CrimeGap out;
  out.gap = m_norm(exact.M_prev, Re.sigma - Rc.sigma) + m_norm(exact.M, Re.u - Rc.u) +
            m_norm(exact.M, Eigen::VectorXd(He.columns * Re.p - Hc.columns * Rc.p));
  out.f_norm = m_norm(exact.M, f_coeffs);
  for (const auto& [a, b] : {std::pair{&exact.M_prev, &comp.M_prev}, std::pair{&exact.M, &comp.M}, std::pair{&exact.M_next, &comp.M_next}})
    if (a->rows() > 0) out.geom_error = std::max(out.geom_error, geometric_error_norm({*a, *b}));
  return out;
}

SlopeFit fit_slope(const std::vector<double>& h, const std::vector<double>& values) {
  if (h.size() != values.size() || h.size() < 2) throw std::invalid_argument("fit_slope: need at least two matching points");
  const auto n = static_cast<Eigen::Index>(h.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(h[static_cast<std::size_t>(i)] > 0.0 && values[static_cast<std::size_t>(i)] > 0.0))
      throw std::invalid_argument("fit_slope: values must be positive");
    A(i, 0) = std::log(h[static_cast<std::size_t>(i)]);
    A(i, 1) = 1.0;
    b[i] = std::log(values[static_cast<std::size_t>(i)]);
  }
  const Eigen::Vector2d x = A.colPivHouseholderQr().solve(b);
  SlopeFit fit{x[0], x[1], std::sqrt((A * x - b).squaredNorm() / static_cast<double>(n))};
  return fit;
}

SlopeFit RateTable::fit() const {
  if (h.size() < 3) throw std::invalid_argument("RateTable: at least 3 levels are needed for a fit");
  for (std::size_t i = 1; i < h.size(); ++i)
    if (!(h[i] < h[i - 1])) throw std::invalid_argument("RateTable: h must be strictly decreasing");
  return fit_slope(h, values);
}

std::string RateTable::to_csv() const {
  const SlopeFit f = fit();
  std::ostringstream os;
  os << "# " << name << " slope=" << fmt17(f.slope) << " residual=" << fmt17(f.residual) << "\n";
  os << "h,value\n";
  for (std::size_t i = 0; i < h.size(); ++i) os << fmt17(h[i]) << "," << fmt17(values[i]) << "\n";
  return os.str();
}

ManufacturedSolution manufactured_solution(const std::string& surface, int k) {
  using V = Eigen::VectorXd;
  ManufacturedSolution m;
  if (surface == "sphere") {
    // x3 is a Laplace-Beltrami eigenfunction with eigenvalue 2; d and the Hodge star carry it to k = 1, 2.
    if (k == 0) {
      m.u = [](const V& x) { return V::Constant(1, x[2] / 2); };
      m.f = [](const V& x) { return V::Constant(1, x[2]); };
      m.du = [](const V&) { return Eigen::Vector3d(0, 0, 0.5).eval(); };
      m.has_du = true;
    } else if (k == 1) {
      m.u = [](const V&) { return Eigen::Vector3d(0, 0, 1).eval(); };
      m.f = [](const V&) { return Eigen::Vector3d(0, 0, 2).eval(); };
      m.du = [](const V&) { return V::Zero(3).eval(); };
      m.sigma = [](const V& x) { return V::Constant(1, 2 * x[2]); };
      m.has_du = m.has_sigma = true;
    } else if (k == 2) {
      // vol = x1 dx2^dx3 - x2 dx1^dx3 + x3 dx1^dx2 over (01, 02, 12).
      m.u = [](const V& x) { return (x[2] * Eigen::Vector3d(x[2], -x[1], x[0])).eval(); };
      m.f = [](const V& x) { return (2 * x[2] * Eigen::Vector3d(x[2], -x[1], x[0])).eval(); };
      m.sigma = [](const V& x) { return Eigen::Vector3d(-x[1], x[0], 0).eval(); };
      m.has_sigma = true;
    } else {
      throw std::invalid_argument("manufactured_solution: k must be 0, 1 or 2");
    }
    return m;
  }
  if (surface == "flat-torus") {
    const double w = 2 * kPi;
    if (k == 0) {
      m.u = [w](const V& x) { return V::Constant(1, std::sin(w * x[0]) * std::cos(w * x[1])); };
      m.f = [w](const V& x) { return V::Constant(1, 2 * w * w * std::sin(w * x[0]) * std::cos(w * x[1])); };
      m.du = [w](const V& x) {
        return Eigen::Vector2d(w * std::cos(w * x[0]) * std::cos(w * x[1]), -w * std::sin(w * x[0]) * std::sin(w * x[1])).eval();
      };
      m.has_du = true;
    } else if (k == 1) {
      m.u = [w](const V& x) { return Eigen::Vector2d(0, std::sin(w * x[0])).eval(); };
      m.f = [w](const V& x) { return Eigen::Vector2d(0, w * w * std::sin(w * x[0])).eval(); };
      m.du = [w](const V& x) { return V::Constant(1, w * std::cos(w * x[0])); };
      m.sigma = [](const V&) { return V::Zero(1).eval(); };
      m.has_du = m.has_sigma = true;
    } else if (k == 2) {
      m.u = [w](const V& x) { return V::Constant(1, std::sin(w * x[0]) * std::sin(w * x[1])); };
      m.f = [w](const V& x) { return V::Constant(1, 2 * w * w * std::sin(w * x[0]) * std::sin(w * x[1])); };
      m.sigma = [w](const V& x) {
        return Eigen::Vector2d(w * std::sin(w * x[0]) * std::cos(w * x[1]), -w * std::cos(w * x[0]) * std::sin(w * x[1])).eval();
      };
      m.has_sigma = true;
    } else {
      throw std::invalid_argument("manufactured_solution: k must be 0, 1 or 2");
    }
    return m;
  }
  throw std::invalid_argument("manufactured_solution: no manufactured solution on surface '" + surface + "'");
}

SimplicialComplex surface_complex(const std::string& surface, int level) {
  if (level < 0) throw std::invalid_argument("surface_complex: level must be nonnegative");
  if (level > 6) throw std::invalid_argument("surface_complex: level above 6 is out of scope");
  if (surface == "sphere") return generate_sphere(level);
  if (surface == "torus") return generate_round_torus(1 << level);
  if (surface == "flat-torus") return generate_flat_torus(1 << (level + 1));
  if (surface == "cubed-sphere") return generate_cubed_sphere(1 << level).complex;
  throw std::invalid_argument("surface_complex: unknown surface '" + surface + "'");
}

std::optional<Surface> surface_geometry(const std::string& surface) {
  if (surface == "sphere" || surface == "cubed-sphere") return Surface::sphere();
  if (surface == "torus") return Surface::torus();
  if (surface == "flat-torus") return std::nullopt;
  throw std::invalid_argument("surface_geometry: unknown surface '" + surface + "'");
}

Study convergence_study(const StudyConfig& config) {
  if (config.level_max - config.level_min + 1 < 3) throw std::invalid_argument("convergence_study: at least 3 levels are needed");
  if (!config.spec.valid() || config.spec.d != 2) throw std::invalid_argument("convergence_study: invalid form space");
  if (config.geom_degree < 1) throw std::invalid_argument("convergence_study: geometry degree must be positive");
  const ManufacturedSolution ms = manufactured_solution(config.surface, config.spec.k);
  const std::optional<Surface> surface = surface_geometry(config.surface);

  Study study;
  study.config = config;
  RateTable tu{"u", {}, {}}, tdu{"du", {}, {}}, tsigma{"sigma", {}, {}}, tgeom{"geometric_error", {}, {}};
  for (int level = config.level_min; level <= config.level_max; ++level) {
    const SimplicialComplex K = surface_complex(config.surface, level);
    const MeshGeometry G = config.exact_geometry ? exact_geometry(K, surface, config.geom_degree)
                                                 : computational_geometry(K, surface, config.geom_degree);
    HodgeSpaces S = build_hodge_spaces(K, G, config.spec);
    S.problem.F = assemble_load(K, S.cur, G, ms.f, config.quad_order);
    const SolveReport R = solve_hodge_laplace(S.problem);
    const double h = quality_report(K, G).h_max;
    tu.h.push_back(h);
    tu.values.push_back(l2_error(K, S.cur, G, R.u, ms.u, config.quad_order));
    if (ms.has_du) {
      tdu.h.push_back(h);
      tdu.values.push_back(l2_error(K, S.next, G, S.problem.D * R.u, ms.du, config.quad_order));
    }
    if (ms.has_sigma) {
      tsigma.h.push_back(h);
      tsigma.values.push_back(l2_error(K, S.prev, G, R.sigma, ms.sigma, config.quad_order));
    }
    if (surface) {
      tgeom.h.push_back(h);
      tgeom.values.push_back(geometric_error_norm(make_geometry_pair(K, *surface, S.cur, config.geom_degree)));
    }
  }
  study.tables.push_back(tu);
  if (ms.has_du) study.tables.push_back(tdu);
  if (ms.has_sigma) study.tables.push_back(tsigma);
  if (surface) study.tables.push_back(tgeom);
  return study;
}

std::string Study::to_json() const {
  nlohmann::ordered_json j;
  j["surface"] = config.surface;
  j["spec"] = config.spec.to_string();
  j["geom_degree"] = config.geom_degree;
  j["geometry"] = config.exact_geometry ? "exact" : "computational";
  j["levels"] = {config.level_min, config.level_max};
  j["tables"] = nlohmann::ordered_json::array();
  for (const auto& t : tables) {
    nlohmann::ordered_json e;
    e["name"] = t.name;
    e["h"] = t.h;
    e["values"] = t.values;
    const SlopeFit f = t.fit();
    e["slope"] = f.slope;
    e["residual"] = f.residual;
    j["tables"].push_back(e);
  }
  return j.dump(2);
}

}  // namespace mfeec
