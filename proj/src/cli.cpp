#include "mfeec/cli.hpp"

#include "mfeec/geomerr.hpp"
#include "mfeec/mollify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#ifndef MFEEC_GIT_DESCRIBE
#define MFEEC_GIT_DESCRIBE "unknown"
#endif

namespace mfeec::cli {

using json = nlohmann::ordered_json;

namespace {

/// Raised when a computed quantity violates its contract (exit code 1).
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<int, int> parse_levels(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("--levels must look like a:b");
  try {
    std::size_t p1 = 0, p2 = 0;
    const int a = std::stoi(s.substr(0, colon), &p1), b = std::stoi(s.substr(colon + 1), &p2);
    if (p1 != colon || p2 != s.size() - colon - 1) throw std::invalid_argument("");
    if (a < 0 || b < a) throw std::invalid_argument("");
    return {a, b};
  } catch (const std::exception&) {
    throw std::invalid_argument("--levels must look like a:b with 0 <= a <= b");
  }
}

/// Positive epsilon, or nullopt for "auto".
std::optional<double> parse_eps(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size() && v > 0.0 && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("--eps must be 'auto' or a positive number");
}

FormSpaceSpec spec_of(const RunConfig& c) {
  const FormSpaceSpec s{family_from_string(c.family), c.r, c.k, 2};
  if (!s.valid()) throw std::invalid_argument("invalid form space " + s.to_string());
  return s;
}

void validate(const RunConfig& c) {
  spec_of(c);
  if (c.level < 0 || c.level > 6) throw std::invalid_argument("--level must be in [0, 6]");
  if (c.m < 1 || c.m > 64) throw std::invalid_argument("--m must be in [1, 64]");
  if (c.geom_degree < 1 || c.geom_degree > 4) throw std::invalid_argument("--geom-degree must be in [1, 4]");
  if (c.quad_order < -1 || c.quad_order > 30) throw std::invalid_argument("--quad-order must be -1 or in [0, 30]");
  parse_eps(c.eps);
  const auto [a, b] = parse_levels(c.levels);
  if (b > 6) throw std::invalid_argument("--levels above 6 are out of scope");
  (void)a;
}

SimplicialComplex mesh_of(const RunConfig& c) {
  if (c.surface == "sphere") return generate_sphere(c.level);
  if (c.surface == "flat-torus") return generate_flat_torus(c.m);
  if (c.surface == "torus") return generate_round_torus(c.m);
  if (c.surface == "cubed-sphere") return generate_cubed_sphere(c.m).complex;
  throw std::invalid_argument("unknown surface '" + c.surface + "'");
}

MeshGeometry geometry_of(const RunConfig& c, const SimplicialComplex& K) {
  const auto surface = surface_geometry(c.surface);
  return c.geometry == "exact" ? exact_geometry(K, surface, c.geom_degree) : computational_geometry(K, surface, c.geom_degree);
}

std::string geometry_description(const RunConfig& c) {
  if (!surface_geometry(c.surface)) return "flat: affine charts of the periodic square";
  if (c.geometry == "exact")
    return "exact: closest-point projection composed with the degree-" + std::to_string(c.geom_degree) +
           " lift, quadrature order +4";
  return "computational: degree-" + std::to_string(c.geom_degree) + " Lagrange lift of the closest-point projection";
}

std::string manufactured_surface(const std::string& s) { return s == "cubed-sphere" ? "sphere" : s; }

double m_norm(const SparseMatrix& M, const Eigen::VectorXd& v) { return std::sqrt(std::max(0.0, v.dot(M * v))); }

void require_flat_torus(const RunConfig& c) {
  if (c.surface != "flat-torus") throw std::invalid_argument("this command runs on the flat torus only (--surface flat-torus)");
}

// ---------------------------------------------------------------------------
// Commands

json cmd_mesh_info(const RunConfig& c) {
  SimplicialComplex K;
  if (!c.mesh.empty()) {
    std::ifstream in(c.mesh);
    if (!in) throw std::invalid_argument("cannot read mesh file '" + c.mesh + "'");
    K = read_mesh(in);
  } else {
    K = mesh_of(c);
  }
  const MeshGeometry G = c.mesh.empty() ? computational_geometry(K, surface_geometry(c.surface), 1) : MeshGeometry(affine_cells(K));
  const MeshQualityReport q = quality_report(K, G);
  json r;
  r["name"] = K.name;
  r["V"] = K.count(0);
  r["E"] = K.count(1);
  r["F"] = K.count(2);
  r["euler"] = K.euler_characteristic();
  r["periodic"] = K.periodic;
  r["h_min"] = q.h_min;
  r["h_max"] = q.h_max;
  r["C_triangle"] = q.C_triangle;
  r["C_sharp"] = q.C_sharp;
  const std::string problem = check_triangulation(K);
  r["triangulation"] = problem.empty() ? "ok" : problem;
  return r;
}

json cmd_betti(const RunConfig& c) {
  const SimplicialComplex K = mesh_of(c);
  const MeshGeometry G = computational_geometry(K, surface_geometry(c.surface), 1);
  json b = json::array();
  for (int k = 0; k <= 2; ++k) {
    FormSpaceSpec s = spec_of(c);
    s.k = k;
    if (!s.valid()) s.r = std::max(s.r, 1);
    b.push_back(harmonic_forms(build_hodge_spaces(K, G, s).problem).betti());
  }
  json r;
  r["betti"] = b;
  r["euler"] = K.euler_characteristic();
  return r;
}

json cmd_solve(const RunConfig& c) {
  const SimplicialComplex K = mesh_of(c);
  const MeshGeometry G = geometry_of(c, K);
  const ManufacturedSolution ms = manufactured_solution(manufactured_surface(c.surface), c.k);
  HodgeSpaces S = build_hodge_spaces(K, G, spec_of(c));
  S.problem.F = assemble_load(K, S.cur, G, ms.f, c.quad_order);
  SolveReport R = solve_hodge_laplace(S.problem);
  if (ms.has_du) {
    const ErrorFunctionals e = error_functionals(K, G, S, ms.u, ms.du);
    R.E = e.E;
    R.E_d = e.E_d;
  }
  json r = json::parse(R.to_json());
  r["geometry"] = geometry_description(c);
  r["l2_error_u"] = l2_error(K, S.cur, G, R.u, ms.u, c.quad_order);
  if (ms.has_du) r["l2_error_du"] = l2_error(K, S.next, G, S.problem.D * R.u, ms.du, c.quad_order);
  if (ms.has_sigma) r["l2_error_sigma"] = l2_error(K, S.prev, G, R.sigma, ms.sigma, c.quad_order);
  r["stability"] = R.stability;
  r["max_harmonic_inner"] = R.max_harmonic_inner;
  return r;
}

json cmd_poincare(const RunConfig& c) {
  const SimplicialComplex K = mesh_of(c);
  const MeshGeometry G = geometry_of(c, K);
  const HodgeSpaces S = build_hodge_spaces(K, G, spec_of(c));
  json r;
  r["dofs"] = S.cur.total;
  r["geometry"] = geometry_description(c);
  if (c.k == 2) throw std::invalid_argument("poincare: d vanishes on top-degree forms; use k < 2");
  r["C_PF"] = poincare_constant(S.problem.D, S.problem.M, S.problem.M_next);
  return r;
}

/// Smoothing parameter for Q on the given spaces: automated search or a fixed value checked against both bounds.
EpsilonSearch select_epsilon(const RunConfig& c, const SimplicialComplex& K, const MeshGeometry& G,
                             const std::vector<DofTable>& tables, const BallRule& rule) {
  const auto fixed = parse_eps(c.eps);
  if (!fixed) return epsilon_search(K, G, tables, rule);
  EpsilonSearch es;
  es.patch = patch_constants(K, G);
  if (!es.patch.constant_h_star) throw std::invalid_argument("the meshsize function must be constant");
  if (*fixed > es.patch.max_epsilon())
    throw ContractViolation("eps = " + c.eps + " violates the patch bound eps C_triangle C_h <= beta (max " +
                            std::to_string(es.patch.max_epsilon()) + ")");
  es.epsilon = *fixed;
  es.rho = *fixed * es.patch.h_star;
  for (const auto& t : tables) {
    es.Q.push_back(quasi_interpolant_matrix(K, t, es.rho, rule));
    const auto n = t.total;
    es.q = std::max(es.q, m_operator_norm(Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(es.Q.back()), assemble_mass(K, t, G)));
  }
  es.trials.push_back({es.epsilon, es.q, es.q <= 0.5 ? "" : "half bound |Id - Q|_M <= 1/2"});
  return es;
}

json trials_json(const EpsilonSearch& es) {
  json t = json::array();
  for (const auto& tr : es.trials) {
    json e;
    e["epsilon"] = tr.epsilon;
    e["q"] = tr.q < 0.0 ? json() : json(tr.q);
    e["rejected"] = tr.rejected;
    t.push_back(e);
  }
  return t;
}

json cmd_mollify_check(const RunConfig& c, bool& ok) {
  require_flat_torus(c);
  const SimplicialComplex K = mesh_of(c);
  const MeshGeometry G(affine_cells(K));
  const Mollifier mu = standard_mollifier(2);
  const BallRule rule = ball_rule(mu);
  const Eigen::Vector2d center(0.5, 0.5);
  const RadiusField phi = bump_field(center, 0.1, 0.3, 0.05, mu, 1.0);

  std::mt19937 rng(static_cast<unsigned>(c.seed));
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double a[6];
  for (double& v : a) v = U(rng);
  const PhysicalSampler u0 = [a](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, a[0] + a[1] * x[0] + a[2] * x[1] + a[3] * x[0] * x[0] + a[4] * x[0] * x[1] + a[5] * x[1] * x[1]);
  };
  const PhysicalSampler u1 = [a](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(a[1] + 2 * a[3] * x[0] + a[4] * x[1], a[2] + a[4] * x[0] + 2 * a[5] * x[1]).eval();
  };
  const PhysicalSampler zero2 = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1).eval(); };

  double identity = 0.0;
  std::uniform_real_distribution<double> P(0.0, 1.0);
  for (int found = 0; found < 200;) {
    const Eigen::VectorXd x = Eigen::Vector2d(P(rng), P(rng));
    if ((x - center).norm() < 0.3) continue;
    ++found;
    identity = std::max(identity, (mollify_at(u0, 0, phi, rule, x) - u0(x)).cwiseAbs().maxCoeff());
    identity = std::max(identity, (mollify_at(u1, 1, phi, rule, x) - u1(x)).cwiseAbs().maxCoeff());
  }
  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j) samples.push_back(Eigen::Vector2d(0.15 + 0.7 * i / 8, 0.15 + 0.7 * j / 8));
  const double residual = std::max(commutation_residual(u0, u1, 0, phi, rule, samples), commutation_residual(u1, zero2, 1, phi, rule, samples));

  json lp = json::object();
  bool lp_ok = true;
  for (double p : {2.0, 0.0})
    for (int k = 0; k <= 1; ++k) {
      const BoundCheck b = lp_bound_check(k == 0 ? u0 : u1, k, phi, rule, center, 0.35, p);
      lp_ok = lp_ok && b.ok();
      json e;
      e["lhs"] = b.lhs;
      e["rhs"] = b.rhs;
      e["slack"] = b.rhs - b.lhs;
      lp[std::string(p == 0.0 ? "p_inf" : "p_2") + "_k" + std::to_string(k)] = e;
    }

  std::vector<DofTable> tables;
  for (const FormSpaceSpec& s : {FormSpaceSpec{Family::Full, 1, 0, 2}, FormSpaceSpec{Family::Trimmed, 1, 1, 2}, FormSpaceSpec{Family::Trimmed, 1, 2, 2}})
    tables.push_back(build_dof_table(K, s));
  const EpsilonSearch es = select_epsilon(c, K, G, tables, rule);
  MollifyReport rep;
  rep.epsilon = es.epsilon;
  rep.L = phi.lipschitz;
  rep.half_bound_ok = es.q <= 0.5;
  rep.commutation_residual = residual;
  if (rep.half_bound_ok)
    for (std::size_t i = 0; i < tables.size(); ++i)
      rep.J_norm = std::max(rep.J_norm, schoberl_inverse(es.Q[i], assemble_mass(K, tables[i], G)).J_norm);

  json r = json::parse(rep.to_json());
  r["L_bound"] = phi.bound;
  r["identity_outside_support"] = identity;
  r["lp_bounds"] = lp;
  r["rho"] = es.rho;
  r["q"] = es.q;
  r["beta"] = es.patch.beta;
  r["trials"] = trials_json(es);
  ok = rep.half_bound_ok && identity == 0.0 && residual <= 1e-4 && lp_ok && rep.J_norm <= 2.0 + 1e-6;
  return r;
}

json cmd_project_check(const RunConfig& c, bool& ok) {
  require_flat_torus(c);
  const SimplicialComplex K = mesh_of(c);
  const MeshGeometry G(affine_cells(K));
  const BallRule rule = ball_rule(standard_mollifier(2));
  const FormSpaceSpec s = spec_of(c);
  std::vector<DofTable> tables{build_dof_table(K, s)};
  if (s.k < 2) tables.push_back(build_dof_table(K, next_space(s)));
  const EpsilonSearch es = select_epsilon(c, K, G, tables, rule);
  if (es.q > 0.5) throw ContractViolation("|Id - Q|_M = " + std::to_string(es.q) + " exceeds 1/2 at eps = " + c.eps);

  std::mt19937 rng(static_cast<unsigned>(c.seed));
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<Eigen::MatrixXd> J;
  double J_norm = 0.0, basis = 0.0, idem = 0.0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const SparseMatrix M = assemble_mass(K, tables[i], G);
    const SchoberlInverse inv = schoberl_inverse(es.Q[i], M);
    J.push_back(inv.J);
    J_norm = std::max(J_norm, inv.J_norm);
    for (int j = 0; j < tables[i].total; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(tables[i].total, j);
      basis = std::max(basis, m_norm(M, e - es.Q[i] * e) / m_norm(M, e));
    }
    Eigen::VectorXd uh(tables[i].total);
    for (auto& v : uh) v = N(rng);
    idem = std::max(idem, m_norm(M, inv.J * (es.Q[i] * uh) - uh));
  }
  json r;
  r["epsilon"] = es.epsilon;
  r["rho"] = es.rho;
  r["q"] = es.q;
  r["half_bound_basis"] = basis;
  r["J_norm"] = J_norm;
  r["idempotence"] = idem;
  ok = es.q <= 0.5 && basis <= 0.5 && J_norm <= 2.0 + 1e-6 && idem <= 1e-8;
  if (s.k < 2) {
    const ManufacturedSolution ms = manufactured_solution("flat-torus", s.k);
    const int order = c.quad_order < 0 ? 12 : c.quad_order;
    const Eigen::VectorXd pu = smoothed_projection(K, G, tables[0], J[0], ms.u, es.rho, rule, order);
    const Eigen::VectorXd pdu = smoothed_projection(K, G, tables[1], J[1], ms.du, es.rho, rule, order);
    const double comm = (assemble_exterior_derivative(K, tables[0], tables[1]) * pu - pdu).cwiseAbs().maxCoeff();
    r["commutation"] = comm;
    ok = ok && comm <= 1e-6;
  }
  r["trials"] = trials_json(es);
  return r;
}

json cmd_geom_error(const RunConfig& c) {
  const auto surface = surface_geometry(c.surface);
  if (!surface) throw std::invalid_argument("geom-error needs a curved surface");
  const SimplicialComplex K = mesh_of(c);
  const FormSpaceSpec s = spec_of(c);
  const MeshGeometry Ge = exact_geometry(K, surface, c.geom_degree), Gc = computational_geometry(K, surface, c.geom_degree);
  const HodgeSpaces Se = build_hodge_spaces(K, Ge, s), Sc = build_hodge_spaces(K, Gc, s);
  const GeometryPair pair{Se.problem.M, Sc.problem.M};
  // The sphere loads are ambient forms, so they serve as non-harmonic loads on any curved surface.
  const Eigen::VectorXd f = global_interpolate(K, Ge, Se.cur, manufactured_solution("sphere", s.k).f);
  const CrimeGap gap = crime_gap(Se.problem, Sc.problem, f);
  json r;
  r["dofs"] = Se.cur.total;
  r["geometry"] = "exact vs computational degree-" + std::to_string(c.geom_degree);
  r["geometric_error"] = geometric_error_norm(pair);
  const double ca = operator_norm_CA(pair);
  r["C_A"] = ca;
  r["crime_gap"] = gap.gap;
  r["f_norm"] = gap.f_norm;
  r["crime_constant"] = gap.constant();
  if (s.k < 2 && Se.cur.total <= 3000) {
    const double exact_pf = poincare_constant(Se.problem.D, Se.problem.M, Se.problem.M_next);
    const double comp_pf = poincare_constant(Sc.problem.D, Sc.problem.M, Sc.problem.M_next);
    r["C_PF_exact"] = exact_pf;
    r["C_PF_computational"] = comp_pf;
    r["C_PF_bound"] = ca * ca * comp_pf;
  }
  return r;
}

json cmd_converge(const RunConfig& c) {
  StudyConfig sc;
  sc.surface = c.surface;
  sc.spec = spec_of(c);
  sc.geom_degree = c.geom_degree;
  sc.exact_geometry = c.geometry == "exact";
  std::tie(sc.level_min, sc.level_max) = parse_levels(c.levels);
  sc.quad_order = c.quad_order;
  const Study study = convergence_study(sc);

  std::string dir = c.csv_dir, stem;
  if (dir.empty() && !c.out.empty()) {
    const std::filesystem::path p(c.out);
    dir = p.parent_path().empty() ? "." : p.parent_path().string();
    stem = p.stem().string() + "_";
  }
  json r = json::parse(study.to_json());
  r["geometry_description"] = geometry_description(c);
  if (!dir.empty()) {
    json files = json::array();
    for (const auto& t : study.tables) {
      const std::string path = (std::filesystem::path(dir) / (stem + t.name + ".csv")).string();
      std::ofstream os(path);
      if (!os) throw std::ios_base::failure("cannot write '" + path + "'");
      os << t.to_csv();
      files.push_back(path);
    }
    r["csv"] = files;
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["surface"] = surface;
  j["level"] = level;
  j["m"] = m;
  j["k"] = k;
  j["family"] = family;
  j["r"] = r;
  j["geom_degree"] = geom_degree;
  j["geometry"] = geometry;
  j["eps"] = eps;
  j["quad_order"] = quad_order;
  j["levels"] = levels;
  j["out"] = out;
  j["csv_dir"] = csv_dir;
  j["mesh"] = mesh;
  j["seed"] = seed;
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  c.command = j.at("command").get<std::string>();
  c.surface = j.at("surface").get<std::string>();
  c.level = j.at("level").get<int>();
  c.m = j.at("m").get<int>();
  c.k = j.at("k").get<int>();
  c.family = j.at("family").get<std::string>();
  c.r = j.at("r").get<int>();
  c.geom_degree = j.at("geom_degree").get<int>();
  c.geometry = j.at("geometry").get<std::string>();
  c.eps = j.at("eps").get<std::string>();
  c.quad_order = j.at("quad_order").get<int>();
  c.levels = j.at("levels").get<std::string>();
  c.out = j.at("out").get<std::string>();
  c.csv_dir = j.at("csv_dir").get<std::string>();
  c.mesh = j.at("mesh").get<std::string>();
  c.seed = j.at("seed").get<int>();
  return c;
}

std::string version() { return MFEEC_GIT_DESCRIBE; }

void emit_report(const RunConfig& config, const std::string& results_json, const std::string& path, std::ostream& out) {
  const json results = results_json.empty() ? json() : json::parse(results_json);
  if (!results.is_object() || results.empty()) throw std::logic_error("emit_report: refusing to write a report without results");
  json doc;
  doc["version"] = version();
  doc["command"] = config.command;
  doc["config"] = json::parse(config.to_json());
  doc["results"] = results;
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::ios_base::failure("cannot write report to '" + path + "'");
  os << text;
  if (!os) throw std::ios_base::failure("cannot write report to '" + path + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Finite element exterior calculus on surfaces: meshes, Hodge-Laplace solves, smoothing checks, convergence studies",
               "mfeec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  const std::vector<std::string> surfaces = {"sphere", "torus", "flat-torus", "cubed-sphere"};
  auto add_mesh_flags = [&](CLI::App* s) {
    s->add_option("--surface", cfg.surface, "Surface")->check(CLI::IsMember(surfaces));
    s->add_option("--level", cfg.level, "Sphere refinement level");
    s->add_option("--m", cfg.m, "Subdivisions per direction (tori, cubed sphere)");
  };
  auto add_space_flags = [&](CLI::App* s) {
    s->add_option("--k", cfg.k, "Form degree");
    s->add_option("--family", cfg.family, "Polynomial family")->check(CLI::IsMember({"full", "trimmed"}));
    s->add_option("--r", cfg.r, "Polynomial degree");
  };
  auto add_geometry_flags = [&](CLI::App* s) {
    s->add_option("--geom-degree", cfg.geom_degree, "Degree l of the geometry lift");
    s->add_option("--geometry", cfg.geometry, "Metric used by the solve")->check(CLI::IsMember({"exact", "computational"}));
    s->add_option("--quad-order", cfg.quad_order, "Load and error quadrature order (-1: module default)");
  };
  auto add_out = [&](CLI::App* s) {
    s->add_option("--out", cfg.out, "Output path (empty: standard output)");
    s->add_option("--seed", cfg.seed, "Random seed");
  };
  auto add_eps = [&](CLI::App* s) {
    s->add_option("--eps", cfg.eps, "Smoothing parameter: auto (search 0.2, 0.1, ...) or a number");
  };

  CLI::App* mesh = app.add_subcommand("mesh", "Mesh generation and statistics");
  mesh->require_subcommand(1);
  CLI::App* gen = mesh->add_subcommand("gen", "Write a generated mesh (MFEEC-MESH format)");
  add_mesh_flags(gen);
  add_out(gen);
  CLI::App* info = mesh->add_subcommand("info", "Counts, Euler characteristic and quality of a mesh");
  add_mesh_flags(info);
  info->add_option("--mesh", cfg.mesh, "Read this mesh file instead of generating one");
  add_out(info);

  CLI::App* betti = app.add_subcommand("betti", "Dimensions of the discrete harmonic forms for k = 0, 1, 2");
  add_mesh_flags(betti);
  add_space_flags(betti);
  add_out(betti);

  CLI::App* solve = app.add_subcommand("solve", "Mixed Hodge-Laplace solve of a manufactured problem");
  add_mesh_flags(solve);
  add_space_flags(solve);
  add_geometry_flags(solve);
  add_out(solve);

  CLI::App* poincare = app.add_subcommand("poincare", "Discrete Poincare constant");
  add_mesh_flags(poincare);
  add_space_flags(poincare);
  add_geometry_flags(poincare);
  add_out(poincare);

  CLI::App* moll = app.add_subcommand("mollify-check", "Mollification properties and the smoothed interpolant on the flat torus");
  add_mesh_flags(moll);
  add_eps(moll);
  add_out(moll);

  CLI::App* proj = app.add_subcommand("project-check", "Smoothed projection: bounds, idempotence, commutation on the flat torus");
  add_mesh_flags(proj);
  add_space_flags(proj);
  add_eps(proj);
  proj->add_option("--quad-order", cfg.quad_order, "Interpolation quadrature order for smooth samplers (-1: 12)");
  add_out(proj);

  CLI::App* geom = app.add_subcommand("geom-error", "Geometric error norm, C_A and the variational crime gap");
  add_mesh_flags(geom);
  add_space_flags(geom);
  geom->add_option("--geom-degree", cfg.geom_degree, "Degree l of the geometry lift");
  add_out(geom);

  CLI::App* conv = app.add_subcommand("converge", "Convergence study over refinement levels");
  add_mesh_flags(conv);
  add_space_flags(conv);
  add_geometry_flags(conv);
  conv->add_option("--levels", cfg.levels, "Refinement levels a:b");
  conv->add_option("--csv", cfg.csv_dir, "Directory for CSV rate tables (default: next to --out)");
  add_out(conv);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help arrives here as well.
    if (e.get_exit_code() == 0) {
      out << e.what();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  for (CLI::App* s : {gen, info})
    if (s->parsed()) cfg.command = "mesh " + s->get_name();
  for (CLI::App* s : {betti, solve, poincare, moll, proj, geom, conv})
    if (s->parsed()) cfg.command = s->get_name();

  try {
    validate(cfg);
    bool ok = true;
    json results;
    if (gen->parsed()) {
      const SimplicialComplex K = mesh_of(cfg);
      if (cfg.out.empty()) {
        write_mesh(out, K);
      } else {
        std::ofstream os(cfg.out);
        if (!os) throw std::ios_base::failure("cannot write mesh to '" + cfg.out + "'");
        write_mesh(os, K);
      }
      return 0;
    }
    if (info->parsed()) results = cmd_mesh_info(cfg);
    if (betti->parsed()) results = cmd_betti(cfg);
    if (solve->parsed()) results = cmd_solve(cfg);
    if (poincare->parsed()) results = cmd_poincare(cfg);
    if (moll->parsed()) results = cmd_mollify_check(cfg, ok);
    if (proj->parsed()) results = cmd_project_check(cfg, ok);
    if (geom->parsed()) results = cmd_geom_error(cfg);
    if (conv->parsed()) results = cmd_converge(cfg);
    if (solve->parsed()) {
      for (const auto& v : results["residuals"]) ok = ok && v.get<double>() <= 1e-8;
    }
    results["contracts_ok"] = ok;
    emit_report(cfg, results.dump(), cfg.out, out);
    if (!ok) err << "error: a numerical contract is violated (see the report)\n";
    return ok ? 0 : 1;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mfeec::cli
