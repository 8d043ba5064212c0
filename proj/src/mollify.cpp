#include "mfeec/mollify.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace mfeec {

namespace {

constexpr double kPi = std::numbers::pi;

double unit_ball_volume(int n) { return n == 1 ? 2.0 : kPi; }

/// Gauss-Legendre rule mapped to [a, b].
void gauss_on(int n, double a, double b, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  gauss_legendre_01(n, x, w);
  x = (a + (b - a) * x.array()).matrix();
  w *= (b - a);
}

/// Polar Gauss rule on the disk B_r(c): points 2 x N and weights (area element included).
void disk_rule(const Eigen::Vector2d& c, double r, int nr, int nt, Eigen::MatrixXd& pts, Eigen::VectorXd& wts) {
  Eigen::VectorXd xr, wr, xt, wt;
  gauss_on(nr, 0.0, r, xr, wr);
  gauss_on(nt, 0.0, 2 * kPi, xt, wt);
  pts.resize(2, nr * nt);
  wts.resize(nr * nt);
  int q = 0;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nt; ++j, ++q) {
      pts.col(q) = c + xr[i] * Eigen::Vector2d(std::cos(xt[j]), std::sin(xt[j]));
      wts[q] = wr[i] * wt[j] * xr[i];
    }
}

double lp_norm(const std::vector<double>& values, const Eigen::VectorXd& w, double p) {
  if (p == 0.0) return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += w[static_cast<Eigen::Index>(i)] * std::pow(values[i], p);
  return std::pow(s, 1.0 / p);
}


/// Supremum of f over the closed disk: grid samples refined by a compass search from the best few.
double disk_sup(const std::function<double(const Eigen::Vector2d&)>& f, const Eigen::MatrixXd& pts, const Eigen::Vector2d& c, double r) {
  std::vector<std::pair<double, int>> vals;
  for (int q = 0; q < pts.cols(); ++q) vals.emplace_back(f(pts.col(q)), q);
  const std::size_t starts = std::min<std::size_t>(6, vals.size());
  std::partial_sort(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(starts), vals.end(), std::greater<>());
  double best = vals.empty() ? 0.0 : vals.front().first;
  const auto inside = [&](const Eigen::Vector2d& x) { return (x - c).norm() <= r; };
  for (std::size_t s = 0; s < starts; ++s) {
    Eigen::Vector2d x = pts.col(vals[s].second);
    double fx = vals[s].first;
    for (double step = 0.05 * r; step > 1e-9 * r;) {
      bool moved = false;
      for (const Eigen::Vector2d& d : {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0), Eigen::Vector2d(0, 1), Eigen::Vector2d(0, -1)}) {
        const Eigen::Vector2d y = x + step * d;
        if (!inside(y)) continue;
        const double fy = f(y);
        if (fy > fx) x = y, fx = fy, moved = true;
      }
      if (!moved) step *= 0.5;
    }
    best = std::max(best, fx);
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mollifier and ball rule

double Mollifier::radial(double r) const {
  if (r >= 1.0) return 0.0;
  return c * std::exp(1.0 / (r * r - 1.0));
}

double Mollifier::max_gradient() const {
  auto g = [this](double r) {
    const double s = r * r - 1.0;
    return std::abs(radial(r) * 2.0 * r / (s * s));
  };
  double best = 0.0, arg = 0.0;
  for (int i = 1; i < 4000; ++i) {
    const double r = i / 4000.0;
    if (g(r) > best) best = g(r), arg = r;
  }
  double lo = std::max(0.0, arg - 1.0 / 4000), hi = std::min(1.0, arg + 1.0 / 4000);
  for (int it = 0; it < 100; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (g(m1) < g(m2))
      lo = m1;
    else
      hi = m2;
  }
  return std::max(best, g(0.5 * (lo + hi)));
}

Mollifier standard_mollifier(int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("standard_mollifier: n must be 1 or 2");
  Eigen::VectorXd x, w;
  gauss_legendre_01(200, x, w);
  double integral = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double e = std::exp(1.0 / (x[i] * x[i] - 1.0));
    integral += w[i] * (n == 1 ? 2.0 * e : 2 * kPi * x[i] * e);
  }
  return Mollifier{n, 1.0 / integral};
}

BallRule ball_rule(const Mollifier& mu, int nr, int nt) {
  BallRule b;
  b.n = mu.n;
  if (mu.n == 1) {
    Eigen::VectorXd x, w;
    gauss_on(nr, -1.0, 1.0, x, w);
    b.points = x.transpose();
    b.weights.resize(nr);
    for (int i = 0; i < nr; ++i) b.weights[i] = w[i] * mu.radial(std::abs(x[i]));
  } else {
    disk_rule(Eigen::Vector2d::Zero(), 1.0, nr, nt, b.points, b.weights);
    for (int q = 0; q < b.size(); ++q) b.weights[q] *= mu(b.points.col(q));
  }
  b.weights /= b.weights.sum();
  return b;
}

// ---------------------------------------------------------------------------
// Radius fields

RadiusField constant_radius(double epsilon, int n) {
  RadiusField f;
  f.value = [epsilon](const Eigen::VectorXd&) { return epsilon; };
  f.gradient = [n](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(n); };
  f.epsilon = epsilon;
  f.support = "everywhere";
  return f;
}

namespace {

/// Profile of the indicator of B_s(0) convolved with mu_rho, as a function of the distance d, and its derivative.
struct BumpProfile {
  double s = 0.0, rho = 0.0;
  Mollifier mu;
  Eigen::VectorXd gx, gw;  // Gauss rule on [0, 1]

  double mu_rho(double t) const { return mu.radial(t / rho) / (rho * rho); }

  /// kappa(t) = cos of the half-angle of the arc of the circle of radius t around x inside B_s.
  double kappa(double d, double t) const { return (s * s - d * d - t * t) / (2 * d * t); }

  std::pair<double, double> operator()(double d) const {
    if (d + rho <= s) return {1.0, 0.0};
    if (d - rho >= s) return {0.0, 0.0};
    const double ta = std::abs(s - d);
    double value = 0.0, deriv = 0.0;
    if (d < s) {
      for (Eigen::Index i = 0; i < gx.size(); ++i) {
        const double t = ta * gx[i];
        value += gw[i] * ta * 2 * kPi * mu_rho(t) * t;
      }
    }
    // t = ta + (rho - ta) v^2 removes the square-root behavior of the arc length at t = ta.
    const double len = rho - ta;
    for (Eigen::Index i = 0; i < gx.size(); ++i) {
      const double v = gx[i];
      const double t = ta + len * v * v;
      const double jac = 2 * len * v * gw[i];
      const double kap = std::clamp(kappa(d, t), -1.0, 1.0);
      const double weight = mu_rho(t) * t * jac;
      value += weight * (2 * kPi - 2 * std::acos(kap));
      const double one_minus = (1 - kap) * (1 + kap);
      if (one_minus > 0.0) {
        const double kd = -(d * d + s * s - t * t) / (2 * d * d * t);
        deriv += weight * 2 * kd / std::sqrt(one_minus);
      }
    }
    return {value, deriv};
  }
};

Eigen::Vector2d periodic_displacement(const Eigen::VectorXd& x, const Eigen::Vector2d& c, double period) {
  Eigen::Vector2d w = x.head<2>() - c;
  if (period > 0.0)
    for (int i = 0; i < 2; ++i) w[i] -= period * std::round(w[i] / period);
  return w;
}

}  // namespace

RadiusField bump_field(const Eigen::Vector2d& center, double a, double b, double epsilon, const Mollifier& mu, double period) {
  if (!(a >= 0.0 && a < b)) throw std::invalid_argument("bump_field: the inner disk must lie inside the outer disk");
  if (period > 0.0 && b >= period / 2) throw std::invalid_argument("bump_field: outer disk wraps around the period cell");
  if (mu.n != 2) throw std::invalid_argument("bump_field: planar mollifier required");
  auto prof = std::make_shared<BumpProfile>();
  prof->s = 0.5 * (a + b);
  prof->rho = 0.5 * (b - a);
  prof->mu = mu;
  gauss_legendre_01(64, prof->gx, prof->gw);

  RadiusField f;
  f.value = [prof, center, epsilon, period](const Eigen::VectorXd& x) {
    return epsilon * (*prof)(periodic_displacement(x, center, period).norm()).first;
  };
  f.gradient = [prof, center, epsilon, period](const Eigen::VectorXd& x) {
    const Eigen::Vector2d w = periodic_displacement(x, center, period);
    const double d = w.norm();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    if (d > 0.0) g = epsilon * (*prof)(d).second * w / d;
    return g;
  };
  f.epsilon = epsilon;
  double L = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double d = prof->s - prof->rho + (2 * prof->rho) * i / 2000.0;
    L = std::max(L, epsilon * std::abs((*prof)(d).second));
  }
  f.lipschitz = L;
  f.bound = 3.0 * (epsilon / ((b - a) / 4)) * mu.max_gradient();
  f.support = "disk of radius " + std::to_string(b);
  return f;
}

// ---------------------------------------------------------------------------
// Pointwise mollification

Eigen::VectorXd mollify_at(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                           const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double r = phi.value(x);
  if (r == 0.0) return u(x);
  const Eigen::VectorXd g = phi.gradient(x);
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd acc;
  for (int q = 0; q < rule.size(); ++q) {
    const Eigen::VectorXd y = rule.points.col(q);
    const Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) + y * g.transpose();
    const Eigen::VectorXd v = pullback_value(u(x + r * y), k, J);
    if (q == 0)
      acc = rule.weights[q] * v;
    else
      acc += rule.weights[q] * v;
  }
  return acc;
}

Eigen::VectorXd finite_difference_d(const PhysicalSampler& u, int k, const Eigen::Ref<const Eigen::VectorXd>& x, double h) {
  const int n = static_cast<int>(x.size());
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    partial[static_cast<std::size_t>(i)] = (u(xp) - u(xm)) / (2 * h);
  }
  const auto tau = sigma_set(k + 1, n);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tau.size()));
  for (std::size_t t = 0; t < tau.size(); ++t)
    for (int j = 0; j <= k; ++j) {
      AscendingIndex rest = tau[t];
      const int i = rest[static_cast<std::size_t>(j)];
      rest.erase(rest.begin() + j);
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      out[static_cast<Eigen::Index>(t)] += sign * partial[static_cast<std::size_t>(i)][sigma_position(rest, n)];
    }
  return out;
}

double commutation_residual(const PhysicalSampler& u, const PhysicalSampler& du, int k, const RadiusField& phi,
                            const BallRule& rule, const std::vector<Eigen::VectorXd>& samples) {
  const PhysicalSampler Ru = [&](const Eigen::VectorXd& x) { return mollify_at(u, k, phi, rule, x); };
  double worst = 0.0;
  for (const auto& x : samples) {
    const Eigen::VectorXd lhs = finite_difference_d(Ru, k, x);
    const Eigen::VectorXd rhs = mollify_at(du, k + 1, phi, rule, x);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

BoundCheck lp_bound_check(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                          const Eigen::Vector2d& center, double radius, double p) {
  BoundCheck out;
  Eigen::MatrixXd pts;
  Eigen::VectorXd w;
  disk_rule(center, radius, 40, 80, pts, w);
  for (int q = 0; q < pts.cols(); ++q) out.L = std::max(out.L, phi.gradient(pts.col(q)).norm());
  out.L = std::max(out.L, phi.gradient(center).norm());
  if (out.L >= 1.0) throw std::invalid_argument("lp_bound_check: |grad phi| must stay below 1 on the set");

  const auto R_abs = [&](const Eigen::Vector2d& x) { return mollify_at(u, k, phi, rule, x).norm(); };
  const auto u_abs = [&](const Eigen::Vector2d& x) { return u(x).norm(); };
  const double outer = radius + phi.epsilon;
  std::vector<double> vals;
  disk_rule(center, radius, 32, 64, pts, w);
  if (p == 0.0) {
    out.lhs = disk_sup(R_abs, pts, center, radius);
  } else {
    for (int q = 0; q < pts.cols(); ++q) vals.push_back(R_abs(pts.col(q)));
    out.lhs = lp_norm(vals, w, p);
  }

  vals.clear();
  disk_rule(center, outer, 48, 96, pts, w);
  const double n = 2.0;
  const double factor = std::pow(1 + out.L, k) * (p == 0.0 ? 1.0 : std::pow(1 - out.L, -n / p));
  if (p == 0.0) {
    out.rhs = factor * disk_sup(u_abs, pts, center, outer);
  } else {
    for (int q = 0; q < pts.cols(); ++q) vals.push_back(u_abs(pts.col(q)));
    out.rhs = factor * lp_norm(vals, w, p);
  }
  return out;
}

BoundCheck pointwise_bound_check(const PhysicalSampler& u, int k, const RadiusField& phi, const BallRule& rule,
                                 const Mollifier& mu, const Eigen::Ref<const Eigen::VectorXd>& x, double p) {
  const double r = phi.value(x);
  if (!(r > 0.0)) throw std::invalid_argument("pointwise_bound_check: phi(x) must be positive");
  const int n = mu.n;
  if (n != 2) throw std::invalid_argument("pointwise_bound_check: planar case only");
  BoundCheck out;
  out.L = phi.gradient(x).norm();
  out.lhs = mollify_at(u, k, phi, rule, x).norm();
  Eigen::MatrixXd pts;
  Eigen::VectorXd w;
  disk_rule(x.head<2>(), r, 32, 64, pts, w);
  std::vector<double> vals;
  for (int q = 0; q < pts.cols(); ++q) vals.push_back(u(pts.col(q)).norm());
  if (p == 0.0) vals.push_back(disk_sup([&](const Eigen::Vector2d& y) { return u(y).norm(); }, pts, x.head<2>(), r));
  const double vol = unit_ball_volume(n);
  const double factor = (p == 0.0 ? vol : std::pow(vol, (p - 1) / p)) * mu.radial(0.0) * std::pow(1 + out.L, k) *
                        (p == 0.0 ? 1.0 : std::pow(r, -n / p));
  out.rhs = factor * lp_norm(vals, w, p);
  return out;
}

// ---------------------------------------------------------------------------
// Patch constants

namespace {

/// Cell coordinates translated by whole periods so that the centroid is closest to `near`.
Eigen::MatrixXd placed_cell(const SimplicialComplex& K, int c, const Eigen::Vector2d& near) {
  Eigen::MatrixXd X = K.cell_coordinates(c);
  if (K.periodic) {
    const Eigen::Vector2d centroid = X.rowwise().mean();
    for (int i = 0; i < 2; ++i) {
      const double p = K.period[i];
      if (p > 0.0) X.row(i).array() += p * std::round((near[i] - centroid[i]) / p);
    }
  }
  return X;
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

bool point_in_triangle(const Eigen::Vector2d& p, const Eigen::MatrixXd& X, double tol) {
  Eigen::Matrix2d A;
  A << X.col(1) - X.col(0), X.col(2) - X.col(0);
  const Eigen::Vector2d t = A.inverse() * (p - X.col(0));
  return t[0] >= -tol && t[1] >= -tol && t[0] + t[1] <= 1 + tol;
}

/// Cells sharing a vertex with cell c, placed next to it.
std::vector<std::pair<int, Eigen::MatrixXd>> vertex_patch(const SimplicialComplex& K, int c) {
  const Eigen::Vector2d centroid = K.cell_coordinates(c).rowwise().mean();
  std::vector<int> ids;
  for (const auto& ref : K.cells[static_cast<std::size_t>(c)])
    for (int t : K.vertex_cells(ref.v)) ids.push_back(t);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<std::pair<int, Eigen::MatrixXd>> out;
  for (int t : ids) out.emplace_back(t, placed_cell(K, t, centroid));
  return out;
}

}  // namespace

PatchConstants patch_constants(const SimplicialComplex& K, const MeshGeometry& G) {
  if (K.ambient_dim != 2 || K.dim != 2) throw std::invalid_argument("patch_constants: planar meshes only");
  const MeshQualityReport qr = quality_report(K, G);
  PatchConstants pc;
  pc.C_triangle = qr.C_triangle;
  double hmin = 1e300, hmax = 0.0;
  pc.C_h = 0.0;
  const Eigen::Vector2d corners[3] = {{0, 0}, {1, 0}, {0, 1}};
  for (int c = 0; c < K.num_cells(); ++c)
    for (const auto& t : corners) {
      const double h = qr.h_star(K, c, t);
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
      pc.C_h = std::max(pc.C_h, h / qr.h_T[static_cast<std::size_t>(c)]);
    }
  pc.h_star = hmax;
  pc.constant_h_star = hmax - hmin <= 1e-12 * hmax;

  pc.beta = 1e300;
  for (int c = 0; c < K.num_cells(); ++c) {
    const auto patch = vertex_patch(K, c);
    // Boundary edges of the patch appear in exactly one placed cell.
    std::map<std::pair<std::pair<long long, long long>, std::pair<long long, long long>>, std::pair<int, std::pair<Eigen::Vector2d, Eigen::Vector2d>>> edges;
    auto key = [](const Eigen::Vector2d& p) { return std::pair(std::llround(p[0] * 1e9), std::llround(p[1] * 1e9)); };
    for (const auto& [id, X] : patch)
      for (int e = 0; e < 3; ++e) {
        const Eigen::Vector2d a = X.col(e), b = X.col((e + 1) % 3);
        auto ka = key(a), kb = key(b);
        if (kb < ka) std::swap(ka, kb);
        auto& slot = edges[{ka, kb}];
        slot.first += 1;
        slot.second = {a, b};
      }
    const Eigen::MatrixXd T = K.cell_coordinates(c);
    double dist = 1e300;
    for (const auto& [k, v] : edges) {
      if (v.first != 1) continue;
      const auto& [a, b] = v.second;
      for (int i = 0; i < 3; ++i) dist = std::min(dist, point_segment_distance(T.col(i), a, b));
      for (int i = 0; i < 3; ++i) {
        dist = std::min(dist, point_segment_distance(a, T.col(i), T.col((i + 1) % 3)));
        dist = std::min(dist, point_segment_distance(b, T.col(i), T.col((i + 1) % 3)));
      }
      if (point_in_triangle(a, T, 0.0) || point_in_triangle(b, T, 0.0)) dist = 0.0;
    }
    pc.beta = std::min(pc.beta, dist / qr.h_T[static_cast<std::size_t>(c)]);
  }
  return pc;
}

// ---------------------------------------------------------------------------
// Quasi-interpolant

namespace {

struct PlacedCell {
  int id = 0;
  Eigen::MatrixXd X;  // 2 x 3
  Eigen::Matrix2d A, Ainv;
};

/// Sutherland-Hodgman clipping of a polygon against a counterclockwise triangle.
std::vector<Eigen::Vector2d> clip(std::vector<Eigen::Vector2d> poly, const Eigen::MatrixXd& T) {
  for (int e = 0; e < 3 && !poly.empty(); ++e) {
    const Eigen::Vector2d a = T.col(e), b = T.col((e + 1) % 3);
    auto side = [&](const Eigen::Vector2d& p) { return (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x(); };
    std::vector<Eigen::Vector2d> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Eigen::Vector2d& p = poly[i];
      const Eigen::Vector2d& q = poly[(i + 1) % poly.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) out.push_back(p + (sp / (sp - sq)) * (q - p));
    }
    poly = std::move(out);
  }
  return poly;
}

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

int locate_in(const std::vector<PlacedCell>& cells, const Eigen::Vector2d& z) {
  int best = -1;
  double best_margin = -1e300;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Eigen::Vector2d t = cells[i].Ainv * (z - cells[i].X.col(0));
    const double margin = std::min({t[0], t[1], 1 - t[0] - t[1]});
    if (margin > best_margin) best_margin = margin, best = static_cast<int>(i);
  }
  return best_margin >= -1e-10 ? best : -1;
}

}  // namespace

SparseMatrix quasi_interpolant_matrix(const SimplicialComplex& K, const DofTable& table, double rho, const BallRule& rule) {
  if (K.ambient_dim != 2 || K.dim != 2 || rule.n != 2) throw std::invalid_argument("quasi_interpolant_matrix: planar meshes only");
  const int k = table.spec.k;
  const int order = 2 * table.spec.r + 2;
  const QuadratureRule q1 = quadrature_rule_unchecked(1, order), q2 = quadrature_rule_unchecked(2, order);
  const std::string escape = "quasi_interpolant_matrix: translated face leaves its vertex patch (eps C_triangle C_h <= beta violated)";

  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < table.total; ++i) {
    const auto [c, j] = table.owner[static_cast<std::size_t>(i)];
    const LocalElement& el = table.element(c);
    const DofFunctional& f = el.functionals()[static_cast<std::size_t>(j)];
    const int fd = static_cast<int>(f.face.size()) - 1;
    const Eigen::MatrixXd Xc = K.cell_coordinates(c);
    Eigen::Matrix2d Ac;
    Ac << Xc.col(1) - Xc.col(0), Xc.col(2) - Xc.col(0);
    const AffineMap emb = simplex_embedding(2, f.face);
    const Eigen::Vector2d x0 = Xc.col(0) + Ac * emb.offset;
    const Eigen::MatrixXd P = Ac * emb.matrix;  // 2 x fd

    std::vector<PlacedCell> cells;
    for (auto& [id, X] : vertex_patch(K, c)) {
      PlacedCell pc;
      pc.id = id;
      pc.X = X;
      pc.A << X.col(1) - X.col(0), X.col(2) - X.col(0);
      pc.Ainv = pc.A.inverse();
      cells.push_back(std::move(pc));
    }

    std::map<int, double> row;
    // Adds w * N_i(phi_jj of cell `cell`) at face parameter t for the shift s.
    auto accumulate = [&](int cell, const Eigen::VectorXd& t, double w, const Eigen::Vector2d& s) {
      const PlacedCell& pc = cells[static_cast<std::size_t>(cell)];
      const Eigen::Vector2d z = x0 + s + (fd > 0 ? Eigen::Vector2d(P * t) : Eigen::Vector2d::Zero());
      const Eigen::Vector2d tau = pc.Ainv * (z - pc.X.col(0));
      const LocalElement& et = table.element(pc.id);
      const Eigen::MatrixXd vals = et.evaluate(tau);
      const auto& dofs = table.cell_dofs[static_cast<std::size_t>(pc.id)];
      const Eigen::VectorXd wt = f.weight(t);
      for (int jj = 0; jj < et.size(); ++jj) {
        const Eigen::VectorXd phys = pullback_value(vals.col(jj), k, pc.Ainv);
        double v;
        if (fd == 0)
          v = phys[0] * wt[0];
        else
          v = wedge_top(pullback_value(phys, k, P), k, wt, fd);
        row[dofs[static_cast<std::size_t>(jj)]] += w * v;
      }
    };

    for (int qy = 0; qy < rule.size(); ++qy) {
      const Eigen::Vector2d s = rho * rule.points.col(qy);
      const double wy = rule.weights[qy];
      double measure = 0.0;
      if (fd == 0) {
        const int cell = locate_in(cells, x0 + s);
        if (cell < 0) throw std::domain_error(escape);
        accumulate(cell, Eigen::VectorXd::Zero(0), wy, s);
        measure = 1.0;
      } else if (fd == 1) {
        const Eigen::Vector2d a = x0 + s, dir = P.col(0);
        std::vector<double> cuts = {0.0, 1.0};
        for (const auto& pc : cells)
          for (int e = 0; e < 3; ++e) {
            const Eigen::Vector2d p = pc.X.col(e), r = pc.X.col((e + 1) % 3) - p;
            const double den = cross(dir, r);
            if (std::abs(den) < 1e-14 * dir.norm() * r.norm()) continue;
            const double t = cross(p - a, r) / den, u = cross(p - a, dir) / den;
            if (t > 0.0 && t < 1.0 && u >= -1e-12 && u <= 1 + 1e-12) cuts.push_back(t);
          }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t m = 0; m + 1 < cuts.size(); ++m) {
          const double ta = cuts[m], tb = cuts[m + 1];
          if (tb - ta < 1e-14) continue;
          const int cell = locate_in(cells, a + 0.5 * (ta + tb) * dir);
          if (cell < 0) throw std::domain_error(escape);
          measure += tb - ta;
          for (int g = 0; g < q1.size(); ++g)
            accumulate(cell, Eigen::VectorXd::Constant(1, ta + (tb - ta) * q1.points(0, g)), wy * q1.weights[g] * (tb - ta), s);
        }
      } else {
        const Eigen::Matrix2d Pm = P;
        const Eigen::Matrix2d Pinv = Pm.inverse();
        const std::vector<Eigen::Vector2d> tri = {x0 + s, x0 + s + Pm.col(0), x0 + s + Pm.col(1)};
        for (std::size_t cell = 0; cell < cells.size(); ++cell) {
          const auto poly = clip(tri, cells[cell].X);
          if (poly.size() < 3) continue;
          for (std::size_t m = 1; m + 1 < poly.size(); ++m) {
            const Eigen::Vector2d t0 = Pinv * (poly[0] - x0 - s), t1 = Pinv * (poly[m] - x0 - s), t2 = Pinv * (poly[m + 1] - x0 - s);
            Eigen::Matrix2d B;
            B << t1 - t0, t2 - t0;
            const double det = std::abs(B.determinant());
            if (det < 1e-15) continue;
            measure += 0.5 * det;
            for (int g = 0; g < q2.size(); ++g)
              accumulate(static_cast<int>(cell), Eigen::VectorXd(t0 + B * q2.points.col(g)), wy * q2.weights[g] * det, s);
          }
        }
        measure *= 2.0;
      }
      if (std::abs(measure - 1.0) > 1e-9) throw std::domain_error(escape);
    }
    for (const auto& [col, v] : row)
      if (v != 0.0) trips.emplace_back(i, col, v);
  }
  SparseMatrix Q(table.total, table.total);
  Q.setFromTriplets(trips.begin(), trips.end());
  return Q;
}

double m_operator_norm(const Eigen::MatrixXd& A, const SparseMatrix& M) {
  const Eigen::MatrixXd Md = Eigen::MatrixXd(M);
  const Eigen::MatrixXd B = A.transpose() * Md * A;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (B + B.transpose()), 0.5 * (Md + Md.transpose()),
                                                               Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

SchoberlInverse schoberl_inverse(const SparseMatrix& Q, const SparseMatrix& M) {
  const auto n = Q.rows();
  const Eigen::MatrixXd E = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(Q);
  SchoberlInverse out;
  out.q = m_operator_norm(E, M);
  if (out.q > 0.5 + 1e-12)
    throw std::domain_error("schoberl_inverse: |Id - Q|_M = " + std::to_string(out.q) + " exceeds 1/2; choose a smaller epsilon");
  out.J = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  double bound = 1.0;
  while (bound >= 1e-12 && out.q > 0.0) {
    term = E * term;
    out.J += term;
    bound *= out.q;
    ++out.terms;
  }
  out.J_norm = m_operator_norm(out.J, M);
  return out;
}

Eigen::VectorXd smoothed_projection(const SimplicialComplex& K, const MeshGeometry& G, const DofTable& table,
                                    const Eigen::MatrixXd& J, const PhysicalSampler& u, double rho, const BallRule& rule,
                                    int quad_order) {
  const RadiusField phi = constant_radius(rho, 2);
  const int k = table.spec.k;
  const PhysicalSampler Ru = [&](const Eigen::VectorXd& x) { return mollify_at(u, k, phi, rule, x); };
  return J * global_interpolate(K, G, table, Ru, quad_order);
}

EpsilonSearch epsilon_search(const SimplicialComplex& K, const MeshGeometry& G, const std::vector<DofTable>& tables,
                             const BallRule& rule, int steps) {
  if (tables.empty()) throw std::invalid_argument("epsilon_search: no spaces given");
  EpsilonSearch out;
  out.patch = patch_constants(K, G);
  if (!out.patch.constant_h_star) throw std::invalid_argument("epsilon_search: the meshsize function must be constant");
  std::vector<SparseMatrix> M;
  for (const auto& t : tables) M.push_back(assemble_mass(K, t, G));
  double eps = 0.2;
  for (int s = 0; s < steps; ++s, eps /= 2) {
    EpsilonTrial trial{eps, -1.0, {}};
    if (eps > out.patch.max_epsilon()) {
      trial.rejected = "patch bound eps C_triangle C_h <= beta";
      out.trials.push_back(trial);
      continue;
    }
    std::vector<SparseMatrix> Q;
    trial.q = 0.0;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      Q.push_back(quasi_interpolant_matrix(K, tables[i], eps * out.patch.h_star, rule));
      const auto n = tables[i].total;
      trial.q = std::max(trial.q, m_operator_norm(Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(Q.back()), M[i]));
    }
    out.trials.push_back(trial);
    if (trial.q > 0.5) {
      out.trials.back().rejected = "half bound |Id - Q|_M <= 1/2";
      continue;
    }
    out.epsilon = eps;
    out.rho = eps * out.patch.h_star;
    out.q = trial.q;
    out.Q = std::move(Q);
    return out;
  }
  throw std::domain_error("epsilon_search: no epsilon satisfies the patch and half bounds");
}

std::string MollifyReport::to_json() const {
  nlohmann::json j;
  j["epsilon"] = epsilon;
  j["L"] = L;
  j["half_bound_ok"] = half_bound_ok;
  j["commutation_residual"] = commutation_residual;
  j["J_norm"] = J_norm;
  return j.dump();
}

}  // namespace mfeec
