#include "vstar/fem.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <fstream>

#include "vstar/csv.hpp"
#include "vstar/error.hpp"
#include "vstar/quadrature.hpp"
#include "vstar/star.hpp"

namespace vstar {

std::size_t RadialGrid::element_of(double z) const {
  auto it = std::upper_bound(nodes.begin(), nodes.end(), z);
  std::size_t k = it == nodes.begin() ? 0 : static_cast<std::size_t>(it - nodes.begin()) - 1;
  return std::min(k, elements() - 1);
}

double RadialGrid::max_width() const {
  double w = 0;
  for (std::size_t e = 0; e < elements(); ++e) w = std::max(w, nodes[e + 1] - nodes[e]);
  return w;
}

RadialGrid make_grid(double radius, int n_elements, std::pair<double, double> grading, const GridOptions& opts) {
  if (n_elements < 32) throw Error(Errc::invalid_argument, "at least 32 elements required");
  if (!(grading.first > 0 && grading.second > 0)) throw Error(Errc::invalid_argument, "grading exponents must be positive");
  RadialGrid g;
  g.radius = radius;
  g.z_min = opts.z_min_frac * radius;
  g.quad_points = opts.quad_points;
  g.inner = opts.inner;
  if (g.inner == InnerBoundary::core_element) g.nodes.push_back(0.0);
  for (int i = 0; i <= n_elements; ++i) {
    double u = static_cast<double>(i) / n_elements;
    double t = (grading.first == 1.0 && grading.second == 1.0) ? u : boost::math::ibeta(grading.first, grading.second, u);
    g.nodes.push_back(i == n_elements ? radius : g.z_min + (radius - g.z_min) * t);
  }
  for (std::size_t i = 1; i < g.nodes.size(); ++i)
    if (!(g.nodes[i] > g.nodes[i - 1])) throw Error(Errc::degenerate_grid, "duplicate or unordered nodes");
  return g;
}

RadialGrid build_grid(const StationaryStar& star, int n_elements, std::pair<double, double> grading,
                      const GridOptions& opts) {
  return make_grid(star.radius, n_elements, grading, opts);
}

RadialGrid build_grid(const StationaryStar& star, const GridOptions& opts) {
  return make_grid(star.radius, opts.n_elements, {opts.grading_inner, opts.grading_outer}, opts);
}

Shape hermite_shape(double u, double h) {
  double u2 = u * u, u3 = u2 * u;
  Shape s{};
  s.v[0] = 1 - 3 * u2 + 2 * u3;
  s.v[1] = h * (u - 2 * u2 + u3);
  s.v[2] = 3 * u2 - 2 * u3;
  s.v[3] = h * (u3 - u2);
  s.d[0] = (-6 * u + 6 * u2) / h;
  s.d[1] = 1 - 4 * u + 3 * u2;
  s.d[2] = (6 * u - 6 * u2) / h;
  s.d[3] = 3 * u2 - 2 * u;
  s.dd[0] = (-6 + 12 * u) / (h * h);
  s.dd[1] = (-4 + 6 * u) / h;
  s.dd[2] = (6 - 12 * u) / (h * h);
  s.dd[3] = (6 * u - 2) / h;
  return s;
}

namespace {

template <class F>
double eval_fe(const FeFunction& f, double z, F pick) {
  const RadialGrid& g = *f.grid;
  std::size_t e = g.element_of(z);
  double a = g.nodes[e], h = g.nodes[e + 1] - a;
  Shape s = hermite_shape((z - a) / h, h);
  double sum = 0;
  for (int k = 0; k < 4; ++k) sum += pick(s, k) * f.coeffs[2 * e + k];
  return sum;
}

}  // namespace

double FeFunction::value(double z) const {
  return eval_fe(*this, z, [](const Shape& s, int k) { return s.v[k]; });
}
double FeFunction::deriv(double z) const {
  return eval_fe(*this, z, [](const Shape& s, int k) { return s.d[k]; });
}
double FeFunction::deriv2(double z) const {
  return eval_fe(*this, z, [](const Shape& s, int k) { return s.dd[k]; });
}

Vec interpolate(const RadialGrid& grid, const std::function<double(double)>& f,
                const std::function<double(double)>& df) {
  Vec c(grid.dofs());
  for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
    c[2 * i] = f(grid.nodes[i]);
    c[2 * i + 1] = df(grid.nodes[i]);
  }
  return c;
}

Vec expand(const RadialGrid& grid, const Vec& free) {
  Vec full = Vec::Zero(grid.dofs());
  full.tail(grid.free_dofs()) = free;
  return full;
}

Vec restrict_free(const RadialGrid& grid, const Vec& full) { return full.tail(grid.free_dofs()); }

QuadraticForms assemble_forms(const StationaryStar& star, const RadialGrid& grid, double s) {
  QuadraticForms F;
  F.grid = grid;
  F.gamma = star.params.gamma;
  F.eps = star.params.shear_visc;
  F.delta = star.params.bulk_visc;
  F.s = s;
  const double gamma = F.gamma, eps = F.eps, delta = F.delta;
  const GaussRule& q = gauss_legendre(grid.quad_points);
  const std::size_t n = grid.dofs();

  std::vector<Eigen::Triplet<double>> tG, tQ, tE1, tJ;
  for (std::size_t e = 0; e < grid.elements(); ++e) {
    double a = grid.nodes[e], h = grid.nodes[e + 1] - a;
    double kG[4][4] = {}, kQ[4][4] = {}, kE1[4][4] = {}, kJ[4][4] = {};
    for (std::size_t g = 0; g < q.nodes.size(); ++g) {
      double u = 0.5 * (1 + q.nodes[g]);
      double z = a + h * u;
      double w = 0.5 * h * q.weights[g];
      Shape sh = hermite_shape(u, h);
      double P = star.pressure(z), dP = star.dpressure(z), rho = star.rho(z);
      double z2 = z * z, z3 = z2 * z;
      double cG = gamma * P / z2, cQ = 4 * dP / z3, cJ = rho / z2;
      for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
          double si = sh.d[i] - 3 * sh.v[i] / z, sj = sh.d[j] - 3 * sh.v[j] / z;
          kG[i][j] += w * cG * sh.d[i] * sh.d[j];
          kQ[i][j] += w * cQ * sh.v[i] * sh.v[j];
          kE1[i][j] += w * (delta * sh.d[i] * sh.d[j] + (4 * eps / 3) * si * sj) / z2;
          kJ[i][j] += w * cJ * sh.v[i] * sh.v[j];
        }
    }
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        for (double v : {kG[i][j], kQ[i][j], kE1[i][j], kJ[i][j]})
          if (!std::isfinite(v)) throw Error(Errc::singular_quadrature, "non-finite element integral");
        std::size_t I = 2 * e + i, J = 2 * e + j;
        auto push = [&](std::vector<Eigen::Triplet<double>>& t, double v) {
          t.emplace_back(I, J, v);
          if (I != J) t.emplace_back(J, I, v);
        };
        push(tG, kG[i][j]);
        push(tQ, kQ[i][j]);
        push(tE1, kE1[i][j]);
        push(tJ, kJ[i][j]);
      }
  }
  auto build = [n](SpMat& m, const std::vector<Eigen::Triplet<double>>& t) {
    m.resize(n, n);
    m.setFromTriplets(t.begin(), t.end());
  };
  build(F.G_full, tG);
  build(F.Q_full, tQ);
  build(F.E1_full, tE1);
  build(F.J_full, tJ);
  F.E0_full = F.G_full + F.Q_full;
  const auto k = grid.fixed_dofs(), m = grid.free_dofs();
  F.E0 = F.E0_full.bottomRightCorner(m, m);
  F.E1 = F.E1_full.bottomRightCorner(m, m);
  F.J = F.J_full.bottomRightCorner(m, m);
  F.G = F.G_full.bottomRightCorner(m, m);
  (void)k;
  return F;
}

void write_triplets(const SpMat& A, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::invalid_argument, "cannot open " + path);
  for (int c = 0; c < A.outerSize(); ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it)
      if (it.row() <= it.col()) out << it.row() << ' ' << it.col() << ' ' << format_number(it.value()) << '\n';
}

HardyResult hardy_verify(const std::function<double(double)>& u, const std::function<double(double)>& du, double tau,
                         const RadialGrid& grid, double tol) {
  if (!(tau > 0)) throw Error(Errc::invalid_argument, "tau must be positive");
  const GaussRule& q = gauss_legendre(std::max(grid.quad_points, 12));
  double lhs = 0, grad = 0, sup = 0;
  auto weighted = [&](double z) { return std::abs(u(z)) * std::pow(z, -(tau + 1) / 2); };
  std::vector<double> edges = grid.nodes;
  if (edges.front() > 0) edges.insert(edges.begin(), 0.0);
  // dyadic shells toward the origin resolve the singular weights
  const int shells = 40;
  std::vector<double> inner;
  for (int k = shells; k >= 1; --k) inner.push_back(edges[1] * std::pow(0.5, k));
  edges.insert(edges.begin() + 1, inner.begin(), inner.end());
  std::vector<double> shell_lhs;
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    double a = edges[e], b = edges[e + 1], piece = 0;
    for (std::size_t g = 0; g < q.nodes.size(); ++g) {
      double z = a + 0.5 * (b - a) * (1 + q.nodes[g]);
      double w = 0.5 * (b - a) * q.weights[g];
      double uz = u(z), dz = du(z);
      piece += w * uz * uz / std::pow(z, tau + 2);
      grad += w * dz * dz / std::pow(z, tau);
      sup = std::max(sup, weighted(z));
    }
    lhs += piece;
    if (e >= 1 && e <= static_cast<std::size_t>(shells)) shell_lhs.push_back(piece);
    sup = std::max(sup, weighted(b));
  }
  if (!std::isfinite(lhs) || !std::isfinite(grad))
    throw Error(Errc::not_in_weighted_space, "weighted integrals diverge");
  // convergent integrands decay geometrically shell by shell toward z = 0
  if (shell_lhs[0] > 1e-300 && shell_lhs[0] > 0.5 * shell_lhs[10])
    throw Error(Errc::not_in_weighted_space, "u does not vanish fast enough at z = 0");
  HardyResult r;
  r.lhs = lhs;
  r.rhs = 4.0 / ((1 + tau) * (1 + tau)) * grad;
  r.sup_value = sup;
  r.sup_bound = std::sqrt(grad / (1 + tau));
  r.holds = r.lhs <= r.rhs * (1 + tol) && r.sup_value <= r.sup_bound * (1 + tol);
  return r;
}

}  // namespace vstar
