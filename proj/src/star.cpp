#include "vstar/star.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vstar/csv.hpp"
#include "vstar/error.hpp"
#include "vstar/quadrature.hpp"

namespace vstar {

using std::numbers::pi;

void PolytropeParams::validate() const {
  if (!(gamma > 1.0 && gamma < 2.0)) throw Error(Errc::unsupported_gamma, "gamma must lie in (1, 2)");
  if (!(entropy_k > 0.0)) throw Error(Errc::invalid_argument, "K must be positive");
  if (!(central_density > 0.0)) throw Error(Errc::invalid_argument, "central density must be positive");
  if (!(shear_visc >= 0.0) || !(bulk_visc >= 0.0))
    throw Error(Errc::invalid_argument, "viscosities must be non-negative");
}

double StationaryStar::theta(double z) const {
  double xi = z / alpha;
  if (xi >= emden.xi_end()) return 0.0;
  return std::max(0.0, emden.theta_at(xi));
}

double StationaryStar::rho(double z) const {
  return params.central_density * std::pow(theta(z), emden.index_n);
}

double StationaryStar::drho(double z) const {
  double th = theta(z);
  if (th <= 0.0) return 0.0;
  double n = emden.index_n;
  return params.central_density * n * std::pow(th, n - 1.0) * emden.dtheta_at(z / alpha) / alpha;
}

double StationaryStar::pressure(double z) const {
  return params.entropy_k * std::pow(params.central_density, params.gamma) *
         std::pow(theta(z), emden.index_n + 1.0);
}

double StationaryStar::dpressure(double z) const {
  double th = theta(z), n = emden.index_n;
  double xi = std::min(z / alpha, emden.xi_end());
  return params.entropy_k * std::pow(params.central_density, params.gamma) * (n + 1.0) *
         std::pow(th, n) * emden.dtheta_at(xi) / alpha;
}

double StationaryStar::dpressure_over_rho(double z) const {
  double n = emden.index_n;
  double xi = std::min(z / alpha, emden.xi_end());
  return params.entropy_k * std::pow(params.central_density, params.gamma - 1.0) * (n + 1.0) *
         emden.dtheta_at(xi) / alpha;
}

double StationaryStar::sound_speed(double z) const {
  double r = rho(z);
  return r > 0 ? std::sqrt(params.gamma * pressure(z) / r) : 0.0;
}

double StationaryStar::enclosed_mass(double z) const {
  double xi = z / alpha;
  if (xi >= emden.xi_end()) return mass;
  return -4.0 * pi * alpha * alpha * alpha * params.central_density * xi * xi * emden.dtheta_at(xi);
}

double StationaryStar::quadrature_mass(double z) const {
  double xi = std::min(z / alpha, emden.xi_end());
  const auto& xs = emden.xi;
  auto it = std::upper_bound(xs.begin(), xs.end(), xi);
  std::size_t k = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  k = std::min(k, xs.size() - 1);
  double n = emden.index_n;
  double part = 0.0;
  if (xi > xs[k]) {
    part = integrate_gauss([&](double s) { return s * s * emden_power(std::max(0.0, emden.theta_at(s)), n); },
                           xs[k], xi, 8);
  }
  return 4.0 * pi * alpha * alpha * alpha * params.central_density * (emden_mass[k] + part);
}

double StationaryStar::mass_between(double za, double zb) const {
  double a = za / alpha, b = std::min(zb / alpha, emden.xi_end());
  if (!(b > a)) return 0.0;
  const auto& xs = emden.xi;
  const double n = emden.index_n;
  auto f = [&](double t) { return t * t * emden_power(std::max(0.0, emden.theta_at(t)), n); };
  auto it = std::upper_bound(xs.begin(), xs.end(), a);
  double sum = 0.0, lo = a;
  for (; it != xs.end() && *it < b; ++it) {
    sum += integrate_gauss(f, lo, *it, 8);
    lo = *it;
  }
  sum += integrate_gauss(f, lo, b, 8);
  return 4.0 * pi * alpha * alpha * alpha * params.central_density * sum;
}

double StationaryStar::r0_of_x(double x) const {
  if (x <= 0.0) return 0.0;
  if (x >= quadrature_mass(radius)) return radius;
  double lo = 0.0, hi = radius;
  double z = mass_grid.x.empty() ? 0.5 * radius : std::clamp(mass_grid.r0_of_x(x), 0.0, radius);
  for (int it = 0; it < 200; ++it) {
    double f = quadrature_mass(z) - x;
    if (f > 0) hi = z; else lo = z;
    double dfdz = 4.0 * pi * z * z * rho(z);
    double next = dfdz > 0 ? z - f / dfdz : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - z) <= 1e-15 * radius) return next;
    z = next;
    if (hi - lo <= 1e-15 * radius) break;
  }
  return z;
}

StationaryStar make_star(const PolytropeParams& p, EmdenSolution emden, const StarOptions& opts) {
  if (!emden.first_zero) throw Error(Errc::infinite_support, "Emden solution has no finite zero");
  StationaryStar s;
  s.params = p;
  s.emden = std::move(emden);
  const double n = s.emden.index_n;
  const double rc = p.central_density;
  s.alpha = std::sqrt((n + 1.0) * p.entropy_k * std::pow(rc, 1.0 / n - 1.0) / (4.0 * pi));
  const double xi1 = *s.emden.first_zero;
  s.radius = s.alpha * xi1;
  s.mass = -4.0 * pi * std::pow(s.alpha, 3) * rc * xi1 * xi1 * s.emden.dtheta.back();

  const auto& xs = s.emden.xi;
  s.emden_mass.assign(xs.size(), 0.0);
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    double piece = integrate_gauss(
        [&](double t) { return t * t * emden_power(std::max(0.0, s.emden.theta_at(t)), n); }, xs[k], xs[k + 1], 4);
    s.emden_mass[k + 1] = s.emden_mass[k] + piece;
  }

  const int np = opts.profile_points;
  for (int k = 1; k <= np; ++k) {
    double z = s.radius * k / np;
    s.z_profile.z.push_back(z);
    s.z_profile.rho0.push_back(s.rho(z));
    s.z_profile.P0.push_back(s.pressure(z));
    s.z_profile.dP0dz.push_back(s.dpressure(z));
  }
  s.mass_grid = mass_map(s, opts.mass_cells);
  return s;
}

StationaryStar build_star(const PolytropeParams& p, const StarOptions& opts) {
  p.validate();
  const double n = p.index();
  if (n >= 5.0) throw Error(Errc::infinite_support, "n >= 5 has no finite radius");
  EmdenOptions eo;
  eo.sample_step = opts.sample_step;
  return make_star(p, integrate_emden(n, opts.tol, eo), opts);
}

MassMap mass_map(const StationaryStar& star, int n_cells) {
  if (n_cells < 16) throw Error(Errc::invalid_argument, "mass map needs at least 16 cells");
  MassMap m;
  const std::size_t N = n_cells;
  m.x.assign(N + 1, 0.0);
  m.r0.resize(N + 1);
  m.rho0.resize(N + 1);
  m.dx.resize(N);
  m.mass_above.assign(N + 1, 0.0);
  for (std::size_t i = 0; i <= N; ++i) {
    m.r0[i] = star.radius * static_cast<double>(i) / static_cast<double>(N);
    m.rho0[i] = star.rho(m.r0[i]);
  }
  m.r0[N] = star.radius;
  for (std::size_t j = 0; j < N; ++j) {
    m.dx[j] = star.mass_between(m.r0[j], m.r0[j + 1]);
    if (!(m.dx[j] > 0.0)) throw Error(Errc::monotonicity_violation, "non-positive cell mass");
  }
  for (std::size_t i = 1; i <= N; ++i) m.x[i] = m.x[i - 1] + m.dx[i - 1];
  for (std::size_t i = N; i-- > 0;) m.mass_above[i] = m.mass_above[i + 1] + m.dx[i];
  for (std::size_t i = 1; i <= N; ++i)
    if (!(m.x[i] > m.x[i - 1])) throw Error(Errc::monotonicity_violation, "cumulative mass not increasing");
  m.r0_of_x = monotone_cubic(m.x, m.r0);
  return m;
}

double hydrostatic_residual(const StationaryStar& star, double density_scale) {
  const auto& g = star.mass_grid;
  const double s = density_scale;
  const double pscale = std::pow(s, star.params.gamma);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 1; i < g.x.size(); ++i) {
    double z = g.r0[i];
    double x = s * g.x[i];
    // 4 pi r0^2 dP0/dx = P0'(z) / rho0(z)
    double grad = pscale / s * star.dpressure_over_rho(z);
    double grav = x / (z * z);
    worst = std::max(worst, std::abs(grad + grav));
    scale = std::max(scale, std::abs(grav));
  }
  return worst / scale;
}

double sup_x_over_r3(const StationaryStar& star) {
  double sup = 4.0 * pi * star.params.central_density / 3.0;
  const auto& g = star.mass_grid;
  for (std::size_t i = 1; i < g.x.size(); ++i) sup = std::max(sup, g.x[i] / std::pow(g.r0[i], 3));
  return sup;
}

void write_z_profile_csv(const StationaryStar& star, const std::string& path) {
  CsvWriter w(path, {"z", "rho0", "P0", "dP0dz"});
  const auto& p = star.z_profile;
  for (std::size_t i = 0; i < p.z.size(); ++i) w.row({p.z[i], p.rho0[i], p.P0[i], p.dP0dz[i]});
}

void write_mass_map_csv(const StationaryStar& star, const std::string& path) {
  CsvWriter w(path, {"x", "r0", "rho0"});
  const auto& m = star.mass_grid;
  for (std::size_t i = 0; i < m.x.size(); ++i) w.row({m.x[i], m.r0[i], m.rho0[i]});
}

}  // namespace vstar
