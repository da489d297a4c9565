#include "vstar/nonlinear.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "vstar/error.hpp"

namespace vstar {

namespace {

constexpr double kPi = std::numbers::pi;

double cube(double a) { return a * a * a; }

double cell_volume(double ra, double rb) { return 4 * kPi / 3 * (cube(rb) - cube(ra)); }

// b^3 - a^3 without cancellation when b is close to a
double cube_diff(double a, double b) { return (b - a) * (b * b + a * b + a * a); }

}  // namespace

DiscreteStar discrete_equilibrium(const StationaryStar& star, int cells) {
  MassMap mm = mass_map(star, cells);
  DiscreteStar eq;
  eq.params = star.params;
  const std::size_t N = mm.cells();
  eq.x = mm.x;
  eq.dx = mm.dx;
  eq.mass = mm.x.back();
  eq.node_mass.assign(N + 1, 0.0);
  for (std::size_t j = 0; j < N; ++j) {
    eq.node_mass[j] += 0.5 * eq.dx[j];
    eq.node_mass[j + 1] += 0.5 * eq.dx[j];
  }
  eq.z = mm.r0;
  std::vector<double> r = mm.r0;
  const double K = star.params.entropy_k, gamma = star.params.gamma;

  std::vector<double> rho(N), P(N), scale(N + 1, 1.0);
  for (std::size_t i = 1; i <= N; ++i) scale[i] = eq.x[i] / (r[i] * r[i]);
  auto evaluate = [&](Vec& F) {
    for (std::size_t j = 0; j < N; ++j) {
      double V = cell_volume(r[j], r[j + 1]);
      if (!(V > 0)) throw Error(Errc::vacuum_collapse, "equilibrium iterate lost monotonicity");
      rho[j] = eq.dx[j] / V;
      P[j] = K * std::pow(rho[j], gamma);
    }
    F.resize(N);
    double worst = 0;
    for (std::size_t i = 1; i <= N; ++i) {
      double Pr = i < N ? P[i] : 0.0;
      F[i - 1] = 4 * kPi * r[i] * r[i] * (P[i - 1] - Pr) / eq.node_mass[i] - eq.x[i] / (r[i] * r[i]);
      worst = std::max(worst, std::abs(F[i - 1]) / scale[i]);
    }
    return worst;
  };

  Vec F;
  double res = evaluate(F);
  int it = 0;
  for (; it < 60 && res > 1e-15; ++it) {
    // dP_j/dr_j and dP_j/dr_{j+1}
    std::vector<double> dPa(N), dPb(N);
    for (std::size_t j = 0; j < N; ++j) {
      double V = cell_volume(r[j], r[j + 1]);
      dPa[j] = gamma * P[j] / V * 4 * kPi * r[j] * r[j];
      dPb[j] = -gamma * P[j] / V * 4 * kPi * r[j + 1] * r[j + 1];
    }
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t i = 1; i <= N; ++i) {
      double c = 4 * kPi * r[i] * r[i] / eq.node_mass[i];
      double Pr = i < N ? P[i] : 0.0;
      double d = 8 * kPi * r[i] / eq.node_mass[i] * (P[i - 1] - Pr) + c * dPb[i - 1] + 2 * eq.x[i] / cube(r[i]);
      if (i < N) d -= c * dPa[i];
      trip.emplace_back(i - 1, i - 1, d);
      if (i > 1) trip.emplace_back(i - 1, i - 2, c * dPa[i - 1]);
      if (i < N) trip.emplace_back(i - 1, i, -c * dPb[i]);
    }
    SpMat Jac(N, N);
    Jac.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat> lu(Jac);
    if (lu.info() != Eigen::Success) throw Error(Errc::eigen_fail, "equilibrium Jacobian is singular");
    Vec dr = lu.solve(-F);
    std::vector<double> r_old = r;
    double step = 1.0, trial = res;
    for (int ls = 0; ls < 30; ++ls) {
      for (std::size_t i = 1; i <= N; ++i) r[i] = r_old[i] + step * dr[i - 1];
      try {
        trial = evaluate(F);
      } catch (const Error&) {
        trial = INFINITY;
      }
      if (trial < res || ls == 29) break;
      step *= 0.5;
    }
    if (!(trial < res)) {
      r = r_old;
      res = evaluate(F);
      break;
    }
    res = trial;
  }
  eq.r0 = r;
  eq.rho0 = rho;
  eq.radius = r.back();
  eq.residual = res;
  eq.iterations = it;
  if (!(res < 1e-10)) throw Error(Errc::stiff_failure, fmt::format("discrete equilibrium residual {:.3e}", res));
  return eq;
}

FluidState equilibrium_state(const DiscreteStar& eq) {
  FluidState s;
  s.v.assign(eq.r0.size(), 0.0);
  s.r = eq.r0;
  s.rho = eq.rho0;
  return s;
}

FluidState init_state(const DiscreteStar& eq, const StationaryStar& star, const GrowingMode& mode, double iota) {
  if (!(iota >= 0) || !std::isfinite(iota)) throw Error(Errc::invalid_argument, "iota must be non-negative");
  FluidState s = equilibrium_state(eq);
  if (iota == 0) return s;
  (void)star;
  FeFunction f = mode.phi();
  const double R = mode.grid.radius, lam = mode.lambda;
  const std::size_t N = eq.cells();
  for (std::size_t i = 1; i <= N; ++i) {
    double z = std::min(eq.z[i], R);
    double v = -lam * f.value(z) / (4 * kPi * z * z);
    s.r[i] = eq.r0[i] + iota * v / lam;
    s.v[i] = iota * v;
  }
  for (std::size_t j = 0; j < N; ++j) {
    double V = cell_volume(s.r[j], s.r[j + 1]);
    if (!(V > 0)) throw Error(Errc::amplitude_out_of_range, fmt::format("cell {} inverted", j));
    s.rho[j] = eq.dx[j] / V;
    if (!(std::abs(s.rho[j] / eq.rho0[j] - 1) <= 0.1))
      throw Error(Errc::amplitude_out_of_range,
                  fmt::format("cell {}: sigma/rho0 = {:.3e}", j, s.rho[j] / eq.rho0[j] - 1));
  }
  return s;
}

double mass_defect(const DiscreteStar& eq, const FluidState& s) {
  double worst = 0;
  for (std::size_t j = 0; j < eq.cells(); ++j)
    worst = std::max(worst, std::abs(s.rho[j] * cell_volume(s.r[j], s.r[j + 1]) / eq.dx[j] - 1.0));
  return worst;
}

// ---------------------------------------------------------------------------------------------

Simulator::Simulator(const DiscreteStar& eq, const SimOptions& opts) : eq_(eq), opts_(opts) {
  if (!(opts.cfl > 0)) throw Error(Errc::invalid_argument, "cfl must be positive");
}

void Simulator::pressures(const FluidState& s, std::vector<double>& P) {
  const double floor = opts_.rho_floor * eq_.params.central_density;
  P.resize(eq_.cells());
  for (std::size_t j = 0; j < P.size(); ++j) {
    double rho = s.rho[j];
    if (rho < floor) {
      rho = floor;
      ++clips_;
    }
    P[j] = opts_.pressure ? eq_.params.entropy_k * std::pow(rho, eq_.params.gamma) : 0.0;
  }
}

std::vector<double> Simulator::force_acc(const FluidState& s, const std::vector<double>& P) const {
  const std::size_t N = eq_.cells();
  std::vector<double> a(N + 1, 0.0);
  for (std::size_t i = 1; i <= N; ++i) {
    double Pr = i < N ? P[i] : 0.0;
    double r = s.r[i];
    a[i] = 4 * kPi * r * r * (P[i - 1] - Pr) / eq_.node_mass[i];
    if (opts_.gravity) a[i] -= eq_.x[i] / (r * r);
  }
  return a;
}

Simulator::Tri Simulator::viscous_matrix(const FluidState& s) const {
  const std::size_t N = eq_.cells();
  Tri A;
  A.lo.assign(N, 0.0);
  A.di.assign(N, 0.0);
  A.up.assign(N, 0.0);
  const double eps = eq_.params.shear_visc, delta = eq_.params.bulk_visc;
  // row k <-> node k+1
  auto add = [&](std::size_t i, std::size_t j, double val) {
    if (i == 0 || j == 0) return;
    if (i == j)
      A.di[i - 1] += val;
    else if (j == i + 1)
      A.up[i - 1] += val;
    else
      A.lo[i - 1] += val;
  };
  for (std::size_t j = 0; j < N; ++j) {
    const double ra = s.r[j], rb = s.r[j + 1];
    const double w = 16 * kPi * kPi * s.rho[j] / eq_.dx[j];
    const double kd = w * delta;
    const double a2 = ra * ra, b2 = rb * rb;
    add(j, j, kd * a2 * a2);
    add(j + 1, j + 1, kd * b2 * b2);
    add(j, j + 1, -kd * a2 * b2);
    add(j + 1, j, -kd * a2 * b2);
    if (j == 0) continue;  // v/r is taken constant across the central cell
    const double c = 0.5 * (cube(ra) + cube(rb));
    const double ks = w * (4 * eps / 3) * c * c;
    add(j, j, ks / (ra * ra));
    add(j + 1, j + 1, ks / (rb * rb));
    add(j, j + 1, -ks / (ra * rb));
    add(j + 1, j, -ks / (ra * rb));
  }
  return A;
}

double Simulator::dissipation(const FluidState& s, const std::vector<double>& v) const {
  const std::size_t N = eq_.cells();
  const double eps = eq_.params.shear_visc, delta = eq_.params.bulk_visc;
  double D = 0;
  for (std::size_t j = 0; j < N; ++j) {
    const double ra = s.r[j], rb = s.r[j + 1];
    double a = (rb * rb * v[j + 1] - ra * ra * v[j]) / eq_.dx[j];
    double b = j == 0 ? 0.0 : (v[j + 1] / rb - v[j] / ra) / eq_.dx[j];
    double c = 0.5 * (cube(ra) + cube(rb));
    D += eq_.dx[j] * 16 * kPi * kPi * s.rho[j] * (delta * a * a + 4 * eps / 3 * c * c * b * b);
  }
  return D;
}

// backward Euler (M + tau A) v' = M v with the geometry frozen; returns the kinetic energy removed.
// A-stable schemes with negative amplification (Crank-Nicolson, TR-BDF2) reverse stiff velocities ahead of
// the drift and destabilize the split step.
double Simulator::viscous_substep(const FluidState& s, std::vector<double>& v, double tau) const {
  const std::size_t N = eq_.cells();
  Tri A = viscous_matrix(s);
  std::vector<double> rhs(N), di(N), up(N);
  double k0 = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const std::size_t i = k + 1;
    rhs[k] = eq_.node_mass[i] * v[i];
    di[k] = eq_.node_mass[i] + tau * A.di[k];
    up[k] = tau * A.up[k];
    k0 += 0.5 * eq_.node_mass[i] * v[i] * v[i];
  }
  // Thomas sweep; the matrix is symmetric positive definite
  for (std::size_t k = 1; k < N; ++k) {
    if (!(di[k - 1] > 0) || !std::isfinite(di[k - 1]))
      throw Error(Errc::viscous_solve_fail, fmt::format("non-positive pivot at node {}", k));
    double m = tau * A.lo[k] / di[k - 1];
    di[k] -= m * up[k - 1];
    rhs[k] -= m * rhs[k - 1];
  }
  if (!(di[N - 1] > 0) || !std::isfinite(di[N - 1]))
    throw Error(Errc::viscous_solve_fail, "non-positive pivot at the surface node");
  v[N] = rhs[N - 1] / di[N - 1];
  for (std::size_t k = N - 1; k-- > 0;) v[k + 1] = (rhs[k] - up[k] * v[k + 2]) / di[k];
  double k1 = 0;
  for (std::size_t i = 1; i <= N; ++i) k1 += 0.5 * eq_.node_mass[i] * v[i] * v[i];
  return k0 - k1;
}

void Simulator::update_density(FluidState& s) const {
  for (std::size_t j = 0; j < eq_.cells(); ++j) {
    double V = cell_volume(s.r[j], s.r[j + 1]);
    if (!(V > 0) || !std::isfinite(V))
      throw Error(Errc::vacuum_collapse, fmt::format("cell {} volume {:.3e} at t = {:.6g}", j, V, s.t));
    s.rho[j] = eq_.dx[j] / V;
  }
}

double Simulator::stable_dt(const FluidState& s) const {
  if (opts_.dt > 0) return opts_.dt;
  const double K = eq_.params.entropy_k, gamma = eq_.params.gamma;
  double dt = INFINITY;
  for (std::size_t j = 0; j < eq_.cells(); ++j) {
    double c = std::sqrt(gamma * K * std::pow(std::max(s.rho[j], 0.0), gamma - 1));
    double h = s.r[j + 1] - s.r[j];
    if (c > 0) dt = std::min(dt, opts_.cfl * h / c);
  }
  if (!std::isfinite(dt)) dt = 1e-2;
  return dt;
}

StepInfo Simulator::step(FluidState& s, double dt) {
  if (!(dt > 0)) throw Error(Errc::invalid_argument, "time step must be positive");
  const FluidState before = s;
  const std::size_t N = eq_.cells();
  std::vector<double> P;
  StepInfo info;
  info.dt = dt;

  pressures(s, P);
  auto a = force_acc(s, P);
  for (std::size_t i = 1; i <= N; ++i) s.v[i] += 0.5 * dt * a[i];
  if (opts_.viscosity) info.dissipation += viscous_substep(s, s.v, 0.5 * dt);
  for (std::size_t i = 1; i <= N; ++i) s.r[i] += dt * s.v[i];
  update_density(s);
  if (opts_.viscosity) info.dissipation += viscous_substep(s, s.v, 0.5 * dt);
  pressures(s, P);
  a = force_acc(s, P);
  for (std::size_t i = 1; i <= N; ++i) s.v[i] += 0.5 * dt * a[i];
  s.t += dt;
  for (double vi : s.v)
    if (!std::isfinite(vi)) throw Error(Errc::vacuum_collapse, "non-finite velocity");
  info.dE = energy_increment(eq_, before, s);
  return info;
}

StateRate Simulator::rate(const FluidState& s) const {
  const std::size_t N = eq_.cells();
  StateRate out;
  std::vector<double> P(N);
  for (std::size_t j = 0; j < N; ++j)
    P[j] = opts_.pressure ? eq_.params.entropy_k * std::pow(std::max(s.rho[j], 0.0), eq_.params.gamma) : 0.0;
  out.v_t = force_acc(s, P);
  if (opts_.viscosity) {
    Tri A = viscous_matrix(s);
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t i = k + 1;
      double Av =
          A.di[k] * s.v[i] + (k > 0 ? A.lo[k] * s.v[i - 1] : 0.0) + (k + 1 < N ? A.up[k] * s.v[i + 1] : 0.0);
      out.v_t[i] -= Av / eq_.node_mass[i];
    }
  }
  out.s_t.resize(N);
  for (std::size_t j = 0; j < N; ++j) {
    double ra = s.r[j], rb = s.r[j + 1];
    double rho_t = -4 * kPi * s.rho[j] * s.rho[j] * (rb * rb * s.v[j + 1] - ra * ra * s.v[j]) / eq_.dx[j];
    out.s_t[j] = rho_t / eq_.rho0[j];
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

double physical_energy(const DiscreteStar& eq, const FluidState& s) {
  const double K = eq.params.entropy_k, gamma = eq.params.gamma;
  double E = 0;
  for (std::size_t i = 0; i < s.v.size(); ++i) E += 0.5 * eq.node_mass[i] * s.v[i] * s.v[i];
  for (std::size_t j = 0; j < eq.cells(); ++j) E += eq.dx[j] * K * std::pow(s.rho[j], gamma - 1) / (gamma - 1);
  for (std::size_t i = 1; i < s.r.size(); ++i) E -= eq.node_mass[i] * eq.x[i] / s.r[i];
  return E;
}

double energy_increment(const DiscreteStar& eq, const FluidState& a, const FluidState& b) {
  const double K = eq.params.entropy_k, gamma = eq.params.gamma;
  double dE = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    dE += 0.5 * eq.node_mass[i] * (b.v[i] - a.v[i]) * (b.v[i] + a.v[i]);
  for (std::size_t i = 1; i < a.r.size(); ++i)
    dE += eq.node_mass[i] * eq.x[i] * (b.r[i] - a.r[i]) / (a.r[i] * b.r[i]);
  for (std::size_t j = 0; j < eq.cells(); ++j) {
    double Va = cube(a.r[j + 1]) - cube(a.r[j]);
    double dV = cube_diff(a.r[j + 1], b.r[j + 1]) - cube_diff(a.r[j], b.r[j]);
    double log_ratio = -std::log1p(dV / Va);  // log(rho_b / rho_a)
    dE += eq.dx[j] * K * std::pow(a.rho[j], gamma - 1) * std::expm1((gamma - 1) * log_ratio) / (gamma - 1);
  }
  return dE;
}

double energy_e0(const DiscreteStar& eq, const FluidState& s) {
  const double K = eq.params.entropy_k, gamma = eq.params.gamma;
  const double nu = std::min(eq.params.bulk_visc, 4 * eq.params.shear_visc / 3);
  double e = 0;
  for (std::size_t i = 0; i < s.v.size(); ++i) e += 0.5 * eq.node_mass[i] * s.v[i] * s.v[i];
  for (std::size_t j = 0; j < eq.cells(); ++j) {
    double q = (s.rho[j] - eq.rho0[j]) / eq.rho0[j];
    e += 0.5 * eq.dx[j] * K * gamma * std::pow(eq.rho0[j], gamma - 1) / ((1 + q) * (1 + q)) * q * q;
  }
  for (std::size_t i = 1; i < s.r.size(); ++i) {
    double d = (s.r[i] - eq.r0[i]) / s.r[i];
    double m = i == 1 ? eq.node_mass[0] + eq.node_mass[1] : eq.node_mass[i];
    e += 0.5 * nu * m * d * d;
  }
  return e;
}

EnergyReport energy_report(const Simulator& sim, const FluidState& s, const StateRate& rate) {
  const DiscreteStar& eq = sim.equilibrium();
  const double K = eq.params.entropy_k, gamma = eq.params.gamma;
  const double eps = eq.params.shear_visc, delta = eq.params.bulk_visc;
  const double nu = std::min(delta, 4 * eps / 3);
  const std::size_t N = eq.cells();
  EnergyReport rep;
  std::vector<double> q(N);
  for (std::size_t j = 0; j < N; ++j) q[j] = (s.rho[j] - eq.rho0[j]) / eq.rho0[j];

  for (std::size_t i = 0; i <= N; ++i) {
    rep.e0_v += 0.5 * eq.node_mass[i] * s.v[i] * s.v[i];
    rep.e2 += 0.5 * eq.node_mass[i] * rate.v_t[i] * rate.v_t[i];
    rep.d1 += eq.node_mass[i] * rate.v_t[i] * rate.v_t[i];
  }
  for (std::size_t j = 0; j < N; ++j) {
    double wgt = K * gamma * std::pow(eq.rho0[j], gamma - 1) / ((1 + q[j]) * (1 + q[j]));
    rep.e0_sigma += 0.5 * eq.dx[j] * wgt * q[j] * q[j];
    rep.e2 += 0.5 * eq.dx[j] * wgt * rate.s_t[j] * rate.s_t[j];
    rep.sup_sigma = std::max(rep.sup_sigma, std::abs(q[j]));
  }
  for (std::size_t i = 1; i <= N; ++i) {
    double d = (s.r[i] - eq.r0[i]) / s.r[i];
    double m = i == 1 ? eq.node_mass[0] + eq.node_mass[1] : eq.node_mass[i];
    rep.e0_r += 0.5 * nu * m * d * d;
    rep.sup_r = std::max(rep.sup_r, std::abs(d));
  }
  // derivatives of sigma/rho0 between cell centres
  for (std::size_t i = 1; i < N; ++i) {
    double m = eq.node_mass[i], r4 = std::pow(s.r[i], 4);
    double g = (q[i] - q[i - 1]) / m;
    double qa = 0.5 * (q[i] + q[i - 1]);
    double rho0 = 0.5 * (eq.rho0[i] + eq.rho0[i - 1]);
    rep.e1 += 0.5 * m * (delta + 4 * eps / 3) * 16 * kPi * kPi * r4 / (1 + qa) * g * g;
    rep.d1 += m * 16 * kPi * kPi * K * gamma * r4 * std::pow(rho0, gamma) * g * g;
  }
  if (sim.options().viscosity) {
    rep.d0 = sim.dissipation(s, s.v);
    rep.d2 = sim.dissipation(s, rate.v_t);
  }
  rep.e1 += 0.5 * rep.d0;
  rep.physical_energy = physical_energy(eq, s);
  return rep;
}

EnergyReport energy_report(const Simulator& sim, const FluidState& s) { return energy_report(sim, s, sim.rate(s)); }

VelocityIdentity velocity_identity(const DiscreteStar& eq, const FluidState& s) {
  VelocityIdentity out;
  double lhs = 0, rhs = 0, worst = 0, scale = 0;
  const std::size_t N = eq.cells();
  auto u = [&](std::size_t i) { return i == 0 ? s.v[1] / s.r[1] : s.v[i] / s.r[i]; };
  for (std::size_t j = 0; j < N; ++j) {
    double ra = s.r[j], rb = s.r[j + 1], rho = s.rho[j], dx = eq.dx[j];
    double a = (rb * rb * s.v[j + 1] - ra * ra * s.v[j]) / dx;
    double b = (u(j + 1) - u(j)) / dx;
    double c = 0.5 * (cube(ra) + cube(rb));
    double ubar = 0.5 * (u(j) + u(j + 1));
    lhs += dx * ubar * ubar / rho;
    rhs += dx * (rho * a * a + rho * c * c * b * b);
    double id = 4 * kPi / 3 * (rho * a - rho * c * b);
    worst = std::max(worst, std::abs(ubar - id));
    scale = std::max(scale, std::abs(ubar));
  }
  out.lhs = lhs;
  out.rhs = 32 * kPi * kPi / 9 * rhs;
  out.pointwise = scale > 0 ? worst / scale : worst;
  return out;
}

RadiusExpansion radius_expansion(const DiscreteStar& eq, const FluidState& s) {
  RadiusExpansion out;
  double acc = 0;
  for (std::size_t j = 0; j < eq.cells(); ++j) {
    double q = (s.rho[j] - eq.rho0[j]) / eq.rho0[j];
    out.sup_s_sq = std::max(out.sup_s_sq, q * q);
    acc += eq.dx[j] * q / eq.rho0[j];
    const std::size_t i = j + 1;
    double geom = (s.r[i] - eq.r0[i]) / s.r[i];
    double first = -acc / (4 * kPi * cube(eq.r0[i]));
    out.defect = std::max(out.defect, std::abs(geom - first));
  }
  return out;
}

std::vector<BalancePoint> energy_balance_residual(const std::vector<TrajectoryRow>& rows) {
  std::vector<BalancePoint> out;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    double dt = rows[k].t - rows[k - 1].t;
    if (!(dt > 0)) continue;
    BalancePoint b;
    b.t = 0.5 * (rows[k].t + rows[k - 1].t);
    b.dissipation = 0.5 * (rows[k].D0 + rows[k - 1].D0);
    b.residual = (rows[k].energy_change - rows[k - 1].energy_change) / dt + b.dissipation;
    out.push_back(b);
  }
  return out;
}

TrajectoryRow trajectory_row(const Simulator& sim, const FluidState& s) {
  EnergyReport e = energy_report(sim, s);
  TrajectoryRow r;
  r.t = s.t;
  r.E0v = e.e0_v;
  r.E0sigma = e.e0_sigma;
  r.E0r = e.e0_r;
  r.sqrtE0 = std::sqrt(e.e0());
  r.D0 = e.d0;
  r.E1 = e.e1;
  r.E2 = e.e2;
  r.phys_energy = e.physical_energy;
  r.sup_sigma = e.sup_sigma;
  r.sup_r = e.sup_r;
  return r;
}

InstabilityResult run_instability(const StationaryStar& star, const DiscreteStar& eq, const GrowingMode& mode,
                                  const InstabilityOptions& opts, bool keep_snapshots) {
  if (!(opts.iota > 0) || !(opts.theta0 > opts.iota))
    throw Error(Errc::invalid_argument, "need 0 < iota < theta0");
  const double lam = mode.lambda;
  InstabilityResult res;
  res.lambda = lam;
  res.iota = opts.iota;
  res.theta0 = opts.theta0;
  res.predicted_escape = std::log(opts.theta0 / opts.iota) / lam;
  const double t_max = opts.t_max > 0 ? opts.t_max : 3 * res.predicted_escape;

  Simulator sim(eq, opts.sim);
  FluidState s = init_state(eq, star, mode, opts.iota);
  const double dt = sim.stable_dt(s);
  res.dt = dt;
  double amp = std::sqrt(energy_e0(eq, s));
  res.t_all.push_back(s.t);
  res.amp_all.push_back(amp);
  double dE = 0, Q = 0;
  auto record = [&] {
    TrajectoryRow row = trajectory_row(sim, s);
    row.energy_change = dE;
    row.dissipated = Q;
    res.sup_sigma_max = std::max(res.sup_sigma_max, row.sup_sigma);
    res.sup_r_max = std::max(res.sup_r_max, row.sup_r);
    res.rows.push_back(row);
    res.max_mass_defect = std::max(res.max_mass_defect, mass_defect(eq, s));
    if (keep_snapshots) res.snapshots.push_back(s);
  };
  record();
  bool escaped = false;
  while (s.t < t_max) {
    StepInfo info = sim.step(s, dt);
    ++res.steps;
    dE += info.dE;
    Q += info.dissipation;
    double next = std::sqrt(energy_e0(eq, s));
    res.t_all.push_back(s.t);
    res.amp_all.push_back(next);
    if (res.steps % static_cast<std::size_t>(std::max(1, opts.record_every)) == 0) record();
    if (next >= opts.theta0) {
      // log-linear interpolation of the crossing
      double f = std::log(opts.theta0 / amp) / std::log(next / amp);
      res.escape_time = s.t - dt + f * dt;
      escaped = true;
      record();
      break;
    }
    amp = next;
  }
  res.final_amplitude = res.amp_all.back();
  res.clips = sim.clips();
  if (!escaped)
    throw Error(Errc::no_escape,
                fmt::format("sqrt(E0) = {:.3e} < theta0 = {:.3e} at t = {:.4g}", res.final_amplitude, opts.theta0, s.t));

  const double skip = opts.fit_skip >= 0 ? opts.fit_skip : 1.0 / lam;
  std::vector<double> tw, aw;
  for (std::size_t k = 0; k < res.t_all.size(); ++k) {
    double a = res.amp_all[k];
    if (res.t_all[k] >= skip && a >= 10 * opts.iota && a <= opts.theta0 / 10) {
      tw.push_back(res.t_all[k]);
      aw.push_back(a);
    }
  }
  if (tw.size() >= 10) {
    res.fit = measure_growth_rate(tw, aw, tw.front(), tw.back());
    res.fit_valid = true;
  }
  return res;
}

}  // namespace vstar
