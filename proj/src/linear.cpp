#include "vstar/linear.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "vstar/error.hpp"
#include "vstar/mode.hpp"

namespace vstar {

namespace {

constexpr double kPi = std::numbers::pi;

double form(const SpMat& A, const Vec& x) { return x.dot(A * x); }

// LDLT first, LU as a fallback for indefinite pivots
class LinearSolver {
 public:
  explicit LinearSolver(const SpMat& A) {
    ldlt_.compute(A);
    if (ldlt_.info() == Eigen::Success) {
      Vec d = ldlt_.vectorD();
      if (d.allFinite() && d.cwiseAbs().minCoeff() > 1e-14 * d.cwiseAbs().maxCoeff()) return;
    }
    use_lu_ = true;
    lu_.compute(A);
    if (lu_.info() != Eigen::Success) throw Error(Errc::implicit_solve_fail, "factorization of the step matrix failed");
  }
  Vec solve(const Vec& b) const {
    Vec x = use_lu_ ? Vec(lu_.solve(b)) : Vec(ldlt_.solve(b));
    if (!x.allFinite()) throw Error(Errc::implicit_solve_fail, "non-finite solution of the step system");
    return x;
  }

 private:
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  Eigen::SparseLU<SpMat> lu_;
  bool use_lu_ = false;
};

Vec cube_free(const RadialGrid& g) {
  return restrict_free(g, interpolate(g, [](double z) { return z * z * z; }, [](double z) { return 3 * z * z; }));
}

Eigen::Index surface_index(const RadialGrid& g) {
  return static_cast<Eigen::Index>(2 * (g.nodes.size() - 1) - g.fixed_dofs());
}

void check_options(const EvolveOptions& o) {
  if (!(o.dt > 0) || !(o.t_final >= 0) || o.output_every < 1) throw Error(Errc::invalid_argument, "bad evolve options");
}

}  // namespace

double norm1(const QuadraticForms& f, const Vec& phi) { return std::sqrt(form(f.J, phi) / (4 * kPi)); }
double norm2(const QuadraticForms& f, const Vec& phi) { return std::sqrt(form(f.E1, phi) / (4 * kPi)); }
double norm3(const QuadraticForms& f, const Vec& phi) { return std::sqrt(form(f.G, phi) / (4 * kPi)); }
double kinetic_energy(const QuadraticForms& f, const Vec& phi_dot) { return form(f.J, phi_dot) / (8 * kPi); }
double potential_energy(const QuadraticForms& f, const Vec& phi) { return form(f.E0, phi) / (8 * kPi); }

SecondOrderTrajectory evolve_second_order(const QuadraticForms& f, const Vec& phi0, const Vec& phi_dot0,
                                          const EvolveOptions& opts) {
  check_options(opts);
  const double dt = opts.dt;
  SpMat M = f.J + (dt / 2) * f.E1 + (dt * dt / 4) * f.E0;
  SpMat Mr = f.J - (dt / 2) * f.E1 - (dt * dt / 4) * f.E0;
  LinearSolver solver(M);
  SecondOrderTrajectory tr;
  tr.dt = dt;
  SecondOrderState s{0.0, phi0, phi_dot0, 0.0};
  tr.states.push_back(s);
  const long steps = std::lround(opts.t_final / dt);
  double n2_prev = std::pow(norm2(f, s.phi), 2);
  for (long k = 1; k <= steps; ++k) {
    double e_old = kinetic_energy(f, s.phi_dot) + potential_energy(f, s.phi);
    Vec psi = solver.solve(Mr * s.phi_dot - dt * (f.E0 * s.phi));
    Vec mid = 0.5 * (psi + s.phi_dot);
    s.phi += dt * mid;
    s.phi_dot = psi;
    s.t = k * dt;
    double e_new = kinetic_energy(f, s.phi_dot) + potential_energy(f, s.phi);
    tr.energy_defect.push_back(e_new - e_old + dt * form(f.E1, mid) / (4 * kPi));
    double n2 = std::pow(norm2(f, s.phi), 2);
    s.int_norm2_sq += 0.5 * dt * (n2 + n2_prev);
    n2_prev = n2;
    double mag = s.phi.cwiseAbs().maxCoeff() + s.phi_dot.cwiseAbs().maxCoeff();
    if (!std::isfinite(mag) || mag > opts.overflow) throw Error(Errc::overflow, "state exceeded the overflow guard");
    if (k % opts.output_every == 0 || k == steps) tr.states.push_back(s);
  }
  return tr;
}

GrowthBoundReport verify_growth_bounds(const QuadraticForms& f, const SecondOrderTrajectory& traj, double lambda,
                                       double C0) {
  if (traj.states.empty() || !(lambda > 0)) throw Error(Errc::invalid_argument, "empty trajectory or lambda <= 0");
  GrowthBoundReport r;
  r.lambda = lambda;
  r.C0 = C0;
  const auto& s0 = traj.states.front();
  double n1_0 = std::pow(norm1(f, s0.phi), 2);
  r.K0 = std::pow(norm1(f, s0.phi_dot), 2) + 0.5 * std::pow(norm3(f, s0.phi), 2);
  r.K1 = 2 * r.K0 / lambda + 2 * std::pow(norm2(f, s0.phi), 2);
  // relative allowance for round-off in the equality cases
  const double tol = 1e-10;
  for (const auto& s : traj.states) {
    double a = norm1(f, s.phi), b = norm2(f, s.phi), c = norm3(f, s.phi), d = norm1(f, s.phi_dot);
    r.t.push_back(s.t);
    r.norm1.push_back(a);
    r.norm2.push_back(b);
    r.norm3.push_back(c);
    r.norm1_dot.push_back(d);
    double e2 = std::exp(2 * lambda * s.t);
    double growth = e2 * n1_0 + r.K1 / (2 * lambda) * (e2 - 1);
    double l1 = a * a + s.int_norm2_sq, l2 = d * d / lambda + b * b, l3 = 0.5 * c * c;
    double q1 = l1 / growth, q2 = l2 / (e2 * (2 * lambda * n1_0 + r.K1)), q3 = l3 / (r.K0 + C0 * growth);
    r.ratio1.push_back(q1);
    r.ratio2.push_back(q2);
    r.ratio3.push_back(q3);
    r.worst1 = std::max(r.worst1, q1);
    r.worst2 = std::max(r.worst2, q2);
    r.worst3 = std::max(r.worst3, q3);
  }
  r.holds1 = r.worst1 <= 1 + tol;
  r.holds2 = r.worst2 <= 1 + tol;
  r.holds3 = r.worst3 <= 1 + tol;
  return r;
}

struct FirstOrderStepper::Impl {
  LinearSolver step;
  Eigen::SimplicialLLT<SpMat> gram;
  Eigen::Index surface;
  explicit Impl(const SpMat& M) : step(M) {}
};

FirstOrderStepper::FirstOrderStepper(const QuadraticForms& f, double dt) : f_(f), dt_(dt) {
  if (!(dt > 0)) throw Error(Errc::invalid_argument, "dt must be positive");
  SpMat M = 2 * f.J + dt * f.E1 + (dt * dt / 2) * f.E0;
  impl_ = std::make_unique<Impl>(M);
  impl_->gram.compute(f.J);
  if (impl_->gram.info() != Eigen::Success) throw Error(Errc::gram_fail, "J is not positive definite");
  impl_->surface = surface_index(f.grid);
}

FirstOrderStepper::~FirstOrderStepper() = default;

void FirstOrderStepper::advance(Vec& Phi, Vec& w, const Vec& fphi, const Vec& load) const {
  const double dt = dt_;
  Vec rhs = 2 * (f_.J * w) + (dt / (4 * kPi)) * (f_.E0 * Phi) + dt * load;
  if (fphi.size()) rhs += (dt * dt / (8 * kPi)) * (f_.E0 * fphi);
  Vec wbar = impl_->step.solve(rhs);
  Vec dPhi = -4 * kPi * wbar;
  if (fphi.size()) dPhi += fphi;
  Phi += dt * dPhi;
  w = 2 * wbar - w;
}

void FirstOrderStepper::propagate(Vec& Phi, Vec& w) const {
  advance(Phi, w, Vec(), Vec::Zero(w.size()));
}

void FirstOrderStepper::step(LinearState& s, const Forcing* forcing) const {
  Vec load = Vec::Zero(s.w.size());
  Vec fphi;
  if (forcing) {
    double tm = s.t + 0.5 * dt_;
    if (forcing->fphi) fphi = forcing->fphi(tm);
    if (forcing->n2) load += f_.J * forcing->n2(tm);
    if (forcing->nb) load[impl_->surface] -= forcing->nb(tm);
  }
  advance(s.Phi, s.w, fphi, load);
  s.t += dt_;
}

Vec FirstOrderStepper::w_rate(const Vec& Phi, const Vec& w) const {
  return impl_->gram.solve(f_.E0 * Phi / (4 * kPi) - f_.E1 * w);
}

FirstOrderTrajectory evolve_first_order(const QuadraticForms& f, const LinearState& init, const EvolveOptions& opts,
                                        const Forcing* forcing) {
  check_options(opts);
  FirstOrderStepper stepper(f, opts.dt);
  FirstOrderTrajectory tr;
  tr.dt = opts.dt;
  tr.forced = forcing != nullptr;
  LinearState s = init;
  tr.states.push_back(s);
  const long steps = std::lround(opts.t_final / opts.dt);
  for (long k = 1; k <= steps; ++k) {
    stepper.step(s, forcing);
    s.t = k * opts.dt;
    double mag = s.Phi.cwiseAbs().maxCoeff() + s.w.cwiseAbs().maxCoeff();
    if (!std::isfinite(mag) || mag > opts.overflow) throw Error(Errc::overflow, "state exceeded the overflow guard");
    if (k % opts.output_every == 0 || k == steps) tr.states.push_back(s);
  }
  return tr;
}

double frak_e(const QuadraticForms& f, const Vec& Phi, const Vec& w) {
  Eigen::SimplicialLLT<SpMat> gram(f.J);
  if (gram.info() != Eigen::Success) throw Error(Errc::gram_fail, "J is not positive definite");
  Vec wt = gram.solve(f.E0 * Phi / (4 * kPi) - f.E1 * w);
  return norm0_squared(f, Phi, w) + 2 * kPi * form(f.G, w) + 2 * kPi * form(f.J, wt);
}

namespace {

// frak E with prescribed time derivatives
double frak_e_with(const QuadraticForms& f, const Vec& Phi, const Vec& w, const Vec& Phi_t, const Vec& w_t) {
  return norm0_squared(f, Phi, w) + form(f.G, Phi_t) / (8 * kPi) + 2 * kPi * form(f.J, w_t);
}

}  // namespace

double mild_constant(const QuadraticForms& f, const FirstOrderTrajectory& traj, double lambda) {
  if (traj.states.empty()) throw Error(Errc::incomplete_trajectory, "empty trajectory");
  const auto& s0 = traj.states.front();
  double e = frak_e(f, s0.Phi, s0.w);
  if (!(e > 0)) return 0.0;
  double c = 0;
  for (const auto& s : traj.states)
    c = std::max(c, std::sqrt(norm0_squared(f, s.Phi, s.w)) * std::exp(-lambda * (s.t - s0.t)) / std::sqrt(e));
  return c;
}

OperatorValues apply_operators(const StationaryStar& star, const FeFunction& Phi, const FeFunction& w,
                               const std::vector<double>& zs) {
  const double gamma = star.params.gamma, eps = star.params.shear_visc, delta = star.params.bulk_visc;
  const double nu = 4 * eps / 3 + delta;
  OperatorValues out;
  for (double z : zs) {
    if (!(z > 0 && z < star.radius)) throw Error(Errc::invalid_argument, "operators are evaluated at interior radii");
    double rho = star.rho(z), P = star.pressure(z), dP = star.dpressure(z);
    double z2 = z * z, z3 = z2 * z;
    double p = Phi.value(z), dp = Phi.deriv(z), d2p = Phi.deriv2(z);
    double dw = w.deriv(z), d2w = w.deriv2(z);
    out.z.push_back(z);
    out.L1w.push_back(rho * dw / z2);
    // (gamma P0 Phi' / (4 pi z^2))'
    double flux = gamma * (dP * dp + P * d2p) / (4 * kPi * z2) - gamma * P * dp / (2 * kPi * z3);
    out.L2sigma.push_back(z2 / rho * flux - dP * p / (kPi * z * rho));
    out.L3w.push_back(-(z2 / rho) * nu * (d2w / z2 - 2 * dw / z3));
  }
  const double R = star.radius;
  double wv = w.value(R), wd = w.deriv(R);
  out.Bw = -(4 * eps / 3) * (wd / (R * R) - 3 * wv / (R * R * R)) - delta * wd / (R * R);
  return out;
}

CorrectorCheck boundary_corrector(const StationaryStar& star, const RadialGrid& grid, double nb) {
  const double delta = star.params.bulk_visc;
  if (!(delta > 0)) throw Error(Errc::bulk_viscosity_required, "the corrector divides by delta");
  CorrectorCheck c;
  const double k = -nb / (3 * delta);
  c.psi = interpolate(grid, [k](double z) { return k * z * z * z; }, [k](double z) { return 3 * k * z * z; });
  FeFunction psi{&grid, c.psi};
  FeFunction zero{&grid, Vec::Zero(grid.dofs())};
  std::vector<double> zs;
  const auto& r0 = star.mass_grid.r0;
  for (std::size_t i = 1; i + 1 < r0.size(); ++i) zs.push_back(r0[i]);
  OperatorValues ops = apply_operators(star, zero, psi, zs);
  const double nu = 4 * star.params.shear_visc / 3 + delta;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    double z = zs[i];
    double scale = z * z / star.rho(z) * nu * (std::abs(psi.deriv2(z)) / (z * z) + 2 * std::abs(psi.deriv(z)) / (z * z * z));
    if (scale > 0) c.L3_rel = std::max(c.L3_rel, std::abs(ops.L3w[i]) / scale);
    c.L1_defect = std::max(c.L1_defect, std::abs(ops.L1w[i] + nb * star.rho(zs[i]) / delta));
  }
  c.B_value = ops.Bw;
  return c;
}

DuhamelReport duhamel_residual(const StationaryStar& star, const QuadraticForms& f, const FirstOrderTrajectory& traj,
                               const Forcing& forcing, double lambda) {
  const auto& st = traj.states;
  if (st.size() < 2 || !traj.forced) throw Error(Errc::incomplete_trajectory, "forced trajectory required");
  const double dt = traj.dt;
  for (std::size_t n = 0; n < st.size(); ++n)
    if (std::abs(st[n].t - (st.front().t + n * dt)) > 1e-9 * std::max(1.0, st[n].t))
      throw Error(Errc::incomplete_trajectory, "states must be recorded at every step");
  if (!forcing.nb || !forcing.nb_dot || !forcing.nb_ddot)
    throw Error(Errc::incomplete_trajectory, "boundary forcing and its derivatives must be recorded");
  const double delta = star.params.bulk_visc;
  if (!(delta > 0)) throw Error(Errc::bulk_viscosity_required, "the corrector divides by delta");
  const std::size_t m = f.J.rows();
  const Vec c3 = cube_free(f.grid);
  const Vec phi3 = (4 * kPi / 3) * c3;
  FirstOrderStepper P(f, dt);
  const double t0 = st.front().t;

  auto fphi = [&](double t) { return forcing.fphi ? forcing.fphi(t) : Vec(Vec::Zero(m)); };
  auto n2 = [&](double t) { return forcing.n2 ? forcing.n2(t) : Vec(Vec::Zero(m)); };
  // forcing of the homogeneous-boundary system for w - psi
  auto G = [&](double t) {
    return std::make_pair(Vec(fphi(t) + (forcing.nb(t) / delta) * phi3),
                          Vec(n2(t) + (forcing.nb_dot(t) / (3 * delta)) * c3));
  };
  auto psi = [&](double t) { return Vec((-forcing.nb(t) / (3 * delta)) * c3); };

  Vec Hp = st.front().Phi, Hw = st.front().w - psi(t0);
  // variation of parameters with the midpoint rule in s: D_n = S D_{n-1} + dt (I - dt L / 2)^{-1} G(t_{n-1/2})
  Vec Dp = Vec::Zero(m), Dw = Vec::Zero(m);
  auto [G0p, G0w] = G(t0);
  Vec Bp = G0p, Bw = G0w;
  // profiles used to measure the propagation constant
  Vec Up = phi3, Uw = Vec::Zero(m), Vp = Vec::Zero(m), Vw = c3 / 3;
  double e_G0 = frak_e(f, G0p, G0w), e_U = frak_e(f, Up, Uw), e_V = frak_e(f, Vp, Vw);
  double c_prop = 0;
  auto track = [&](double t, const Vec& p, const Vec& w, double e) {
    if (e > 0) c_prop = std::max(c_prop, std::sqrt(norm0_squared(f, p, w)) * std::exp(-lambda * t) / std::sqrt(e));
  };
  track(0, Bp, Bw, e_G0);
  track(0, Up, Uw, e_U);
  track(0, Vp, Vw, e_V);

  DuhamelReport rep;
  std::vector<double> lhs(st.size());
  std::vector<double> en(st.size()), nbs(st.size());
  auto scale_of = [&](double t) {
    double h = 1e-5 * std::max(1.0, std::abs(t));
    Vec fp = fphi(t), nn = n2(t);
    Vec fpt = (fphi(t + h) - fphi(t - h)) / (2 * h), nnt = (n2(t + h) - n2(t - h)) / (2 * h);
    return std::sqrt(std::max(0.0, frak_e_with(f, fp, nn, fpt, nnt)));
  };
  for (std::size_t n = 0; n < st.size(); ++n) {
    double t = t0 + n * dt;
    if (n > 0) {
      P.propagate(Hp, Hw);
      P.propagate(Dp, Dw);
      P.propagate(Bp, Bw);
      P.propagate(Up, Uw);
      P.propagate(Vp, Vw);
      auto [gp, gw] = G(t - 0.5 * dt);
      LinearState inc{0.0, Vec::Zero(m), Vec::Zero(m)};
      Forcing local;
      local.fphi = [&gp](double) { return gp; };
      local.n2 = [&gw](double) { return gw; };
      P.step(inc, &local);
      Dp += inc.Phi;
      Dw += inc.w;
      track(t - t0, Bp, Bw, e_G0);
      track(t - t0, Up, Uw, e_U);
      track(t - t0, Vp, Vw, e_V);
    }
    Vec rp = Hp + Dp, rw = Hw + Dw + psi(t);
    double d = std::sqrt(norm0_squared(f, st[n].Phi - rp, st[n].w - rw));
    double size = std::sqrt(norm0_squared(f, st[n].Phi, st[n].w));
    rep.t.push_back(t);
    rep.defect.push_back(d);
    rep.max_defect = std::max(rep.max_defect, d);
    if (size > 0) rep.max_rel_defect = std::max(rep.max_rel_defect, d / size);
    lhs[n] = std::sqrt(norm0_squared(f, st[n].Phi - Hp, st[n].w - Hw));
    en[n] = scale_of(t);
    nbs[n] = std::abs(forcing.nb(t)) + std::abs(forcing.nb_dot(t)) + std::abs(forcing.nb_ddot(t));
  }
  double a = std::sqrt(form(f.G, phi3) / (8 * kPi));
  double b = std::sqrt(2 * kPi * form(f.J, c3 / 3) + 2 * kPi * form(f.E1, c3 / 3) + form(f.G, phi3) / (8 * kPi));
  double cc = std::sqrt(2 * kPi * form(f.J, c3 / 3));
  double cb = std::sqrt(norm0_squared(f, Vec::Zero(m), c3 / 3));
  rep.C = std::max({c_prop, cb, c_prop * std::max({a, b, cc})});
  // right side by the trapezoid rule in s
  for (std::size_t n = 0; n < st.size(); ++n) {
    double t = t0 + n * dt;
    double i1 = 0, i3 = 0;
    for (std::size_t k = 0; k <= n && n > 0; ++k) {
      double wk = (k == 0 || k == n) ? 0.5 : 1.0;
      double ex = std::exp(lambda * (t - (t0 + k * dt)));
      i1 += wk * dt * ex * en[k];
      i3 += wk * dt * ex * nbs[k];
    }
    double rhs = rep.C * i1 + rep.C / delta * std::abs(forcing.nb(t)) + rep.C / delta * i3;
    rep.me01_lhs.push_back(lhs[n]);
    rep.me01_rhs.push_back(rhs);
    if (lhs[n] > rhs * (1 + 1e-9) + 1e-14) rep.me01_holds = false;
  }
  return rep;
}

GrowthFit measure_growth_rate(const std::vector<double>& t, const std::vector<double>& value, double t0, double t1) {
  if (t.size() != value.size()) throw Error(Errc::invalid_argument, "series length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t0 || t[i] > t1) continue;
    if (!(value[i] > 0)) throw Error(Errc::log_domain_error, "non-positive sample in the fit window");
    xs.push_back(t[i]);
    ys.push_back(std::log(value[i]));
  }
  if (xs.size() < 10) throw Error(Errc::invalid_argument, "fewer than 10 samples in the fit window");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  GrowthFit g;
  g.samples = xs.size();
  g.rate = sxy / sxx;
  g.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return g;
}

void state_on_mass_grid(const StationaryStar& star, const RadialGrid& grid, const Vec& Phi, const Vec& w,
                        std::vector<double>& sigma, std::vector<double>& w_x) {
  FeFunction p{&grid, expand(grid, Phi)}, q{&grid, expand(grid, w)};
  const auto& mm = star.mass_grid;
  sigma.assign(mm.x.size(), 0.0);
  w_x.assign(mm.x.size(), 0.0);
  const double z_in = grid.z_min;
  for (std::size_t i = 0; i < mm.x.size(); ++i) {
    double z = mm.r0[i];
    double dz2 = z > 0 ? p.deriv(z) / (z * z) : p.deriv(z_in) / (z_in * z_in);
    sigma[i] = mm.rho0[i] * dz2 / (4 * kPi);
    w_x[i] = z > 0 ? q.value(z) : 0.0;
  }
}

}  // namespace vstar
