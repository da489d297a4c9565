// One line per acceptance criterion; exit status 1 if any fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vstar/emden.hpp"
#include "vstar/error.hpp"
#include "vstar/fem.hpp"
#include "vstar/linear.hpp"
#include "vstar/mode.hpp"
#include "vstar/nonlinear.hpp"

using namespace vstar;
using std::numbers::pi;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

// C1 (delta = 1) and C2 from an independent Lane-Emden integration with the moment integrals carried along
struct BoundOracle {
  double gamma, C1, C2;
};
constexpr BoundOracle kOracle[] = {
    {1.22, 15715.8600829235, 0.126862037847244},
    {1.25, 1854.93868859255, 0.149066554478935},
    {1.30, 465.313154967537, 0.0874033257021546},
};

struct Case125 {
  StationaryStar star;
  QuadraticForms forms;
  FixedPoint fp;
};

const Case125& case125() {
  static const Case125 c = [] {
    Case125 r;
    r.star = build_star(PolytropeParams{});
    r.forms = assemble_forms(r.star, build_grid(r.star, 128, {1.0, 1.0}));
    r.fp = find_fixed_point(r.star, r.forms);
    return r;
  }();
  return c;
}

Vec cube(const RadialGrid& g) {
  return interpolate(g, [](double z) { return z * z * z; }, [](double z) { return 3 * z * z; });
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= x.size();
  my /= x.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

Outcome criterion1() {
  Outcome o;
  auto e1 = integrate_emden(1.0, 1e-12);
  double zero_err = e1.first_zero ? std::abs(*e1.first_zero - pi) : INFINITY;
  o.require(zero_err < 1e-8, "n=1 zero");
  auto e5 = integrate_emden(5.0, 1e-12);
  double sup = 0;
  for (int k = 0; k <= 20000; ++k) {
    double x = 10.0 * k / 20000;
    sup = std::max(sup, std::abs(e5.theta_at(x) - 1 / std::sqrt(1 + x * x / 3)));
  }
  o.require(sup < 1e-8, "n=5 profile");
  o.note(fmt::format("|xi1 - pi| = {:.2e}, n=5 sup error {:.2e}", zero_err, sup));
  return o;
}

Outcome criterion2() {
  Outcome o;
  auto g = make_grid(1.0, 64, {1.0, 1.0});
  auto a = hardy_verify([](double z) { return z * z; }, [](double z) { return 2 * z; }, 2.0, g);
  auto b = hardy_verify([](double z) { return z * z * z; }, [](double z) { return 3 * z * z; }, 2.0, g);
  o.require(std::abs(a.lhs / a.rhs - 9.0 / 16.0) < 1e-12 && a.holds, "z^2 ratio 9/16");
  o.require(std::abs(b.lhs / b.rhs - 0.25) < 1e-12 && b.holds, "z^3 ratio 1/4");
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> N(0.0, 1.0);
  int violations = 0, mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    double p = N(rng), q = N(rng), r = N(rng);
    auto h = hardy_verify([=](double z) { return p * z * z + q * z * z * z + r * z * z * z * z; },
                          [=](double z) { return 2 * p * z + 3 * q * z * z + 4 * r * z * z * z; }, 2.0, g);
    double lhs = p * p + p * q + (q * q + 2 * p * r) / 3 + q * r / 2 + r * r / 5;
    double rhs = 4.0 / 9.0 * (4 * p * p + 6 * p * q + (9 * q * q + 16 * p * r) / 3 + 6 * q * r + 16 * r * r / 5);
    if (std::abs(h.lhs - lhs) > 1e-10 * lhs || std::abs(h.rhs - rhs) > 1e-10 * rhs) ++mismatches;
    if (!h.holds || h.sup_value > h.sup_bound) ++violations;
  }
  o.require(violations == 0, "random polynomial violations");
  o.require(mismatches == 0, "random polynomial integrals");
  o.note(fmt::format("ratios {:.12f} {:.12f}, 100 random: {} violations", a.lhs / a.rhs, b.lhs / b.rhs, violations));
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto& c = case125();
  Vec t = restrict_free(c.forms.grid, cube(c.forms.grid));
  const double C1 = kOracle[1].C1 * c.star.params.bulk_visc, C2 = kOracle[1].C2;
  double worst = 0;
  for (double s : {0.05, 0.5, 5.0}) {
    double rq = QuadraticForms::form(c.forms.energy(s), t) / QuadraticForms::form(c.forms.J, t);
    worst = std::max(worst, std::abs(rq - (s * C1 - C2)) / std::abs(s * C1 - C2));
  }
  o.require(worst < 1e-6, "Rayleigh quotient");
  o.note(fmt::format("max relative deviation from s C1 - C2 at s = 0.05, 0.5, 5: {:.2e}", worst));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto& c = case125();
  auto lb = lambda_lower_bound(c.star);
  auto [C3, C4] = affine_constants(c.forms);
  std::vector<EigenResult> ladder;
  for (int k = 0; k < 20; ++k) ladder.push_back(mu_of_s(c.star, c.forms, 0.01 * std::pow(200.0, k / 19.0)));
  bool mono = true, sandwich = true;
  double worst_lip = 0;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    double s = ladder[k].s_value, mu = ladder[k].mu;
    double up = s * lb.C1 - lb.C2, lo = s * C4 - C3;
    sandwich = sandwich && mu <= up + 1e-10 * std::abs(up) && mu >= lo - 1e-10 * std::abs(lo);
    if (k == 0) continue;
    mono = mono && mu > ladder[k - 1].mu;
    double slope = (mu - ladder[k - 1].mu) / (s - ladder[k - 1].s_value);
    double L = std::max(ladder[k].e1, ladder[k - 1].e1);
    // slope lies between the end-point values of E1(phi_s); consistency within a factor 2
    worst_lip = std::max(worst_lip, std::max(slope / L, L / slope));
  }
  o.require(mono, "strict monotonicity");
  o.require(sandwich, "affine sandwich");
  o.require(worst_lip <= 2.0, "Lipschitz consistency");
  o.note(fmt::format("20-point ladder on [0.01, 2]: monotone, sandwiched, slope vs max E1 within factor {:.3f}",
                     worst_lip));
  return o;
}

Outcome criterion5() {
  Outcome o;
  for (const auto& orc : kOracle) {
    PolytropeParams p;
    p.gamma = orc.gamma;
    auto star = build_star(p);
    auto f1 = assemble_forms(star, build_grid(star, 128, {1.0, 1.0}));
    auto f2 = assemble_forms(star, build_grid(star, 256, {1.0, 1.0}));
    FixedPointOptions fo;
    fo.tol = 1e-10;
    auto fp1 = find_fixed_point(star, f1, fo);
    auto fp2 = find_fixed_point(star, f2, fo);
    double lam = fp1.lambda;
    double eq_res = std::abs(lam * lam + mu_of_s(star, f1, lam).mu) / (lam * lam);
    auto lb = lambda_lower_bound(star);
    double shift = std::abs(fp2.lambda - lam) / fp2.lambda;
    o.require(eq_res < 1e-8, fmt::format("fixed point equation at gamma {}", orc.gamma));
    o.require(lam >= lb.bound, fmt::format("lower bound at gamma {}", orc.gamma));
    o.require(shift < 5e-3, fmt::format("refinement shift at gamma {}", orc.gamma));
    o.note(fmt::format("gamma {}: lambda {:.9f} (bound {:.3e}, residual {:.1e}, 2x-mesh shift {:.2e})", orc.gamma,
                       lam, lb.bound, eq_res, shift));
  }
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto& c = case125();
  const auto& s = c.star;
  std::vector<double> res;
  for (int ne : {32, 64, 128}) {
    auto F = assemble_forms(s, build_grid(s, ne, {1.0, 1.0}));
    res.push_back(growing_mode_residual(s, reconstruct_mode(s, F, find_fixed_point(s, F))));
  }
  double r1 = res[0] / res[1], r2 = res[1] / res[2];
  // strong residual of a C1 cubic approximation loses two orders: h^2 gives ratio 4 per halving
  o.require(r1 > 3 && r2 > 3, "residual decay");
  auto gm = reconstruct_mode(s, c.forms, c.fp);
  o.require(std::abs(gm.sigma_surface) < 1e-12 && gm.v_origin == 0.0, "endpoint values");
  bool finite = true;
  for (double v : gm.gm03) finite = finite && std::isfinite(v);
  o.require(finite, "finite integrals");
  auto phi = gm.phi();
  std::vector<double> lz, lp, ld;
  for (double z : gm.grid.nodes)
    if (z >= gm.grid.z_min && z <= 0.05 * s.radius) {
      lz.push_back(std::log(z));
      lp.push_back(std::log(std::abs(phi.value(z))));
      ld.push_back(std::log(std::abs(phi.deriv(z))));
    }
  double e_phi = loglog_slope(lz, lp), e_dphi = loglog_slope(lz, ld);
  o.require(std::abs(e_phi / 3 - 1) < 0.05 && std::abs(e_dphi / 2 - 1) < 0.05, "near-origin exponents");
  const double lam = c.fp.lambda, R = c.forms.grid.radius;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = INFINITY;
  for (int k = 0; k < 50; ++k) {
    double a = U(rng), b = U(rng), cc = U(rng);
    Vec coeffs = interpolate(
        c.forms.grid, [&](double z) { double t = z / R; return z * z * z * (a + b * t + cc * t * t); },
        [&](double z) { double t = z / R; return z * z * (3 * a + 4 * b * t + 5 * cc * t * t); });
    double scale = std::sqrt(QuadraticForms::form(c.forms.J, restrict_free(c.forms.grid, coeffs)));
    worst = std::min(worst, variational_margin(c.forms, lam, coeffs / scale));
  }
  o.require(worst >= -1e-8, "variational inequality");
  o.note(fmt::format("residual ratios {:.2f} {:.2f}, exponents {:.4f} {:.4f}, min margin over 50 trials {:.3e}", r1, r2,
                     e_phi, e_dphi, worst));
  return o;
}

Outcome criterion7() {
  Outcome o;
  // same setup as the linear-evolution tests
  auto star = build_star(PolytropeParams{});
  auto F = assemble_forms(star, build_grid(star, 96, {1.0, 1.0}));
  auto fp = find_fixed_point(star, F);
  const double lam = fp.lambda, C0 = 2 * sup_x_over_r3(star);
  const Vec& phi = fp.eig.phi;
  EvolveOptions opts{0.05 / lam, 5.0 / lam, 1};
  auto modal = evolve_second_order(F, phi, lam * phi, opts);
  double n0 = norm1(F, phi), amp = 0;
  for (const auto& st : modal.states) amp = std::max(amp, std::abs(norm1(F, st.phi) / (std::exp(lam * st.t) * n0) - 1));
  o.require(amp < 0.01, "modal amplitude");

  auto rep = verify_growth_bounds(F, modal, lam, C0);
  int bound_failures = rep.all() ? 0 : 1;
  double energy = 0;
  // per-step defect of the energy balance against the largest energy along the run
  auto energy_defect = [&](const SecondOrderTrajectory& tr) {
    double scale = 0, w = 0;
    for (const auto& st : tr.states)
      scale = std::max(scale, kinetic_energy(F, st.phi_dot) + std::abs(potential_energy(F, st.phi)));
    for (double d : tr.energy_defect) w = std::max(w, std::abs(d) / scale);
    return w;
  };
  energy = energy_defect(modal);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> U(-1, 1);
  const double R = F.grid.radius;
  auto random_poly = [&] {
    double a = U(rng), b = U(rng), c = U(rng);
    Vec full = interpolate(
        F.grid, [&](double z) { double t = z / R; return z * z * z * (a + b * t + c * t * t); },
        [&](double z) { double t = z / R; return z * z * (3 * a + 4 * b * t + 5 * c * t * t); });
    Vec v = restrict_free(F.grid, full);
    return Vec(v / std::sqrt(QuadraticForms::form(F.J, v)));
  };
  EvolveOptions ropts{0.05 / lam, 5.0 / lam, 5};
  for (int k = 0; k < 5; ++k) {
    Vec a = random_poly(), b = random_poly();
    auto tr = evolve_second_order(F, a, b, ropts);
    if (!verify_growth_bounds(F, tr, lam, C0).all()) ++bound_failures;
    energy = std::max(energy, energy_defect(tr));
  }
  // the implicit midpoint rule conserves the discrete energy balance exactly, so "scheme order" is round-off
  o.require(energy < 1e-10, "discrete energy identity");
  o.require(bound_failures == 0, "growth estimates");

  PolytropeParams p;
  p.bulk_visc = 1.0;
  auto st1 = build_star(p);
  auto corr = boundary_corrector(st1, build_grid(st1, 64, {1.0, 1.0}), 1.0);
  bool corr_ok = std::abs(corr.B_value - 1) < 1e-10 && corr.L3_rel < 1e-12 && corr.L1_defect < 1e-13;
  o.require(corr_ok, "boundary corrector");
  o.note(fmt::format("modal deviation {:.2e}, energy defect {:.1e}, bounds hold for modal + 5 random, corrector "
                     "|B-1| {:.1e} L3 {:.1e} L1 {:.1e}",
                     amp, energy, std::abs(corr.B_value - 1), corr.L3_rel, corr.L1_defect));
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto& c = case125();
  auto gm = reconstruct_mode(c.star, c.forms, c.fp);
  auto eq = discrete_equilibrium(c.star, 256);
  const double lam = gm.lambda;

  InstabilityOptions base;
  base.iota = 1e-6;
  base.theta0 = 1e-3;
  auto r = run_instability(c.star, eq, gm, base);
  double rate_err = r.fit_valid ? std::abs(r.fit.rate / lam - 1) : INFINITY;
  o.require(rate_err < 0.05, "growth rate");

  InstabilityOptions half = base;
  half.iota = base.iota / 2;
  auto rh = run_instability(c.star, eq, gm, half);
  double dT = rh.escape_time - r.escape_time, dT_err = std::abs(dT * lam / std::log(2.0) - 1);
  o.require(dT_err < 0.1, "halving iota");

  std::vector<double> L, T;
  for (double iota : {1e-5, 1e-6, 1e-7}) {
    InstabilityOptions s = base;
    s.iota = iota;
    L.push_back(std::log(1 / iota));
    T.push_back(iota == 1e-6 ? r.escape_time : run_instability(c.star, eq, gm, s).escape_time);
  }
  double slope = loglog_slope(L, T), slope_err = std::abs(slope * lam - 1);
  o.require(slope_err < 0.1, "sweep slope");

  Simulator sim(eq, SimOptions{});
  FluidState st = equilibrium_state(eq);
  const double dt = sim.stable_dt(st);
  const double vscale = std::sqrt(eq.params.entropy_k * std::pow(eq.mass, eq.params.gamma - 1));
  double vmax = 0;
  for (int k = 0; k < 1000; ++k) {
    sim.step(st, dt);
    for (double v : st.v) vmax = std::max(vmax, std::abs(v));
  }
  o.require(vmax <= 1e-10 * vscale, "equilibrium preservation");

  double bal = 0;
  for (const auto& b : energy_balance_residual(r.rows)) bal = std::max(bal, std::abs(b.residual) / b.dissipation);
  o.require(bal < 0.1, "energy balance");
  o.note(fmt::format("rate {:.5f} vs lambda {:.5f} ({:+.2f}%), halving dT {:.3f} vs {:.3f}, sweep slope {:.3f} vs "
                     "{:.3f}, equilibrium vmax {:.1e}, balance/dissipation {:.1e} at CFL 0.5",
                     r.fit.rate, lam, 100 * (r.fit.rate / lam - 1), dT, std::log(2.0) / lam, slope, 1 / lam,
                     vmax / vscale, bal));
  return o;
}

}  // namespace

int main() {
  struct Item {
    int id;
    double budget;  // seconds
    std::function<Outcome()> run;
  };
  const Item items[] = {{1, 1, criterion1},   {2, 5, criterion2},   {3, 5, criterion3},   {4, 60, criterion4},
                        {5, 300, criterion5}, {6, 120, criterion6}, {7, 300, criterion7}, {8, 1800, criterion8}};
  int failed = 0;
  for (const auto& it : items) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > it.budget) o.require(false, fmt::format("runtime {:.1f} s over {} s", secs, it.budget));
    if (!o.pass) ++failed;
    fmt::print("criterion {}: {} ({:.2f} s) {}\n", it.id, o.pass ? "PASS" : "FAIL", secs, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of 8 criteria passed\n", 8 - failed);
  return failed ? 1 : 0;
}
