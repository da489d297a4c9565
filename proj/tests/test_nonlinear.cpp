#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vstar/error.hpp"
#include "vstar/nonlinear.hpp"

using namespace vstar;

namespace {

struct Setup {
  StationaryStar star;
  GrowingMode mode;
  DiscreteStar eq;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup r;
    r.star = build_star(PolytropeParams{});
    QuadraticForms forms = assemble_forms(r.star, build_grid(r.star, 128, {1.0, 1.0}));
    r.mode = reconstruct_mode(r.star, forms, find_fixed_point(r.star, forms));
    r.eq = discrete_equilibrium(r.star, 256);
    return r;
  }();
  return s;
}

std::vector<double> sigma_over_iota(const DiscreteStar& eq, const FluidState& s, double iota) {
  std::vector<double> q(eq.cells());
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = (s.rho[j] / eq.rho0[j] - 1) / iota;
  return q;
}

}  // namespace

TEST_CASE("discrete equilibrium balances pressure and gravity") {
  const auto& s = setup();
  CHECK(s.eq.residual < 1e-11);
  CHECK(std::abs(s.eq.mass - s.star.mass) / s.star.mass < 1e-8);
  CHECK(std::abs(s.eq.radius - s.star.radius) / s.star.radius < 0.02);
  FluidState st = equilibrium_state(s.eq);
  CHECK(mass_defect(s.eq, st) < 1e-13);
  for (std::size_t i = 1; i < st.r.size(); ++i) REQUIRE(st.r[i] > st.r[i - 1]);
}

TEST_CASE("equilibrium is preserved over 1000 steps") {
  const auto& s = setup();
  Simulator sim(s.eq, SimOptions{});
  FluidState st = equilibrium_state(s.eq);
  const double dt = sim.stable_dt(st);
  const double vscale = std::sqrt(s.eq.params.entropy_k * std::pow(s.eq.mass, s.eq.params.gamma - 1));
  double vmax = 0;
  for (int k = 0; k < 1000; ++k) {
    sim.step(st, dt);
    for (double v : st.v) vmax = std::max(vmax, std::abs(v));
  }
  CHECK(vmax <= 1e-10 * vscale);
  CHECK(mass_defect(s.eq, st) < 1e-12);
  EnergyReport rep = energy_report(sim, st);
  CHECK(rep.e0() < 1e-24);
  CHECK(sim.clips() == 0);
}

TEST_CASE("free fall: one pressureless inviscid step is the gravity kick") {
  const auto& s = setup();
  SimOptions o;
  o.pressure = false;
  o.viscosity = false;
  for (double dt : {1e-2, 1e-3}) {
    Simulator sim(s.eq, o);
    FluidState st = equilibrium_state(s.eq);
    const FluidState before = st;
    sim.step(st, dt);
    double worst_exact = 0, worst_first = 0;
    for (std::size_t i = 1; i < st.v.size(); ++i) {
      double g0 = s.eq.x[i] / (before.r[i] * before.r[i]);
      double g1 = s.eq.x[i] / (st.r[i] * st.r[i]);
      // half kick at the old and at the new radius around a drift
      worst_exact = std::max(worst_exact, std::abs(st.v[i] + 0.5 * dt * (g0 + g1)) / (dt * g0));
      worst_first = std::max(worst_first, std::abs(st.v[i] + dt * g0) / (dt * g0));
      REQUIRE(st.r[i] == doctest::Approx(before.r[i] - 0.5 * dt * dt * g0).epsilon(1e-14));
    }
    CHECK(worst_exact < 1e-14);
    CHECK(worst_first < 1e2 * dt * dt);
  }
}

TEST_CASE("modal initial data") {
  const auto& s = setup();
  CHECK(init_state(s.eq, s.star, s.mode, 0.0).r == s.eq.r0);
  for (double iota : {1e-6, 1e-4}) {
    FluidState st = init_state(s.eq, s.star, s.mode, iota);
    CHECK(mass_defect(s.eq, st) < 1e-13);
    double a = std::sqrt(energy_e0(s.eq, st));
    CHECK(a >= 0.5 * iota);
    CHECK(a <= 2 * iota);
    CHECK(std::abs(st.r.back() - s.eq.radius) < 10 * iota * s.eq.radius);
    CHECK(st.v[0] == 0.0);
  }
  CHECK_THROWS_AS(init_state(s.eq, s.star, s.mode, 1.0), Error);
  try {
    init_state(s.eq, s.star, s.mode, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::amplitude_out_of_range);
  }
}

TEST_CASE("energy report: finite, non-negative, zero at rest") {
  const auto& s = setup();
  Simulator sim(s.eq, SimOptions{});
  EnergyReport rest = energy_report(sim, equilibrium_state(s.eq));
  CHECK(rest.e0() == 0.0);
  CHECK(rest.d0 == 0.0);
  CHECK(rest.e1 == 0.0);
  CHECK(rest.e2 < 1e-20);
  FluidState st = init_state(s.eq, s.star, s.mode, 1e-6);
  EnergyReport r = energy_report(sim, st);
  for (double v : {r.e0_v, r.e0_sigma, r.e0_r, r.d0, r.e1, r.d1, r.e2, r.d2}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0);
  }
  CHECK(std::isfinite(r.physical_energy));
  // virial theorem at rest: E = W (3 gamma - 4) / (3 gamma - 3) with W = -int x / r dx
  double W = 0;
  for (std::size_t i = 1; i < s.eq.r0.size(); ++i) W -= s.eq.node_mass[i] * s.eq.x[i] / s.eq.r0[i];
  const double g = s.eq.params.gamma;
  CHECK(rest.physical_energy == doctest::Approx(W * (3 * g - 4) / (3 * g - 3)).epsilon(1e-2));
  CHECK(r.sup_sigma < 1e-4);
}

TEST_CASE("velocity identity and inequality on the current state") {
  const auto& s = setup();
  Simulator sim(s.eq, SimOptions{});
  FluidState st = init_state(s.eq, s.star, s.mode, 1e-3);
  for (int k = 0; k < 50; ++k) sim.step(st, sim.stable_dt(st));
  VelocityIdentity id = velocity_identity(s.eq, st);
  CHECK(id.pointwise < 1e-12);
  CHECK(id.lhs > 0);
  CHECK(id.lhs <= id.rhs);
}

TEST_CASE("1 - r0/r agrees with its first-order expansion to second order") {
  const auto& s = setup();
  RadiusExpansion a = radius_expansion(s.eq, init_state(s.eq, s.star, s.mode, 1e-3));
  RadiusExpansion b = radius_expansion(s.eq, init_state(s.eq, s.star, s.mode, 5e-4));
  CHECK(a.defect / b.defect == doctest::Approx(4.0).epsilon(0.05));
  CHECK(a.defect < 10 * a.sup_s_sq);
}

TEST_CASE("small-amplitude runs agree with the linearization to O(iota)") {
  const auto& s = setup();
  const double T = 3 / s.mode.lambda, dt = 0.016;
  auto run = [&](double iota) {
    Simulator sim(s.eq, SimOptions{});
    FluidState st = init_state(s.eq, s.star, s.mode, iota);
    std::vector<std::vector<double>> out;
    while (st.t < T) {
      sim.step(st, dt);
      out.push_back(sigma_over_iota(s.eq, st, iota));
    }
    return out;
  };
  auto dev = [](const auto& a, const auto& b) {
    double m = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t j = 0; j < a[k].size(); ++j) m = std::max(m, std::abs(a[k][j] - b[k][j]));
    return m;
  };
  auto a = run(1e-5), b = run(1e-6), c = run(1e-7);
  CHECK(dev(a, b) / dev(b, c) == doctest::Approx(10.0).epsilon(0.05));
  auto h = run(5e-7), q = run(2.5e-7);
  CHECK(dev(b, h) / dev(h, q) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("modal run: growth rate, escape time, sup guard, energy balance") {
  const auto& s = setup();
  const double lam = s.mode.lambda;
  InstabilityOptions o;
  InstabilityResult r = run_instability(s.star, s.eq, s.mode, o);
  REQUIRE(r.fit_valid);
  CHECK(std::abs(r.fit.rate / lam - 1) < 0.05);
  CHECK(r.fit.r2 > 0.999);
  CHECK(std::abs(r.escape_time / r.predicted_escape - 1) < 0.1);
  CHECK(r.sup_sigma_max <= 0.5);
  CHECK(r.sup_r_max <= 0.5);
  CHECK(r.valid());
  CHECK(r.max_mass_defect < 1e-12);

  // per-step growth of sigma in the linear regime
  const auto& rows = r.rows;
  std::size_t k0 = 0;
  while (rows[k0].t < 1 / lam) ++k0;
  double g = std::log(std::sqrt(rows[k0 + 20].E0sigma / rows[k0].E0sigma)) / (rows[k0 + 20].t - rows[k0].t);
  CHECK(std::abs(g / lam - 1) < 0.05);

  for (const auto& b : energy_balance_residual(rows)) {
    REQUIRE(b.dissipation > 0);
    CHECK(std::abs(b.residual) < 0.1 * b.dissipation);
  }

  InstabilityOptions half = o;
  half.iota = o.iota / 2;
  InstabilityResult r2 = run_instability(s.star, s.eq, s.mode, half);
  CHECK(std::abs((r2.escape_time - r.escape_time) * lam / std::log(2.0) - 1) < 0.1);
}

TEST_CASE("energy balance residual shrinks with the time step") {
  const auto& s = setup();
  auto worst = [&](double cfl) {
    InstabilityOptions o;
    o.iota = 1e-4;
    o.sim.cfl = cfl;
    o.record_every = static_cast<int>(std::lround(5 / cfl));
    auto r = run_instability(s.star, s.eq, s.mode, o);
    double w = 0;
    for (const auto& b : energy_balance_residual(r.rows)) w = std::max(w, std::abs(b.residual) / b.dissipation);
    return w;
  };
  double a = worst(0.5), b = worst(0.25);
  CHECK(a < 0.1);
  CHECK(b < 0.7 * a);
}

TEST_CASE("stronger viscosity dissipates faster and the balance still closes") {
  PolytropeParams p;
  p.shear_visc = p.bulk_visc = 0.05;
  StationaryStar star = build_star(p);
  DiscreteStar eq = discrete_equilibrium(star, 128);
  const auto& s = setup();
  auto dissipation_ratio = [&](const DiscreteStar& e) {
    Simulator sim(e, SimOptions{});
    FluidState st = init_state(e, s.star, s.mode, 1e-5);
    double dt = sim.stable_dt(st), Q = 0, dE = 0, K0 = 0;
    for (std::size_t i = 0; i < st.v.size(); ++i) K0 += 0.5 * e.node_mass[i] * st.v[i] * st.v[i];
    double res = 0;
    for (int k = 0; k < 5; ++k) {
      double d0 = sim.dissipation(st, st.v);
      auto info = sim.step(st, dt);
      double d1 = sim.dissipation(st, st.v);
      Q += 0.5 * dt * (d0 + d1);
      dE += info.dE;
      res = std::max(res, std::abs(info.dE / dt + 0.5 * (d0 + d1)) / (0.5 * (d0 + d1)));
    }
    return std::pair{-dE / K0, res};
  };
  auto weak = dissipation_ratio(discrete_equilibrium(s.star, 128));
  auto strong = dissipation_ratio(eq);
  CHECK(weak.first > 0);
  CHECK(strong.first > 2 * weak.first);
  CHECK(strong.second < 0.1);
  CHECK(weak.second < 0.1);
}

TEST_CASE("no escape before t_max is reported") {
  const auto& s = setup();
  InstabilityOptions o;
  o.t_max = 5.0;
  try {
    run_instability(s.star, s.eq, s.mode, o);
    FAIL("expected no-escape");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_escape);
  }
}

TEST_CASE("escape time grows like ln(1/iota) / lambda") {
  const auto& s = setup();
  std::vector<double> L, T;
  for (double iota : {1e-5, 1e-6, 1e-7}) {
    InstabilityOptions o;
    o.iota = iota;
    L.push_back(std::log(1 / iota));
    T.push_back(run_instability(s.star, s.eq, s.mode, o).escape_time);
  }
  double lbar = (L[0] + L[1] + L[2]) / 3, tbar = (T[0] + T[1] + T[2]) / 3, num = 0, den = 0;
  for (int k = 0; k < 3; ++k) {
    num += (L[k] - lbar) * (T[k] - tbar);
    den += (L[k] - lbar) * (L[k] - lbar);
  }
  CHECK(std::abs(num / den * s.mode.lambda - 1) < 0.1);
}
