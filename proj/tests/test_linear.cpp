#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "vstar/error.hpp"
#include "vstar/linear.hpp"
#include "vstar/mode.hpp"

using namespace vstar;

namespace {

constexpr double kPi = std::numbers::pi;

struct Setup {
  StationaryStar star;
  QuadraticForms forms;
  FixedPoint fp;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup r;
    r.star = build_star(PolytropeParams{});
    r.forms = assemble_forms(r.star, build_grid(r.star, 96, {1.0, 1.0}));
    r.fp = find_fixed_point(r.star, r.forms);
    return r;
  }();
  return s;
}

// smooth admissible data z^3 (a + b t + c t^2), t = z / R, J-normalized
Vec random_poly(const QuadraticForms& f, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  double a = U(rng), b = U(rng), c = U(rng), R = f.grid.radius;
  Vec full = interpolate(
      f.grid, [&](double z) { double t = z / R; return z * z * z * (a + b * t + c * t * t); },
      [&](double z) { double t = z / R; return z * z * (3 * a + 4 * b * t + 5 * c * t * t); });
  Vec v = restrict_free(f.grid, full);
  return v / std::sqrt(QuadraticForms::form(f.J, v));
}

}  // namespace

TEST_CASE("second order: zero data stays zero") {
  const auto& s = setup();
  Vec z = Vec::Zero(s.forms.J.rows());
  auto tr = evolve_second_order(s.forms, z, z, {0.1, 2.0, 1});
  for (const auto& st : tr.states) {
    CHECK(st.phi.norm() == 0.0);
    CHECK(st.phi_dot.norm() == 0.0);
  }
}

TEST_CASE("second order: modal data grows like exp(lambda t)") {
  const auto& s = setup();
  const double lam = s.fp.lambda;
  const Vec& phi = s.fp.eig.phi;
  EvolveOptions o{0.05 / lam, 5.0 / lam, 4};
  auto tr = evolve_second_order(s.forms, phi, lam * phi, o);
  double n0 = norm1(s.forms, phi), worst = 0;
  std::vector<double> t, v;
  for (const auto& st : tr.states) {
    double ratio = norm1(s.forms, st.phi) / (std::exp(lam * st.t) * n0);
    worst = std::max(worst, std::abs(ratio - 1));
    t.push_back(st.t);
    v.push_back(norm1(s.forms, st.phi));
  }
  CHECK(worst < 0.01);
  auto fit = measure_growth_rate(t, v, 0.0, 5.0 / lam);
  CHECK(fit.rate == doctest::Approx(lam).epsilon(0.01));
}

TEST_CASE("second order: discrete energy identity") {
  const auto& s = setup();
  std::mt19937 rng(5);
  Vec a = random_poly(s.forms, rng), b = random_poly(s.forms, rng);
  auto tr = evolve_second_order(s.forms, a, b, {0.2, 10.0, 1});
  double scale = kinetic_energy(s.forms, b) + std::abs(potential_energy(s.forms, a));
  double worst = 0;
  for (double d : tr.energy_defect) worst = std::max(worst, std::abs(d));
  CHECK(worst < 1e-10 * scale);
}

TEST_CASE("second order: overflow guard") {
  const auto& s = setup();
  const Vec& phi = s.fp.eig.phi;
  EvolveOptions o{0.5, 200.0, 10};
  o.overflow = 1e3;
  try {
    evolve_second_order(s.forms, phi, s.fp.lambda * phi, o);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::overflow);
  }
}

TEST_CASE("growth estimates: modal, random, and sharpness") {
  const auto& s = setup();
  const double lam = s.fp.lambda, C0 = 2 * sup_x_over_r3(s.star);
  const Vec& phi = s.fp.eig.phi;
  EvolveOptions o{0.05 / lam, 5.0 / lam, 5};
  auto modal = evolve_second_order(s.forms, phi, lam * phi, o);
  auto rep = verify_growth_bounds(s.forms, modal, lam, C0);
  CHECK(rep.all());
  CHECK(verify_growth_bounds(s.forms, modal, 2 * lam, C0).all());
  CHECK_FALSE(verify_growth_bounds(s.forms, modal, 0.5 * lam, C0).all());

  std::mt19937 rng(17);
  for (int k = 0; k < 5; ++k) {
    Vec a = random_poly(s.forms, rng), b = random_poly(s.forms, rng);
    auto tr = evolve_second_order(s.forms, a, b, o);
    auto r = verify_growth_bounds(s.forms, tr, lam, C0);
    CHECK(r.holds1);
    CHECK(r.holds2);
    CHECK(r.holds3);
  }
}

TEST_CASE("operators on the growing mode and on z^3") {
  const auto& s = setup();
  const double lam = s.fp.lambda;
  const auto& g = s.forms.grid;
  FeFunction Phi{&g, expand(g, s.fp.eig.phi)};
  FeFunction w{&g, expand(g, Vec(-lam / (4 * kPi) * s.fp.eig.phi))};
  std::vector<double> zs;
  for (double z = 0.05 * s.star.radius; z < 0.9 * s.star.radius; z += 0.01 * s.star.radius) zs.push_back(z);
  auto ops = apply_operators(s.star, Phi, w, zs);
  double r1 = 0, r2 = 0, sc = 0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    double sigma = s.star.rho(zs[i]) * Phi.deriv(zs[i]) / (4 * kPi * zs[i] * zs[i]);
    r1 = std::max(r1, std::abs(lam * sigma + ops.L1w[i]) / (std::abs(ops.L1w[i]) + 1e-300));
    r2 = std::max(r2, std::abs(lam * w.value(zs[i]) + ops.L2sigma[i] + ops.L3w[i]));
    sc = std::max(sc, std::abs(lam * w.value(zs[i])) + std::abs(ops.L2sigma[i]) + std::abs(ops.L3w[i]));
  }
  CHECK(r1 < 1e-12);
  CHECK(r2 < 5e-3 * sc);

  Vec cube = interpolate(g, [](double z) { return z * z * z; }, [](double z) { return 3 * z * z; });
  FeFunction c{&g, cube}, zero{&g, Vec::Zero(g.dofs())};
  auto oc = apply_operators(s.star, zero, c, zs);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    double z = zs[i], scale = z * z / s.star.rho(z) * (6 / z + 6 / z);
    CHECK(std::abs(oc.L3w[i]) < 1e-12 * scale);
  }
  for (double v : oc.L2sigma) CHECK(v == 0.0);
  auto oz = apply_operators(s.star, zero, zero, zs);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    CHECK(oz.L1w[i] == 0.0);
    CHECK(oz.L3w[i] == 0.0);
  }
  CHECK(oz.Bw == 0.0);
}

TEST_CASE("boundary corrector") {
  const auto& s = setup();
  auto c0 = boundary_corrector(s.star, s.forms.grid, 0.0);
  CHECK(c0.psi.norm() == 0.0);
  PolytropeParams p;
  p.bulk_visc = 1.0;
  auto st = build_star(p);
  auto g = build_grid(st, 64, {1.0, 1.0});
  auto c = boundary_corrector(st, g, 1.0);
  CHECK(c.B_value == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(c.L3_rel < 1e-12);
  CHECK(c.L1_defect < 1e-13);
  p.bulk_visc = 0.0;
  auto st0 = build_star(p);
  try {
    boundary_corrector(st0, g, 1.0);
    FAIL("expected bulk-viscosity-required");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::bulk_viscosity_required);
  }
}

TEST_CASE("first and second order forms agree") {
  // the midpoint rule commutes with the linear map (Phi, w) -> (w, w_t), so agreement is to round-off
  const auto& s = setup();
  std::mt19937 rng(23);
  Vec Phi0 = random_poly(s.forms, rng), w0 = Vec::Zero(Phi0.size());
  for (double dt : {0.4, 0.1}) {
    FirstOrderStepper P(s.forms, dt);
    EvolveOptions o{dt, 4.0, 1};
    auto a = evolve_first_order(s.forms, LinearState{0, Phi0, w0}, o);
    auto b = evolve_second_order(s.forms, w0, P.w_rate(Phi0, w0), o);
    Vec Phi = Phi0;
    double diff = 0, size = 0;
    for (std::size_t n = 1; n < b.states.size(); ++n) {
      Phi -= 4 * kPi * dt * 0.5 * (b.states[n].phi + b.states[n - 1].phi);
      diff = std::max(diff, std::sqrt(norm0_squared(s.forms, a.states[n].Phi - Phi, a.states[n].w - b.states[n].phi)));
      size = std::max(size, std::sqrt(norm0_squared(s.forms, a.states[n].Phi, a.states[n].w)));
    }
    CHECK(diff < 1e-9 * size);
  }
}

TEST_CASE("homogeneous flow: semigroup and mild constant") {
  const auto& s = setup();
  std::mt19937 rng(29);
  Vec w0 = random_poly(s.forms, rng), Phi0 = random_poly(s.forms, rng);
  EvolveOptions o{0.1, 6.0, 1};
  auto full = evolve_first_order(s.forms, LinearState{0, Phi0, w0}, o);
  EvolveOptions half{0.1, 3.0, 1};
  auto a = evolve_first_order(s.forms, LinearState{0, Phi0, w0}, half);
  auto b = evolve_first_order(s.forms, a.states.back(), half);
  double d = std::sqrt(norm0_squared(s.forms, b.states.back().Phi - full.states.back().Phi,
                                     b.states.back().w - full.states.back().w));
  CHECK(d < 1e-10 * std::sqrt(norm0_squared(s.forms, full.states.back().Phi, full.states.back().w)));
  double C = mild_constant(s.forms, full, s.fp.lambda);
  CHECK(std::isfinite(C));
  CHECK(C > 0);
}

TEST_CASE("duhamel reconstruction: zero, boundary, and modal forcing") {
  const auto& s = setup();
  const double lam = s.fp.lambda, delta = s.star.params.bulk_visc;
  const std::size_t m = s.forms.J.rows();
  std::mt19937 rng(31);
  Vec w0 = random_poly(s.forms, rng), Phi0 = random_poly(s.forms, rng);

  Forcing none;
  none.nb = [](double) { return 0.0; };
  none.nb_dot = none.nb;
  none.nb_ddot = none.nb;
  auto tr0 = evolve_first_order(s.forms, LinearState{0, Phi0, w0}, {0.1, 3.0, 1}, &none);
  auto r0 = duhamel_residual(s.star, s.forms, tr0, none, lam);
  CHECK(r0.max_rel_defect < 1e-10);
  CHECK(r0.me01_holds);

  Forcing nb = none;
  nb.nb = [delta](double) { return 1e-3 * delta; };
  auto trb = evolve_first_order(s.forms, LinearState{0, Phi0, w0}, {0.1, 3.0, 1}, &nb);
  auto rb = duhamel_residual(s.star, s.forms, trb, nb, lam);
  CHECK(rb.max_rel_defect < 1e-8);
  CHECK(rb.me01_holds);

  Forcing modal = none;
  const Vec phi = s.fp.eig.phi;
  modal.fphi = [phi, lam](double t) { return Vec(std::exp(lam * t / 2) * phi); };
  auto trm = evolve_first_order(s.forms, LinearState{0, Vec::Zero(m), Vec::Zero(m)}, {0.1, 3.0, 1}, &modal);
  auto rm = duhamel_residual(s.star, s.forms, trm, modal, lam);
  CHECK(rm.me01_holds);
  CHECK(rm.max_rel_defect < 1e-8);

  FirstOrderTrajectory sparse = trm;
  sparse.states.erase(sparse.states.begin() + 3);
  CHECK_THROWS_AS(duhamel_residual(s.star, s.forms, sparse, modal, lam), Error);
  Forcing missing;
  CHECK_THROWS_AS(duhamel_residual(s.star, s.forms, trm, missing, lam), Error);
}

TEST_CASE("growth rate fit") {
  std::vector<double> t, a, b;
  for (int i = 0; i <= 100; ++i) {
    double x = 0.1 * i;
    t.push_back(x);
    a.push_back(3.0 * std::exp(0.7 * x));
    b.push_back(std::exp(0.7 * x) * (1 + 0.01 * std::sin(x)));
  }
  auto fa = measure_growth_rate(t, a, 0, 10);
  CHECK(std::abs(fa.rate - 0.7) < 1e-12);
  CHECK(fa.r2 == doctest::Approx(1.0));
  CHECK(measure_growth_rate(t, b, 0, 10).rate == doctest::Approx(0.7).epsilon(0.01));
  a[50] = -1;
  try {
    measure_growth_rate(t, a, 0, 10);
    FAIL("expected log-domain-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::log_domain_error);
  }
  CHECK_THROWS_AS(measure_growth_rate(t, b, 0, 0.5), Error);
}
