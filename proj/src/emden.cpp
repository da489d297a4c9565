#include "vstar/emden.hpp"

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>

#include "vstar/error.hpp"
#include "vstar/quadrature.hpp"

namespace vstar {

namespace odeint = boost::numeric::odeint;
using EState = std::array<double, 2>;

double emden_power(double theta, double n) {
  return theta >= 0 ? std::pow(theta, n) : -std::pow(-theta, n);
}

namespace {

struct EmdenRhs {
  double n;
  void operator()(const EState& y, EState& dy, double xi) const {
    dy[0] = y[1];
    dy[1] = -emden_power(y[0], n) - 2.0 * y[1] / xi;
  }
};

double second_derivative(double xi, double th, double dth, double n) {
  if (xi == 0.0) return -1.0 / 3.0;
  return -emden_power(th, n) - 2.0 * dth / xi;
}

}  // namespace

double EmdenSolution::theta_at(double x) const { return theta_table(x); }
double EmdenSolution::dtheta_at(double x) const { return dtheta_table(x); }

double EmdenSolution::interval_residual(std::size_t k) const {
  double a = xi[k], b = xi[k + 1];
  double flux = b * b * dtheta[k + 1] - a * a * dtheta[k];
  const auto& g = gauss_legendre(8);
  double src = 0.0;
  for (std::size_t q = 0; q < g.nodes.size(); ++q) {
    double s = 0.5 * (a + b) + 0.5 * (b - a) * g.nodes[q];
    src += 0.5 * (b - a) * g.weights[q] * s * s * emden_power(theta_table(s), index_n);
  }
  return flux + src;
}

EmdenSolution integrate_emden(double n, double tol, const EmdenOptions& opts) {
  if (!(n > 0.0) || !(tol > 0.0)) throw Error(Errc::invalid_argument, "integrate_emden needs n > 0 and tol > 0");
  const double xi_max = opts.xi_max > 0 ? opts.xi_max : (n < 5.0 ? 1e4 : 10.0);
  const double h = opts.sample_step;
  const double x0 = opts.xi_start;

  EmdenSolution sol;
  sol.index_n = n;
  sol.tol = tol;
  sol.xi.push_back(0.0);
  sol.theta.push_back(1.0);
  sol.dtheta.push_back(0.0);

  EmdenRhs rhs{n};
  auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<EState>());

  double x2 = x0 * x0;
  EState y{1.0 - x2 / 6.0 + n * x2 * x2 / 120.0, -x0 / 3.0 + n * x2 * x0 / 30.0};
  stepper.initialize(y, x0, std::min(1e-3, h));

  double next = h;
  while (next <= x0) next += h;
  EState at{};
  std::size_t steps = 0;
  while (true) {
    std::pair<double, double> span;
    try {
      span = stepper.do_step(rhs);
    } catch (const std::exception& e) {
      throw Error(Errc::stiff_failure, e.what());
    }
    if (++steps > 50000000 || span.second - span.first < 1e-14 * span.second)
      throw Error(Errc::stiff_failure, "step size underflow");
    const EState& cur = stepper.current_state();
    if (!std::isfinite(cur[0]) || !std::isfinite(cur[1])) throw Error(Errc::stiff_failure, "non-finite Emden state");
    bool crossed = n < 5.0 && cur[0] <= 0.0;
    double hi = crossed ? span.second : std::min(span.second, xi_max);
    while (next <= hi) {
      stepper.calc_state(next, at);
      sol.xi.push_back(next);
      sol.theta.push_back(at[0]);
      sol.dtheta.push_back(at[1]);
      next += h;
    }
    if (crossed) {
      // Newton on the dense-output interpolant inside the last step
      double z = span.first;
      EState a0{};
      stepper.calc_state(span.first, a0);
      z = span.first + (span.second - span.first) * a0[0] / (a0[0] - cur[0]);
      for (int it = 0; it < 60; ++it) {
        stepper.calc_state(z, at);
        double dz = at[0] / at[1];
        z = std::clamp(z - dz, span.first, span.second);
        if (std::abs(dz) <= 1e-3 * tol * z) break;
      }
      stepper.calc_state(z, at);
      while (!sol.xi.empty() && sol.xi.back() >= z - 1e-9 * h) {
        sol.xi.pop_back();
        sol.theta.pop_back();
        sol.dtheta.pop_back();
      }
      sol.xi.push_back(z);
      sol.theta.push_back(0.0);
      sol.dtheta.push_back(at[1]);
      sol.first_zero = z;
      break;
    }
    if (span.second >= xi_max) {
      if (n < 5.0) throw Error(Errc::zero_not_found, "no sign change before xi_max");
      if (sol.xi.back() < xi_max) {
        stepper.calc_state(xi_max, at);
        sol.xi.push_back(xi_max);
        sol.theta.push_back(at[0]);
        sol.dtheta.push_back(at[1]);
      }
      break;
    }
  }

  std::vector<double> ddt(sol.xi.size());
  for (std::size_t i = 0; i < ddt.size(); ++i)
    ddt[i] = second_derivative(sol.xi[i], sol.theta[i], sol.dtheta[i], n);
  sol.theta_table = HermiteTable(sol.xi, sol.theta, sol.dtheta);
  sol.dtheta_table = HermiteTable(sol.xi, sol.dtheta, std::move(ddt));
  return sol;
}

}  // namespace vstar
