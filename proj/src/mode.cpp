#include "vstar/mode.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vstar/error.hpp"
#include "vstar/quadrature.hpp"

namespace vstar {

namespace {

constexpr double kPi = std::numbers::pi;

bool spd_dense(const Mat& A) {
  Eigen::LLT<Mat> llt(A);
  return llt.info() == Eigen::Success;
}

double rayleigh(const SpMat& A, const SpMat& B, const Vec& x) { return x.dot(A * x) / x.dot(B * x); }

// largest nu of B x = nu (A - sigma B) x with A - sigma B SPD; returns mu = sigma + 1/nu
std::pair<double, Vec> dense_pass(const Mat& A, const Mat& B, double sigma) {
  Mat C = A - sigma * B;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(B, C, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw Error(Errc::eigen_fail, "dense generalized solver did not converge");
  const Eigen::Index k = es.eigenvalues().size() - 1;
  double nu = es.eigenvalues()[k];
  if (!(nu > 0) || !std::isfinite(nu)) throw Error(Errc::eigen_fail, "no positive pencil eigenvalue");
  return {sigma + 1.0 / nu, es.eigenvectors().col(k)};
}

// shift below the spectrum of (A, B): A - sigma B positive definite
template <class Spd>
double shift_below(Spd spd, double start) {
  double sigma = start;
  double step = std::max(1.0, std::abs(start));
  for (int it = 0; it < 200; ++it) {
    if (spd(sigma)) return sigma;
    sigma -= step;
    step *= 2;
  }
  throw Error(Errc::eigen_fail, "no shift below the spectrum");
}

std::pair<double, Vec> dense_min(const SpMat& As, const SpMat& Bs) {
  Mat A(As), B(Bs);
  double sigma = shift_below([&](double s) { return spd_dense(A - s * B); }, -1.0);
  auto [mu, x] = dense_pass(A, B, sigma);
  // second pass closer to the eigenvalue for a better conditioned pencil
  double gap = 1e-3 * std::max(1.0, std::abs(mu));
  double sigma2 = mu - gap;
  for (int it = 0; it < 30 && !spd_dense(A - sigma2 * B); ++it) {
    gap *= 4;
    sigma2 = mu - gap;
  }
  if (spd_dense(A - sigma2 * B)) std::tie(mu, x) = dense_pass(A, B, sigma2);
  return {mu, x};
}

std::pair<double, Vec> shift_invert_min(const SpMat& A, const SpMat& B) {
  auto spd = [&](double s) {
    Eigen::SimplicialLLT<SpMat> llt(SpMat(A - s * B));
    return llt.info() == Eigen::Success;
  };
  double sigma = shift_below(spd, -1.0);
  Vec x = Vec::Ones(A.rows());
  double mu = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 8; ++round) {
    Eigen::SimplicialLLT<SpMat> llt(SpMat(A - sigma * B));
    if (llt.info() != Eigen::Success) throw Error(Errc::eigen_fail, "factorization failed");
    double prev = mu;
    for (int it = 0; it < 2000; ++it) {
      x = llt.solve(B * x);
      x /= std::sqrt(x.dot(B * x));
      double m = rayleigh(A, B, x);
      Vec r = A * x - m * (B * x);
      double scale = (A * x).norm() + std::abs(m) * (B * x).norm();
      mu = m;
      if (r.norm() <= 1e-12 * scale) break;
      if (std::abs(m - prev) <= 1e-15 * std::max(1.0, std::abs(m)) && it > 5) break;
      prev = m;
    }
    // tighten the shift while staying below the spectrum
    double next = mu - 1e-4 * std::max(1.0, std::abs(mu));
    if (next <= sigma + 1e-12 * std::max(1.0, std::abs(sigma)) || !spd(next)) break;
    sigma = next;
  }
  if (!std::isfinite(mu)) throw Error(Errc::eigen_fail, "inverse iteration did not converge");
  return {mu, x};
}

}  // namespace

std::pair<double, Vec> min_generalized_eigen(const SpMat& A, const SpMat& B, EigenMethod method) {
  if (A.rows() != B.rows() || A.rows() == 0) throw Error(Errc::invalid_argument, "pencil size mismatch");
  Vec x;
  double mu;
  if (method == EigenMethod::dense)
    std::tie(mu, x) = dense_min(A, B);
  else
    std::tie(mu, x) = shift_invert_min(A, B);
  if (!x.allFinite()) throw Error(Errc::eigen_fail, "non-finite eigenvector");
  x /= std::sqrt(x.dot(B * x));
  return {rayleigh(A, B, x), x};
}

EigenResult mu_of_s(const StationaryStar& star, const QuadraticForms& forms, double s, EigenMethod method) {
  if (!(s > 0) || !std::isfinite(s)) throw Error(Errc::invalid_argument, "s must be positive");
  {
    Eigen::SimplicialLLT<SpMat> llt(forms.J);
    if (llt.info() != Eigen::Success) throw Error(Errc::gram_fail, "J is not positive definite");
  }
  SpMat A = forms.energy(s);
  auto [mu, phi] = min_generalized_eigen(A, forms.J, method);
  Vec full = expand(forms.grid, phi);
  if (full[full.size() - 2] < 0) {
    phi = -phi;
    full = -full;
  }
  EigenResult r;
  r.s_value = s;
  r.mu = mu;
  r.phi = phi;
  r.e1 = QuadraticForms::form(forms.E1, phi);
  ElResidual el = euler_lagrange_residual(star, forms.grid, full, mu, s);
  r.el_residual = el.interior;
  r.bc_residual = el.bc;
  return r;
}

ElResidual euler_lagrange_residual(const StationaryStar& star, const RadialGrid& grid, const Vec& phi_full, double mu,
                                   double s) {
  const double gamma = star.params.gamma, eps = star.params.shear_visc, delta = star.params.bulk_visc;
  const double visc = s * (4 * eps / 3 + delta);
  const GaussRule& q = gauss_legendre(grid.quad_points);
  const std::size_t first = grid.inner == InnerBoundary::core_element ? 1 : 0;
  double num = 0, den = 0;
  for (std::size_t e = first; e + 1 < grid.elements(); ++e) {
    double a = grid.nodes[e], h = grid.nodes[e + 1] - a;
    for (std::size_t g = 0; g < q.nodes.size(); ++g) {
      double u = 0.5 * (1 + q.nodes[g]), z = a + h * u, w = 0.5 * h * q.weights[g];
      Shape sh = hermite_shape(u, h);
      double f = 0, df = 0, d2f = 0;
      for (int k = 0; k < 4; ++k) {
        double c = phi_full[2 * e + k];
        f += c * sh.v[k];
        df += c * sh.d[k];
        d2f += c * sh.dd[k];
      }
      double P = star.pressure(z), dP = star.dpressure(z), rho = star.rho(z);
      double X = visc + gamma * P, dX = gamma * dP;
      double z2 = z * z, z3 = z2 * z;
      double flux = dX * df / z2 + X * d2f / z2 - 2 * X * df / z3;
      double pot = 4 * dP * f / z3, mass = mu * rho * f / z2;
      double r = -flux + pot - mass;
      num += w * z2 * r * r;
      double scale = std::abs(flux) + std::abs(pot) + std::abs(mass);
      den += w * z2 * scale * scale;
    }
  }
  ElResidual out;
  out.interior = den > 0 ? std::sqrt(num / den) : 0.0;
  FeFunction fn{&grid, phi_full};
  const double R = grid.radius;
  double v = fn.value(R), d = fn.deriv(R);
  out.bc = std::abs(s * delta * d / (R * R) + (4 * s * eps / 3) * (d / (R * R) - 3 * v / (R * R * R)));
  return out;
}

LowerBound lambda_lower_bound(const StationaryStar& star) {
  const double gamma = star.params.gamma;
  if (gamma > 4.0 / 3.0) throw Error(Errc::stable_regime, "gamma above 4/3 gives no negative test energy");
  const EmdenSolution& em = star.emden;
  const double n = em.index_n, xi1 = *em.first_zero;
  double i4 = 0, ip = 0;
  auto add = [&](double a, double b) {
    i4 += integrate_gauss([&](double xi) { return emden_power(em.theta_at(xi), n) * std::pow(xi, 4); }, a, b, 8);
    ip += integrate_gauss([&](double xi) { return std::pow(std::max(em.theta_at(xi), 0.0), n + 1) * xi * xi; }, a, b, 8);
  };
  for (std::size_t k = 0; k + 1 < em.xi.size() && em.xi[k] < xi1; ++k) add(em.xi[k], std::min(em.xi[k + 1], xi1));
  add(0.0, em.xi.front());
  const double a = star.alpha, rc = star.params.central_density, K = star.params.entropy_k;
  double I4 = rc * std::pow(a, 5) * i4;
  double IP = K * std::pow(rc, gamma) * std::pow(a, 3) * ip;
  LowerBound lb;
  lb.C1 = 3 * star.params.bulk_visc * std::pow(star.radius, 3) / I4;
  lb.C2 = (12 - 9 * gamma) * IP / I4;
  if (lb.C2 < 0) lb.C2 = 0;
  lb.bound = (-lb.C1 + std::sqrt(lb.C1 * lb.C1 + 4 * lb.C2)) / 2;
  return lb;
}

std::pair<double, double> affine_constants(const QuadraticForms& forms) {
  double c3 = -min_generalized_eigen(forms.E0, forms.J).first;
  double c4 = min_generalized_eigen(forms.E1, forms.J).first;
  return {c3, c4};
}

FixedPoint find_fixed_point(const StationaryStar& star, const QuadraticForms& forms, const FixedPointOptions& opts) {
  FixedPoint fp;
  auto eval = [&](double s) {
    EigenResult r = mu_of_s(star, forms, s, opts.method);
    fp.samples.emplace_back(s, r.mu);
    ++fp.evaluations;
    return r;
  };
  auto g_of = [](const EigenResult& r) { return r.mu < 0 ? std::sqrt(-r.mu) - r.s_value : -r.s_value; };

  EigenResult lo = eval(opts.s_lo);
  if (lo.mu >= 0) throw Error(Errc::no_unstable_window, "mu(s_lo) is not negative");
  if (g_of(lo) <= 0) throw Error(Errc::fixed_point_fail, "g(s_lo) is not positive; lower the bracket start");

  EigenResult hi;
  bool have_hi = false;
  if (opts.s_hi > 0) {
    hi = eval(opts.s_hi);
    if (g_of(hi) >= 0) throw Error(Errc::fixed_point_fail, "g(s_hi) is not negative");
    have_hi = true;
    fp.s0 = opts.s_hi;
  } else {
    double start = opts.s_lo;
    try {
      start = std::max(start, lambda_lower_bound(star).bound);
    } catch (const Error&) {
    }
    double s = start;
    for (int it = 0; it < opts.max_iter; ++it) {
      EigenResult r = eval(s);
      if (g_of(r) > 0) {
        lo = r;
      } else if (!have_hi) {
        hi = r;
        have_hi = true;
      }
      if (r.mu >= 0) {
        fp.s0 = s;
        break;
      }
      s *= 2;
    }
    if (!have_hi || fp.s0 == 0) throw Error(Errc::fixed_point_fail, "expansion did not leave the unstable window");
  }

  double a = lo.s_value, b = hi.s_value, ga = g_of(lo), gb = g_of(hi);
  EigenResult best = std::abs(ga) < std::abs(gb) ? lo : hi;
  auto done = [&](const EigenResult& r) { return std::abs(g_of(r)) <= opts.tol * r.s_value; };
  for (int it = 0; it < opts.max_iter && !done(best); ++it) {
    double m;
    if ((b - a) > 1e-2 * b)
      m = 0.5 * (a + b);
    else {
      m = b - gb * (b - a) / (gb - ga);
      if (!(m > a && m < b)) m = 0.5 * (a + b);
    }
    EigenResult r = eval(m);
    double gm = g_of(r);
    if (gm > 0) {
      a = m;
      ga = gm;
    } else {
      b = m;
      gb = gm;
    }
    if (std::abs(gm) < std::abs(g_of(best))) best = r;
    if (b - a <= 1e-15 * b) break;
  }
  if (!done(best)) throw Error(Errc::fixed_point_fail, "bracket exhausted before tolerance");
  fp.lambda = best.s_value;
  fp.eig = best;
  return fp;
}

double norm0_squared(const QuadraticForms& forms, const Vec& Phi, const Vec& w) {
  return QuadraticForms::form(forms.G, Phi) / (8 * kPi) + 2 * kPi * QuadraticForms::form(forms.J, w) +
         2 * kPi * QuadraticForms::form(forms.E1, w);
}

GrowingMode reconstruct_mode(const StationaryStar& star, const QuadraticForms& forms, const FixedPoint& fp) {
  GrowingMode m;
  m.lambda = fp.lambda;
  m.grid = forms.grid;
  const double lam = fp.lambda;
  const Vec& phi = fp.eig.phi;
  double n0 = norm0_squared(forms, phi, (-lam / (4 * kPi)) * phi);
  if (!(n0 > 0) || !std::isfinite(n0)) throw Error(Errc::mode_regularity_fail, "zero or non-finite mode norm");
  m.scale = 1.0 / std::sqrt(n0);
  m.phi_full = expand(m.grid, m.scale * phi);
  m.norm0 = std::sqrt(norm0_squared(forms, m.scale * phi, (-lam * m.scale / (4 * kPi)) * phi));
  FeFunction f = m.phi();
  const RadialGrid& grid = m.grid;
  const double gamma = star.params.gamma, eps = star.params.shear_visc, delta = star.params.bulk_visc;
  const double X0 = lam * (4 * eps / 3 + delta), mu = -lam * lam;

  // near-origin limit of phi'/z^2 taken at the first non-core node
  const double z_in = grid.z_min;
  const double lim_dphi_z2 = f.deriv(z_in) / (z_in * z_in);

  const MassMap& mm = star.mass_grid;
  m.x = mm.x;
  m.r0 = mm.r0;
  for (std::size_t i = 0; i < mm.x.size(); ++i) {
    double z = mm.r0[i], rho = mm.rho0[i];
    double p = z > 0 ? f.value(z) : 0.0;
    double q = z > 0 ? f.deriv(z) / (4 * kPi * z * z) : lim_dphi_z2 / (4 * kPi);
    m.phi_x.push_back(p);
    m.sigma_x.push_back(rho * q);
    m.v_x.push_back(z > 0 ? -lam * p / (4 * kPi * z * z) : 0.0);
    m.w_x.push_back(-lam * p / (4 * kPi));
  }
  m.v_origin = m.v_x.front();
  m.sigma_surface = m.sigma_x.back();

  // integrals over the non-core elements with q'/rho0 recovered from the mode equation
  const GaussRule& rule = gauss_legendre(grid.quad_points);
  const std::size_t first = grid.inner == InnerBoundary::core_element ? 1 : 0;
  double I[5] = {0, 0, 0, 0, 0};
  for (std::size_t e = first; e < grid.elements(); ++e) {
    double a = grid.nodes[e], h = grid.nodes[e + 1] - a;
    for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
      double u = 0.5 * (1 + rule.nodes[g]), z = a + h * u, wt = 0.5 * h * rule.weights[g];
      double p = f.value(z), dp = f.deriv(z);
      double rho = star.rho(z), P = star.pressure(z), dPr = star.dpressure_over_rho(z);
      double q = dp / (4 * kPi * z * z);
      double X = X0 + gamma * P;
      double dq_rho = (-gamma * dPr * q - (mu * p / (z * z) - 4 * dPr * p / (z * z * z)) / (4 * kPi)) / X;
      double w = -lam * p / (4 * kPi), dw = -lam * dp / (4 * kPi);
      I[0] += wt * q * q * 4 * kPi * z * z * rho;
      I[1] += wt * dq_rho * dq_rho * rho / (4 * kPi);
      I[2] += wt * 4 * kPi * w * w / std::pow(z, 4);
      I[3] += wt * dw * dw / (4 * kPi * z * z);
    }
  }
  I[4] = std::pow(lam / (4 * kPi), 2) * I[1];
  for (int k = 0; k < 5; ++k) {
    if (!std::isfinite(I[k])) throw Error(Errc::mode_regularity_fail, "non-finite mode integral");
    m.gm03[k] = I[k];
  }
  const double R = grid.radius;
  m.trace_d0 = f.value(R);
  m.trace_d1 = f.deriv(R) / (4 * kPi * R * R);
  return m;
}

double growing_mode_residual(const StationaryStar& star, const GrowingMode& mode) {
  const RadialGrid& grid = mode.grid;
  FeFunction f = mode.phi();
  const double lam = mode.lambda, gamma = star.params.gamma;
  const double nu = 4 * star.params.shear_visc / 3 + star.params.bulk_visc;
  const GaussRule& rule = gauss_legendre(grid.quad_points);
  const std::size_t first = grid.inner == InnerBoundary::core_element ? 1 : 0;
  double num = 0, den = 0;
  for (std::size_t e = first; e + 1 < grid.elements(); ++e) {
    double a = grid.nodes[e], h = grid.nodes[e + 1] - a;
    for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
      double u = 0.5 * (1 + rule.nodes[g]), z = a + h * u, wt = 0.5 * h * rule.weights[g];
      double p = f.value(z), dp = f.deriv(z), d2p = f.deriv2(z);
      double rho = star.rho(z), P = star.pressure(z), dPr = star.dpressure_over_rho(z);
      double q = dp / (4 * kPi * z * z);
      double dq = d2p / (4 * kPi * z * z) - dp / (2 * kPi * z * z * z);
      double t_v = -lam * lam * p / (4 * kPi * z * z);
      double t_p = gamma * dPr * q + gamma * P * dq / rho;
      double t_g = star.enclosed_mass(z) * p / (kPi * std::pow(z, 5));
      double t_visc = lam * nu * dq / rho;
      double r = t_v + t_p + t_g + t_visc;
      double sc = std::abs(t_v) + std::abs(t_p) + std::abs(t_g) + std::abs(t_visc);
      double dx = wt * 4 * kPi * z * z * rho;
      num += dx * r * r;
      den += dx * sc * sc;
    }
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

double variational_margin(const QuadraticForms& forms, double lambda, const Vec& theta_full) {
  const auto k = forms.grid.fixed_dofs();
  for (std::size_t i = 0; i < k; ++i)
    if (theta_full[i] != 0.0) throw Error(Errc::inadmissible_trial, "trial violates the condition at the centre");
  Vec t = restrict_free(forms.grid, theta_full);
  double v = lambda * QuadraticForms::form(forms.E1, t) + QuadraticForms::form(forms.E0, t) +
             lambda * lambda * QuadraticForms::form(forms.J, t);
  return v / (4 * kPi);
}

double variational_inequality_check(const QuadraticForms& forms, double lambda, const std::function<double(double)>& theta,
                                    const std::function<double(double)>& dtheta) {
  Vec c = interpolate(forms.grid, theta, dtheta);
  if (!c.allFinite()) throw Error(Errc::inadmissible_trial, "non-finite trial values");
  const double tol = 1e-12 * (1.0 + c.cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < forms.grid.fixed_dofs(); ++i) {
    if (forms.grid.inner == InnerBoundary::core_element && std::abs(c[i]) > tol)
      throw Error(Errc::inadmissible_trial, "trial is not o(z) at the centre");
    c[i] = 0.0;
  }
  return variational_margin(forms, lambda, c);
}

}  // namespace vstar
