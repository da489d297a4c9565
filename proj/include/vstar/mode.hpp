#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "vstar/fem.hpp"
#include "vstar/star.hpp"

namespace vstar {

enum class EigenMethod { dense, shift_invert };

struct EigenResult {
  double s_value = 0;
  double mu = 0;
  Vec phi;  // free coefficients, J(phi) = 1, phi(R) >= 0
  double el_residual = 0;
  double bc_residual = 0;
  double e1 = 0;  // E1(phi)
};

// Smallest eigenpair of (A, B) with B SPD.
std::pair<double, Vec> min_generalized_eigen(const SpMat& A, const SpMat& B, EigenMethod method = EigenMethod::dense);

EigenResult mu_of_s(const StationaryStar& star, const QuadraticForms& forms, double s,
                    EigenMethod method = EigenMethod::dense);

struct ElResidual {
  double interior = 0;  // relative weighted L2 norm of the strong residual
  double bc = 0;
};

ElResidual euler_lagrange_residual(const StationaryStar& star, const RadialGrid& grid, const Vec& phi_full, double mu,
                                   double s);

struct LowerBound {
  double C1 = 0, C2 = 0, bound = 0;
};

LowerBound lambda_lower_bound(const StationaryStar& star);

// C3 = -min eig(E0, J), C4 = min eig(E1, J)
std::pair<double, double> affine_constants(const QuadraticForms& forms);

struct FixedPointOptions {
  double s_lo = 1e-6;
  double s_hi = 0.0;  // 0: expand by doubling until mu >= 0
  double tol = 1e-8;
  int max_iter = 200;
  EigenMethod method = EigenMethod::dense;
};

struct FixedPoint {
  double lambda = 0;
  EigenResult eig;
  double s0 = 0;  // upper end of the unstable window found by expansion
  int evaluations = 0;
  std::vector<std::pair<double, double>> samples;  // (s, mu) visited
};

FixedPoint find_fixed_point(const StationaryStar& star, const QuadraticForms& forms, const FixedPointOptions& opts = {});

struct GrowingMode {
  double lambda = 0;
  RadialGrid grid;
  Vec phi_full;  // scaled so that ||(sigma, w)||_0 = 1
  double scale = 1;  // factor applied to the J-normalized minimizer
  std::vector<double> x, r0, phi_x, sigma_x, v_x, w_x;  // on the star's mass grid
  double norm0 = 0;
  double gm03[5] = {0, 0, 0, 0, 0};
  double trace_d0 = 0, trace_d1 = 0;  // phi(M), rho0 d_x phi (M)
  double v_origin = 0;                // limit of v at x = 0
  double sigma_surface = 0;

  FeFunction phi() const { return FeFunction{&grid, phi_full}; }
};

// relative L2(dx) residual of the momentum equation of the mode, interior elements only
double growing_mode_residual(const StationaryStar& star, const GrowingMode& mode);

// squared norm ||(sigma, w)||_0 for sigma = rho0^2 d_x Phi, in terms of the Hermite coefficients
double norm0_squared(const QuadraticForms& forms, const Vec& Phi_free, const Vec& w_free);

GrowingMode reconstruct_mode(const StationaryStar& star, const QuadraticForms& forms, const FixedPoint& fp);

// (1/4pi)[lambda E1 + E0 + lambda^2 J] of the Hermite interpolant of theta; theta(0)=theta'(0)=0 required
double variational_margin(const QuadraticForms& forms, double lambda, const Vec& theta_full);
double variational_inequality_check(const QuadraticForms& forms, double lambda, const std::function<double(double)>& theta,
                                    const std::function<double(double)>& dtheta);

}  // namespace vstar
