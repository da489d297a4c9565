#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vstar/fem.hpp"
#include "vstar/star.hpp"

namespace vstar {

// Norms of a Hermite coefficient vector (free part).
double norm1(const QuadraticForms& f, const Vec& phi);  // int phi^2 / (16 pi^2 r0^4) dx
double norm2(const QuadraticForms& f, const Vec& phi);  // viscous norm
double norm3(const QuadraticForms& f, const Vec& phi);  // int gamma P0 rho0 |d_x phi|^2 dx

double kinetic_energy(const QuadraticForms& f, const Vec& phi_dot);
double potential_energy(const QuadraticForms& f, const Vec& phi);

struct EvolveOptions {
  double dt = 0.05;
  double t_final = 1.0;
  int output_every = 1;
  double overflow = 1e150;
};

struct SecondOrderState {
  double t = 0;
  Vec phi, phi_dot;
  double int_norm2_sq = 0;  // time integral of norm2(phi)^2 up to t
};

struct SecondOrderTrajectory {
  double dt = 0;
  std::vector<SecondOrderState> states;
  std::vector<double> energy_defect;  // per step: change of energy plus dt times dissipation
};

// J phi'' + E1 phi' + E0 phi = 0 by the implicit midpoint rule
SecondOrderTrajectory evolve_second_order(const QuadraticForms& f, const Vec& phi0, const Vec& phi_dot0,
                                          const EvolveOptions& opts);

struct GrowthBoundReport {
  double lambda = 0, K0 = 0, K1 = 0, C0 = 0;
  std::vector<double> t, norm1, norm2, norm3, norm1_dot;
  std::vector<double> ratio1, ratio2, ratio3;  // lhs / rhs at each output time
  bool holds1 = true, holds2 = true, holds3 = true;
  double worst1 = 0, worst2 = 0, worst3 = 0;  // max ratio
  bool all() const { return holds1 && holds2 && holds3; }
};

GrowthBoundReport verify_growth_bounds(const QuadraticForms& f, const SecondOrderTrajectory& traj, double lambda,
                                       double C0);

// First-order form in (Phi, w), sigma = rho0^2 d_x Phi and w = r0^2 v.
struct LinearState {
  double t = 0;
  Vec Phi, w;
};

// Right-hand sides of the forced system. fphi(t) is the Phi-potential int_0^x N1 / rho0^2 as coefficients,
// n2(t) the coefficients of N2, nb(t) the boundary value B(w) at x = M.
struct Forcing {
  std::function<Vec(double)> fphi;
  std::function<Vec(double)> n2;
  std::function<double(double)> nb, nb_dot, nb_ddot;
};

class FirstOrderStepper {
 public:
  FirstOrderStepper(const QuadraticForms& f, double dt);
  ~FirstOrderStepper();
  FirstOrderStepper(const FirstOrderStepper&) = delete;
  FirstOrderStepper& operator=(const FirstOrderStepper&) = delete;

  // one midpoint step; forcing terms evaluated at the half step
  void step(LinearState& s, const Forcing* forcing = nullptr) const;
  // homogeneous step of a (Phi, w) pair
  void propagate(Vec& Phi, Vec& w) const;
  // w_t of the homogeneous flow
  Vec w_rate(const Vec& Phi, const Vec& w) const;
  double dt() const { return dt_; }

 private:
  void advance(Vec& Phi, Vec& w, const Vec& fphi, const Vec& load) const;
  const QuadraticForms& f_;
  double dt_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct FirstOrderTrajectory {
  double dt = 0;
  std::vector<LinearState> states;
  bool forced = false;
};

FirstOrderTrajectory evolve_first_order(const QuadraticForms& f, const LinearState& init, const EvolveOptions& opts,
                                        const Forcing* forcing = nullptr);

// frak E: norm0^2 plus the time-derivative terms of the homogeneous flow
double frak_e(const QuadraticForms& f, const Vec& Phi, const Vec& w);

// sup over the trajectory of norm0(t) exp(-lambda t) / sqrt(frak_e(initial))
double mild_constant(const QuadraticForms& f, const FirstOrderTrajectory& traj, double lambda);

struct OperatorValues {
  std::vector<double> z, L1w, L2sigma, L3w;
  double Bw = 0;
};

// strong forms at the given interior radii; sigma is represented through Phi
OperatorValues apply_operators(const StationaryStar& star, const FeFunction& Phi, const FeFunction& w,
                               const std::vector<double>& z);

struct CorrectorCheck {
  Vec psi;                 // full coefficients of -N_B z^3 / (3 delta)
  double L3_rel = 0;       // max |L3 psi| relative to its separate terms, interior points
  double B_value = 0;      // B(psi) at x = M
  double L1_defect = 0;    // max |L1 psi + N_B rho0 / delta|
};

CorrectorCheck boundary_corrector(const StationaryStar& star, const RadialGrid& grid, double nb);

struct DuhamelReport {
  std::vector<double> t, defect, me01_lhs, me01_rhs;
  double max_defect = 0;
  double max_rel_defect = 0;  // defect relative to norm0 of the solution
  double C = 0;               // constant used on the right of the bound
  bool me01_holds = true;
};

// Compares a forced first-order run (output at every step) against variation of parameters
DuhamelReport duhamel_residual(const StationaryStar& star, const QuadraticForms& f, const FirstOrderTrajectory& traj,
                               const Forcing& forcing, double lambda);

struct GrowthFit {
  double rate = 0, r2 = 0;
  std::size_t samples = 0;
};

// least-squares slope of log(value) over t in [t0, t1]
GrowthFit measure_growth_rate(const std::vector<double>& t, const std::vector<double>& value, double t0, double t1);

// sigma and w on the star's mass grid
void state_on_mass_grid(const StationaryStar& star, const RadialGrid& grid, const Vec& Phi, const Vec& w,
                        std::vector<double>& sigma, std::vector<double>& w_x);

}  // namespace vstar
