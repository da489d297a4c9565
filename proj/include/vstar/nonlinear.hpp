#pragma once

#include <cstddef>
#include <vector>

#include "vstar/linear.hpp"
#include "vstar/mode.hpp"
#include "vstar/star.hpp"

namespace vstar {

// Staggered Lagrangian layout: v, r at nodes 0..N, rho and P on cells 0..N-1.
struct DiscreteStar {
  PolytropeParams params;
  std::vector<double> x, dx, node_mass;  // node mass: half of each adjacent cell
  std::vector<double> r0, rho0;          // discrete equilibrium (nodes, cells)
  std::vector<double> z;                 // continuous-profile radius of each node's mass coordinate
  double mass = 0, radius = 0;
  double residual = 0;  // max relative force imbalance after Newton
  int iterations = 0;
  std::size_t cells() const { return dx.size(); }
};

// Newton solve for the exact rest state of the discrete scheme, started from the continuous profile
DiscreteStar discrete_equilibrium(const StationaryStar& star, int cells);

struct FluidState {
  double t = 0;
  std::vector<double> v, r, rho;
};

FluidState equilibrium_state(const DiscreteStar& eq);

// Modal data: nodes displaced by iota * v*/lambda and given velocity iota * v*, both evaluated at the node's
// mass coordinate; rho then follows from per-cell mass, which realizes rho0 + iota sigma* to first order.
// amplitude-out-of-range unless |sigma / rho0| <= 0.1 in every cell.
FluidState init_state(const DiscreteStar& eq, const StationaryStar& star, const GrowingMode& mode, double iota);

// per-cell residual of rho * (4pi/3)(r_{j+1}^3 - r_j^3) = dx, relative
double mass_defect(const DiscreteStar& eq, const FluidState& s);

struct SimOptions {
  int cells = 256;
  double cfl = 0.5;
  double dt = 0;            // 0 selects the acoustic CFL step
  bool pressure = true, gravity = true, viscosity = true;
  double rho_floor = 1e-14;  // relative to the central density
};

struct StepInfo {
  double dt = 0;
  double dE = 0;           // change of the physical energy over the step
  double dissipation = 0;  // kinetic energy removed by the viscous substeps
};

struct StateRate {
  std::vector<double> v_t;  // nodes
  std::vector<double> s_t;  // cells, d/dt (sigma / rho0)
};

class Simulator {
 public:
  Simulator(const DiscreteStar& eq, const SimOptions& opts);

  double stable_dt(const FluidState& s) const;
  // kick, implicit viscous half step, drift, implicit viscous half step, kick
  StepInfo step(FluidState& s, double dt);
  StateRate rate(const FluidState& s) const;
  // v^T A v with the tridiagonal viscous matrix A at the current geometry
  double dissipation(const FluidState& s, const std::vector<double>& v) const;
  std::size_t clips() const { return clips_; }
  const DiscreteStar& equilibrium() const { return eq_; }
  const SimOptions& options() const { return opts_; }

 private:
  struct Tri {
    std::vector<double> lo, di, up;  // rows for nodes 1..N
  };
  void pressures(const FluidState& s, std::vector<double>& P);
  std::vector<double> force_acc(const FluidState& s, const std::vector<double>& P) const;
  Tri viscous_matrix(const FluidState& s) const;
  double viscous_substep(const FluidState& s, std::vector<double>& v, double tau) const;
  void update_density(FluidState& s) const;

  DiscreteStar eq_;
  SimOptions opts_;
  std::size_t clips_ = 0;
};

double physical_energy(const DiscreteStar& eq, const FluidState& s);
// physical_energy(b) - physical_energy(a), evaluated from increments to avoid cancellation
double energy_increment(const DiscreteStar& eq, const FluidState& a, const FluidState& b);

struct EnergyReport {
  double e0_v = 0, e0_sigma = 0, e0_r = 0;
  double d0 = 0, e1 = 0, d1 = 0, e2 = 0, d2 = 0;
  double physical_energy = 0;
  double sup_sigma = 0, sup_r = 0;  // sup |sigma/rho0|, sup |1 - r0/r|
  double e0() const { return e0_v + e0_sigma + e0_r; }
};

EnergyReport energy_report(const Simulator& sim, const FluidState& s, const StateRate& rate);
EnergyReport energy_report(const Simulator& sim, const FluidState& s);
// E0 alone, cheap enough for every step
double energy_e0(const DiscreteStar& eq, const FluidState& s);

struct VelocityIdentity {
  double lhs = 0, rhs = 0;  // int v^2/(rho r^2) and (32 pi^2/9) int [rho |d(r^2 v)|^2 + rho r^6 |d(v/r)|^2]
  double pointwise = 0;     // max defect of v/r = (4pi/3){rho d(r^2 v) - rho r^3 d(v/r)} per cell, relative
};
VelocityIdentity velocity_identity(const DiscreteStar& eq, const FluidState& s);

struct RadiusExpansion {
  double defect = 0;     // max over nodes of |(1 - r0/r) + (1/4pi r0^3) int sigma/rho0^2|
  double sup_s_sq = 0;   // sup |sigma/rho0|^2
};
RadiusExpansion radius_expansion(const DiscreteStar& eq, const FluidState& s);

struct TrajectoryRow {
  double t = 0, sqrtE0 = 0, E0v = 0, E0sigma = 0, E0r = 0, D0 = 0, E1 = 0, E2 = 0, phys_energy = 0;
  double sup_sigma = 0, sup_r = 0;
  double energy_change = 0;    // accumulated from per-step increments since t = 0
  double dissipated = 0;       // accumulated kinetic energy removed by the viscous substeps
};

struct BalancePoint {
  double t = 0, residual = 0, dissipation = 0;  // rates over a record interval
};
// d/dt(physical energy) + D0 between consecutive rows, D0 by the trapezoid rule over the rows
std::vector<BalancePoint> energy_balance_residual(const std::vector<TrajectoryRow>& rows);

struct InstabilityOptions {
  double iota = 1e-6;
  double theta0 = 1e-3;
  double t_max = 0;       // 0 selects 3 (1/lambda) ln(theta0/iota)
  double fit_skip = -1;   // start of the fit window; negative selects 1/lambda
  int record_every = 10;
  SimOptions sim;
};

struct InstabilityResult {
  double lambda = 0, iota = 0, theta0 = 0, dt = 0;
  double escape_time = 0;
  double predicted_escape = 0;  // (1/lambda) ln(theta0/iota)
  GrowthFit fit;
  bool fit_valid = false;
  double sup_sigma_max = 0, sup_r_max = 0;  // up to escape
  double final_amplitude = 0;
  double max_mass_defect = 0;
  std::size_t steps = 0, clips = 0;
  std::vector<TrajectoryRow> rows;
  std::vector<double> t_all, amp_all;  // sqrt E0 at every step
  std::vector<FluidState> snapshots;   // at record cadence
  bool valid() const { return clips == 0; }
};

InstabilityResult run_instability(const StationaryStar& star, const DiscreteStar& eq, const GrowingMode& mode,
                                  const InstabilityOptions& opts, bool keep_snapshots = false);

TrajectoryRow trajectory_row(const Simulator& sim, const FluidState& s);

}  // namespace vstar
