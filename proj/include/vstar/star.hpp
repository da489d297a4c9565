#pragma once

#include <string>
#include <vector>

#include "vstar/emden.hpp"
#include "vstar/interp.hpp"

namespace vstar {

struct PolytropeParams {
  double gamma = 1.25;
  double entropy_k = 1.0;
  double shear_visc = 0.01;  // eps
  double bulk_visc = 0.01;   // delta
  double central_density = 1.0;

  double index() const { return 1.0 / (gamma - 1.0); }
  // throws unsupported-gamma / invalid-argument
  void validate() const;
};

struct ZProfile {
  std::vector<double> z, rho0, P0, dP0dz;
};

struct MassMap {
  std::vector<double> x, r0, rho0;  // nodes 0..N, x[0] = 0, r0[0] = 0
  std::vector<double> dx;           // cell masses, integrated cell by cell
  std::vector<double> mass_above;   // M - x at nodes, summed from the surface
  HermiteTable r0_of_x;             // monotone cubic inverse
  std::size_t cells() const { return x.size() - 1; }
};

struct StarOptions {
  double tol = 1e-12;
  double sample_step = 1e-3;
  int profile_points = 2000;
  int mass_cells = 256;
};

class StationaryStar {
 public:
  PolytropeParams params;
  EmdenSolution emden;
  double alpha = 0.0;
  double radius = 0.0;
  double mass = 0.0;
  ZProfile z_profile;
  MassMap mass_grid;
  std::vector<double> emden_mass;  // cumulative int_0^xi s^2 theta^n ds on emden samples

  double theta(double z) const;
  double rho(double z) const;
  double drho(double z) const;
  double pressure(double z) const;
  double dpressure(double z) const;
  // P0'(z)/rho0(z), finite up to the surface
  double dpressure_over_rho(double z) const;
  // exact identity -4 pi alpha^3 rho_c xi^2 theta'(xi)
  double enclosed_mass(double z) const;
  // cumulative quadrature of 4 pi s^2 rho0
  double quadrature_mass(double z) const;
  // 4 pi int_a^b s^2 rho0 ds over the Emden sample pieces
  double mass_between(double za, double zb) const;
  // inverse of quadrature_mass by safeguarded Newton
  double r0_of_x(double x) const;
  double rho_of_x(double x) const { return rho(r0_of_x(x)); }
  double sound_speed(double z) const;
};

// n >= 5 gives infinite-support; gamma range is not checked here
StationaryStar make_star(const PolytropeParams& p, EmdenSolution emden, const StarOptions& opts = {});
StationaryStar build_star(const PolytropeParams& p, const StarOptions& opts = {});

MassMap mass_map(const StationaryStar& star, int n_cells);

// max_i |4 pi r0^2 dP0/dx + x/r0^2| / max_i |x/r0^2| over mass-grid nodes.
// density_scale multiplies rho0 (and hence P0, x) as a sensitivity probe.
double hydrostatic_residual(const StationaryStar& star, double density_scale = 1.0);

// sup over the mass grid of x/r0^3, including the centre limit 4 pi rho_c / 3
double sup_x_over_r3(const StationaryStar& star);

void write_z_profile_csv(const StationaryStar& star, const std::string& path);
void write_mass_map_csv(const StationaryStar& star, const std::string& path);

}  // namespace vstar
