#pragma once

#include <optional>
#include <vector>

#include "vstar/interp.hpp"

namespace vstar {

struct EmdenOptions {
  double xi_max = 0.0;        // 0 selects 1e4 for n < 5 and 10 for n >= 5
  double sample_step = 1e-3;  // spacing of stored samples in xi
  double xi_start = 1e-4;     // series start
};

struct EmdenSolution {
  double index_n = 0.0;
  double tol = 0.0;
  std::vector<double> xi, theta, dtheta;
  std::optional<double> first_zero;

  double theta_at(double x) const;
  double dtheta_at(double x) const;
  // integral of (xi^2 theta')' + xi^2 theta^n over sample interval k
  double interval_residual(std::size_t k) const;
  double xi_end() const { return xi.back(); }

  HermiteTable theta_table, dtheta_table;
};

EmdenSolution integrate_emden(double n, double tol, const EmdenOptions& opts = {});

// theta^n continued oddly through zero
double emden_power(double theta, double n);

}  // namespace vstar
