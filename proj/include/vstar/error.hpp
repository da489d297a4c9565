#pragma once

#include <stdexcept>
#include <string>

namespace vstar {

enum class Errc {
  unsupported_gamma,
  infinite_support,
  zero_not_found,
  stiff_failure,
  monotonicity_violation,
  degenerate_grid,
  singular_quadrature,
  not_in_weighted_space,
  eigen_fail,
  gram_fail,
  stable_regime,
  no_unstable_window,
  fixed_point_fail,
  mode_regularity_fail,
  inadmissible_trial,
  implicit_solve_fail,
  overflow,
  bulk_viscosity_required,
  incomplete_trajectory,
  log_domain_error,
  amplitude_out_of_range,
  vacuum_collapse,
  viscous_solve_fail,
  no_escape,
  invalid_argument,
  config_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + (detail.empty() ? "" : ": " + detail)),
        code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace vstar
