#include "vstar/error.hpp"

namespace vstar {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::unsupported_gamma: return "unsupported-gamma";
    case Errc::infinite_support: return "infinite-support";
    case Errc::zero_not_found: return "zero-not-found";
    case Errc::stiff_failure: return "stiff-failure";
    case Errc::monotonicity_violation: return "monotonicity-violation";
    case Errc::degenerate_grid: return "degenerate-grid";
    case Errc::singular_quadrature: return "singular-quadrature";
    case Errc::not_in_weighted_space: return "not-in-weighted-space";
    case Errc::eigen_fail: return "eigen-fail";
    case Errc::gram_fail: return "gram-fail";
    case Errc::stable_regime: return "stable-regime";
    case Errc::no_unstable_window: return "no-unstable-window";
    case Errc::fixed_point_fail: return "fixed-point-fail";
    case Errc::mode_regularity_fail: return "mode-regularity-fail";
    case Errc::inadmissible_trial: return "inadmissible-trial";
    case Errc::implicit_solve_fail: return "implicit-solve-fail";
    case Errc::overflow: return "overflow";
    case Errc::bulk_viscosity_required: return "bulk-viscosity-required";
    case Errc::incomplete_trajectory: return "incomplete-trajectory";
    case Errc::log_domain_error: return "log-domain-error";
    case Errc::amplitude_out_of_range: return "amplitude-out-of-range";
    case Errc::vacuum_collapse: return "vacuum-collapse";
    case Errc::viscous_solve_fail: return "viscous-solve-fail";
    case Errc::no_escape: return "no-escape";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::config_error: return "config-error";
  }
  return "unknown";
}

}  // namespace vstar
