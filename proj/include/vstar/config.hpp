#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vstar/star.hpp"

namespace vstar {

struct GridConfig {
  int elements = 128;
  double grading_inner = 1.0, grading_outer = 1.0;
  double z_min_frac = 1e-3;
  int quad_points = 8;
  std::string inner = "core_element";  // core_element | cutoff
  int mass_cells = 256;
  bool operator==(const GridConfig&) const = default;
};

struct EigenConfig {
  std::string method = "dense";  // dense | shift_invert
  double s_lo = 1e-6, s_hi = 0.0;
  double tol = 1e-10;
  int max_iter = 200;
  double ladder_min = 0.01, ladder_max = 2.0;
  int ladder_count = 20;
  bool operator==(const EigenConfig&) const = default;
};

struct EvolveConfig {
  std::string data = "mode";  // mode | random
  double dt = 0.0;            // 0 selects 0.05 / lambda
  double t_final = 0.0;       // 0 selects 5 / lambda
  int output_every = 1;
  int random_sets = 5;
  bool operator==(const EvolveConfig&) const = default;
};

struct SimulateConfig {
  std::vector<double> iota = {1e-6};
  std::vector<double> sweep_iota = {1e-5, 1e-6, 1e-7};
  double theta0 = 1e-3;
  double t_max = 0.0;  // 0 selects 3 ln(theta0 / iota) / lambda
  int cells = 256;
  double cfl = 0.5;
  int record_every = 10;
  int snapshot_every = 50;  // in records; 0 keeps only the first and last state
  bool viscosity = true;
  bool operator==(const SimulateConfig&) const = default;
};

struct RunConfig {
  PolytropeParams params;
  double star_tol = 1e-12;
  GridConfig grid;
  EigenConfig eigen;
  EvolveConfig evolve;
  SimulateConfig simulate;
  std::uint64_t seed = 12345;
  int threads = 0;  // 0: hardware concurrency
  std::string output_dir = "out";
  bool operator==(const RunConfig& o) const;
};

// throws config-error; unknown keys are rejected, missing keys keep defaults
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& c, int indent = 2);
RunConfig load_config(const std::string& path);
// dotted key such as "params.gamma"; value is JSON text
RunConfig config_with_override(const RunConfig& c, const std::string& key, const std::string& value);
// throws config-error
void validate_config(const RunConfig& c);
// FNV-1a 64 of the compact canonical serialization without output_dir and threads, hex
std::string config_hash(const RunConfig& c);

}  // namespace vstar
