#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vstar/config.hpp"
#include "vstar/nonlinear.hpp"

namespace vstar {

enum class Command { star, mode, evolve, simulate, sweep };
enum class Stage { config, star, mode, evolve, simulate };

Command parse_command(const std::string& name);  // throws invalid-argument
const char* command_name(Command c);

struct RunSummary {
  std::string json;  // the metadata document written next to the artifacts
  std::string text;  // human-readable report, one item per line
  std::vector<std::string> warnings;
  std::vector<std::string> files;  // relative to the output directory
};

// Lazily builds the star, forms, fixed point, mode and discrete equilibrium shared by the commands.
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);  // throws config-error
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const RunConfig& config() const { return cfg_; }
  const StationaryStar& star();
  const QuadraticForms& forms();
  const FixedPoint& fixed_point();
  const GrowingMode& mode();
  const DiscreteStar& discrete();

  // writes artifacts under out_dir (created if missing); empty out_dir selects config().output_dir
  RunSummary run(Command c, const std::string& out_dir = "");
  // stage that was active when the last error escaped
  Stage stage() const { return stage_; }

 private:
  struct Commands;
  friend struct Commands;
  RunConfig cfg_;
  Stage stage_ = Stage::config;
  std::optional<StationaryStar> star_;
  std::optional<QuadraticForms> forms_;
  std::optional<FixedPoint> fp_;
  std::optional<GrowingMode> mode_;
  std::optional<DiscreteStar> eq_;
};

std::string vstar_version();

}  // namespace vstar
