#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>

#include "vstar/config.hpp"
#include "vstar/error.hpp"
#include "vstar/pipeline.hpp"

using namespace vstar;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("config round-trips losslessly") {
  RunConfig c;
  c.params.gamma = 1.2345678901234567;
  c.params.shear_visc = 0.1 + 0.2;
  c.simulate.iota = {1e-5, 3.3333333333333333e-7};
  c.seed = 18446744073709551557ull;
  c.output_dir = "some dir/ü";
  RunConfig back = config_from_json(config_to_json(c));
  CHECK(back == c);
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_from_json(config_to_json(RunConfig{}, -1)) == RunConfig{});
}

TEST_CASE("partial configs keep defaults and unknown keys are refused") {
  RunConfig c = config_from_json(R"({"params": {"gamma": 1.3}})");
  CHECK(c.params.gamma == 1.3);
  CHECK(c.grid.elements == RunConfig{}.grid.elements);
  CHECK(code_of([] { config_from_json(R"({"params": {"gama": 1.3}})"); }) == Errc::config_error);
  CHECK(code_of([] { config_from_json(R"({"grid": {"elements": "many"}})"); }) == Errc::config_error);
  CHECK(code_of([] { config_from_json("{not json"); }) == Errc::config_error);
  CHECK(code_of([] { load_config("/nonexistent/run.json"); }) == Errc::config_error);
}

TEST_CASE("overrides by dotted key") {
  RunConfig c = config_with_override(RunConfig{}, "params.gamma", "1.22");
  CHECK(c.params.gamma == 1.22);
  c = config_with_override(c, "simulate.iota", "[1e-5, 1e-6]");
  CHECK(c.simulate.iota == std::vector<double>{1e-5, 1e-6});
  CHECK(code_of([&] { config_with_override(c, "params.nope", "1"); }) == Errc::config_error);
  CHECK(code_of([&] { config_with_override(c, "params.gamma", "\"x\""); }) == Errc::config_error);
}

TEST_CASE("validation") {
  validate_config(RunConfig{});
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    return code_of([&] { validate_config(c); });
  };
  CHECK(bad([](RunConfig& c) { c.eigen.tol = 0; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.star_tol = -1; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.simulate.iota = {2e-3}; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.simulate.sweep_iota = {1e-6, 1e-3}; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.evolve.data = "noise"; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.eigen.ladder_max = c.eigen.ladder_min; }) == Errc::config_error);
  CHECK(bad([](RunConfig& c) { c.simulate.cfl = 0; }) == Errc::config_error);
}

TEST_CASE("hash is stable and ignores where the run is written") {
  RunConfig a, b;
  b.output_dir = "elsewhere";
  b.threads = 7;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.params.gamma = 1.26;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(config_from_json(config_to_json(a))) == config_hash(a));
}

TEST_CASE("pipeline reports the failing stage") {
  RunConfig c;
  c.params.gamma = 0.9;
  Pipeline p(c);
  CHECK(code_of([&] { p.star(); }) == Errc::unsupported_gamma);
  CHECK(p.stage() == Stage::star);
  CHECK_THROWS_AS(parse_command("plot"), Error);
  CHECK(parse_command("sweep") == Command::sweep);
}

TEST_CASE("star command writes its artifacts and metadata") {
  auto dir = std::filesystem::temp_directory_path() / "vstar_test_star";
  std::filesystem::remove_all(dir);
  Pipeline p(RunConfig{});
  RunSummary s = p.run(Command::star, dir.string());
  for (const char* f : {"star_profile.csv", "mass_map.csv", "star.json", "plot_star.gp"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(s.json.find("\"config_hash\"") != std::string::npos);
  CHECK(s.json.find("\"lambda\"") != std::string::npos);
  CHECK(s.text.find("radius R") != std::string::npos);
  CHECK(s.warnings.empty());
  std::ifstream in(dir / "mass_map.csv", std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,r0,rho0");
}
