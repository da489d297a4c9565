#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "vstar/vstar.h"

namespace {

std::string json_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string json_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + json_number(v[i]);
  return s + "]";
}

struct Overrides {
  std::string config, out;
  std::optional<double> gamma, K, eps, delta, rho_c, theta0, t_max, cfl, dt, t_final;
  std::optional<int> elements, cells, threads, record_every;
  std::optional<long long> seed;
  std::vector<double> iota;
  std::string data, sweep_s;
  std::vector<std::string> sets;
  bool print_config = false, quiet = false;
};

int fail(vs_status st) {
  std::fprintf(stderr, "error: %s\n", vs_last_error());
  return st;
}

// key=value pairs applied in order; later ones win
std::vector<std::pair<std::string, std::string>> collect(const Overrides& o, const std::string& command) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto num = [&](const char* key, const auto& v) {
    if (v) kv.emplace_back(key, json_number(static_cast<double>(*v)));
  };
  auto integer = [&](const char* key, const auto& v) {
    if (v) kv.emplace_back(key, std::to_string(*v));
  };
  num("params.gamma", o.gamma);
  num("params.K", o.K);
  num("params.eps", o.eps);
  num("params.delta", o.delta);
  num("params.rho_c", o.rho_c);
  integer("grid.elements", o.elements);
  num("evolve.dt", o.dt);
  num("evolve.t_final", o.t_final);
  if (!o.data.empty()) kv.emplace_back("evolve.data", "\"" + o.data + "\"");
  num("simulate.theta0", o.theta0);
  num("simulate.t_max", o.t_max);
  num("simulate.cfl", o.cfl);
  integer("simulate.cells", o.cells);
  integer("simulate.record_every", o.record_every);
  if (!o.iota.empty()) kv.emplace_back(command == "sweep" ? "simulate.sweep_iota" : "simulate.iota", json_list(o.iota));
  integer("seed", o.seed);
  integer("threads", o.threads);
  if (!o.out.empty()) kv.emplace_back("output_dir", "\"" + o.out + "\"");
  for (const auto& s : o.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + s);
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

// a:b:n for the mu ladder
void sweep_s(const std::string& spec, std::vector<std::pair<std::string, std::string>>& kv) {
  auto c1 = spec.find(':'), c2 = spec.rfind(':');
  if (c1 == std::string::npos || c2 == c1) throw CLI::ValidationError("--sweep-s", "expected a:b:n, got " + spec);
  try {
    kv.emplace_back("eigen.ladder_min", json_number(std::stod(spec.substr(0, c1))));
    kv.emplace_back("eigen.ladder_max", json_number(std::stod(spec.substr(c1 + 1, c2 - c1 - 1))));
    kv.emplace_back("eigen.ladder_count", std::to_string(std::stoi(spec.substr(c2 + 1))));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--sweep-s", "expected a:b:n, got " + spec);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viscous gaseous star instability toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(vs_version()));

  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output directory");
  app.add_option("--gamma", o.gamma, "adiabatic exponent");
  app.add_option("--K", o.K, "entropy constant");
  app.add_option("--eps", o.eps, "shear viscosity");
  app.add_option("--delta", o.delta, "bulk viscosity");
  app.add_option("--rho-c", o.rho_c, "central density");
  app.add_option("--elements", o.elements, "finite elements of the radial grid");
  app.add_option("--dt", o.dt, "linear time step (0: 0.05/lambda)");
  app.add_option("--t-final", o.t_final, "linear end time (0: 5/lambda)");
  app.add_option("--data", o.data, "linear initial data")->check(CLI::IsMember({"mode", "random"}));
  app.add_option("--iota", o.iota, "initial amplitudes")->delimiter(',');
  app.add_option("--theta0", o.theta0, "escape threshold");
  app.add_option("--t-max", o.t_max, "simulation horizon (0: 3 ln(theta0/iota)/lambda)");
  app.add_option("--cfl", o.cfl, "acoustic CFL number");
  app.add_option("--cells", o.cells, "Lagrangian cells");
  app.add_option("--record-every", o.record_every, "steps between trajectory rows");
  app.add_option("--sweep-s", o.sweep_s, "mu ladder as a:b:n (geometric)");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--threads", o.threads, "sweep workers (0: hardware)");
  app.add_option("--set", o.sets, "raw override key=json, e.g. grid.grading_outer=2");
  app.add_flag("--print-config", o.print_config, "print the effective configuration and exit");
  app.add_flag("-q,--quiet", o.quiet, "only print errors");

  const char* commands[][2] = {{"star", "build and export the stationary star"},
                               {"mode", "relaxed eigenvalue ladder, fixed point and growing mode"},
                               {"evolve", "linear evolution with the growth-bound report"},
                               {"simulate", "nonlinear instability runs"},
                               {"sweep", "escape time against ln(1/iota) on a worker pool"}};
  for (auto& c : commands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return VS_ERR_CONFIG;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  vs_config* cfg = nullptr;
  vs_status st = o.config.empty() ? vs_config_new(&cfg) : vs_config_load(o.config.c_str(), &cfg);
  if (st != VS_OK) return fail(st);
  try {
    auto kv = collect(o, command);
    if (!o.sweep_s.empty()) sweep_s(o.sweep_s, kv);
    for (const auto& [k, v] : kv)
      if ((st = vs_config_set(cfg, k.c_str(), v.c_str())) != VS_OK) {
        vs_config_free(cfg);
        return fail(st);
      }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    vs_config_free(cfg);
    return VS_ERR_CONFIG;
  }
  if (o.print_config) {
    std::printf("%s\n", vs_config_json(cfg));
    vs_config_free(cfg);
    return 0;
  }

  vs_session* session = nullptr;
  st = vs_session_new(cfg, &session);
  vs_config_free(cfg);
  if (st != VS_OK) return fail(st);
  st = vs_run(session, command.c_str(), nullptr);
  if (st != VS_OK) {
    vs_session_free(session);
    return fail(st);
  }
  for (size_t i = 0; i < vs_run_warning_count(session); ++i) std::fprintf(stderr, "warning: %s\n", vs_run_warning(session, i));
  if (!o.quiet) std::fputs(vs_run_report(session), stdout);
  vs_session_free(session);
  return 0;
}
