#include "vstar/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "vstar/error.hpp"

namespace vstar {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(Errc::config_error, msg); }

// reads known keys of one section and rejects the rest
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(name_ + " must be an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(fmt::format("{}.{} has the wrong type", name_, key));
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(fmt::format("unknown key {}.{}", name_, it.key()));
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json to_tree(const RunConfig& c) {
  const auto& p = c.params;
  const auto& g = c.grid;
  const auto& e = c.eigen;
  const auto& v = c.evolve;
  const auto& s = c.simulate;
  return json{
      {"params",
       {{"gamma", p.gamma}, {"K", p.entropy_k}, {"eps", p.shear_visc}, {"delta", p.bulk_visc},
        {"rho_c", p.central_density}, {"star_tol", c.star_tol}}},
      {"grid",
       {{"elements", g.elements}, {"grading_inner", g.grading_inner}, {"grading_outer", g.grading_outer},
        {"z_min_frac", g.z_min_frac}, {"quad_points", g.quad_points}, {"inner", g.inner},
        {"mass_cells", g.mass_cells}}},
      {"eigen",
       {{"method", e.method}, {"s_lo", e.s_lo}, {"s_hi", e.s_hi}, {"tol", e.tol}, {"max_iter", e.max_iter},
        {"ladder_min", e.ladder_min}, {"ladder_max", e.ladder_max}, {"ladder_count", e.ladder_count}}},
      {"evolve",
       {{"data", v.data}, {"dt", v.dt}, {"t_final", v.t_final}, {"output_every", v.output_every},
        {"random_sets", v.random_sets}}},
      {"simulate",
       {{"iota", s.iota}, {"sweep_iota", s.sweep_iota}, {"theta0", s.theta0}, {"t_max", s.t_max},
        {"cells", s.cells}, {"cfl", s.cfl}, {"record_every", s.record_every}, {"snapshot_every", s.snapshot_every},
        {"viscosity", s.viscosity}}},
      {"seed", c.seed},
      {"threads", c.threads},
      {"output_dir", c.output_dir},
  };
}

RunConfig from_tree(const json& j) {
  RunConfig c;
  Section top(j, "config");
  if (auto* n = top.sub("params")) {
    Section s(*n, "params");
    s.get("gamma", c.params.gamma);
    s.get("K", c.params.entropy_k);
    s.get("eps", c.params.shear_visc);
    s.get("delta", c.params.bulk_visc);
    s.get("rho_c", c.params.central_density);
    s.get("star_tol", c.star_tol);
    s.finish();
  }
  if (auto* n = top.sub("grid")) {
    Section s(*n, "grid");
    s.get("elements", c.grid.elements);
    s.get("grading_inner", c.grid.grading_inner);
    s.get("grading_outer", c.grid.grading_outer);
    s.get("z_min_frac", c.grid.z_min_frac);
    s.get("quad_points", c.grid.quad_points);
    s.get("inner", c.grid.inner);
    s.get("mass_cells", c.grid.mass_cells);
    s.finish();
  }
  if (auto* n = top.sub("eigen")) {
    Section s(*n, "eigen");
    s.get("method", c.eigen.method);
    s.get("s_lo", c.eigen.s_lo);
    s.get("s_hi", c.eigen.s_hi);
    s.get("tol", c.eigen.tol);
    s.get("max_iter", c.eigen.max_iter);
    s.get("ladder_min", c.eigen.ladder_min);
    s.get("ladder_max", c.eigen.ladder_max);
    s.get("ladder_count", c.eigen.ladder_count);
    s.finish();
  }
  if (auto* n = top.sub("evolve")) {
    Section s(*n, "evolve");
    s.get("data", c.evolve.data);
    s.get("dt", c.evolve.dt);
    s.get("t_final", c.evolve.t_final);
    s.get("output_every", c.evolve.output_every);
    s.get("random_sets", c.evolve.random_sets);
    s.finish();
  }
  if (auto* n = top.sub("simulate")) {
    Section s(*n, "simulate");
    s.get("iota", c.simulate.iota);
    s.get("sweep_iota", c.simulate.sweep_iota);
    s.get("theta0", c.simulate.theta0);
    s.get("t_max", c.simulate.t_max);
    s.get("cells", c.simulate.cells);
    s.get("cfl", c.simulate.cfl);
    s.get("record_every", c.simulate.record_every);
    s.get("snapshot_every", c.simulate.snapshot_every);
    s.get("viscosity", c.simulate.viscosity);
    s.finish();
  }
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("output_dir", c.output_dir);
  top.finish();
  return c;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("parse error: ") + e.what());
  }
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = params;
  const auto& b = o.params;
  return a.gamma == b.gamma && a.entropy_k == b.entropy_k && a.shear_visc == b.shear_visc &&
         a.bulk_visc == b.bulk_visc && a.central_density == b.central_density && star_tol == o.star_tol &&
         grid == o.grid && eigen == o.eigen && evolve == o.evolve && simulate == o.simulate && seed == o.seed &&
         threads == o.threads && output_dir == o.output_dir;
}

RunConfig config_from_json(const std::string& text) { return from_tree(parse(text)); }

std::string config_to_json(const RunConfig& c, int indent) { return to_tree(c).dump(indent); }

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

RunConfig config_with_override(const RunConfig& c, const std::string& key, const std::string& value) {
  json tree = to_tree(c);
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) fail("unknown key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = parse(value);
  return from_tree(tree);
}

void validate_config(const RunConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) fail(msg);
  };
  const auto& p = c.params;
  require(p.entropy_k > 0 && p.central_density > 0, "K and rho_c must be positive");
  require(p.shear_visc >= 0 && p.bulk_visc >= 0, "viscosities must be non-negative");
  require(c.star_tol > 0, "params.star_tol must be positive");
  require(c.grid.elements >= 4, "grid.elements must be at least 4");
  require(c.grid.grading_inner > 0 && c.grid.grading_outer > 0, "gradings must be positive");
  require(c.grid.z_min_frac > 0 && c.grid.z_min_frac < 0.5, "grid.z_min_frac must lie in (0, 0.5)");
  require(c.grid.quad_points >= 2 && c.grid.quad_points <= 20, "grid.quad_points must lie in [2, 20]");
  require(c.grid.inner == "core_element" || c.grid.inner == "cutoff", "grid.inner must be core_element or cutoff");
  require(c.grid.mass_cells >= 8, "grid.mass_cells must be at least 8");
  const auto& e = c.eigen;
  require(e.method == "dense" || e.method == "shift_invert", "eigen.method must be dense or shift_invert");
  require(e.tol > 0, "eigen.tol must be positive");
  require(e.s_lo > 0, "eigen.s_lo must be positive");
  require(e.s_hi == 0 || e.s_hi > e.s_lo, "eigen.s_hi must be 0 or above s_lo");
  require(e.max_iter > 0, "eigen.max_iter must be positive");
  require(e.ladder_min > 0 && e.ladder_max > e.ladder_min, "eigen ladder needs 0 < ladder_min < ladder_max");
  require(e.ladder_count >= 2, "eigen.ladder_count must be at least 2");
  const auto& v = c.evolve;
  require(v.data == "mode" || v.data == "random", "evolve.data must be mode or random");
  require(v.dt >= 0 && v.t_final >= 0, "evolve.dt and evolve.t_final must be non-negative");
  require(v.output_every >= 1 && v.random_sets >= 1, "evolve.output_every and random_sets must be positive");
  const auto& s = c.simulate;
  require(s.theta0 > 0 && s.theta0 <= 0.1, "simulate.theta0 must lie in (0, 0.1]");
  require(!s.iota.empty(), "simulate.iota must not be empty");
  for (const auto* list : {&s.iota, &s.sweep_iota})
    for (double i : *list) require(i > 0 && i < s.theta0, fmt::format("iota {} must lie in (0, theta0)", i));
  require(s.t_max >= 0, "simulate.t_max must be non-negative");
  require(s.cells >= 8, "simulate.cells must be at least 8");
  require(s.cfl > 0 && s.cfl <= 1, "simulate.cfl must lie in (0, 1]");
  require(s.record_every >= 1 && s.snapshot_every >= 0, "simulate cadences must be positive");
  require(c.threads >= 0, "threads must be non-negative");
  require(!c.output_dir.empty(), "output_dir must not be empty");
}

std::string config_hash(const RunConfig& c) {
  // where and how parallel a run happens does not change its results
  json tree = to_tree(c);
  tree.erase("output_dir");
  tree.erase("threads");
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : tree.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace vstar
