#include "vstar/pipeline.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <thread>

#include "vstar/csv.hpp"
#include "vstar/error.hpp"

namespace vstar {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

// smooth admissible data z^3 (a + b t + c t^2), t = z / R, J-normalized
Vec random_poly(const QuadraticForms& f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  double a = U(rng), b = U(rng), c = U(rng), R = f.grid.radius;
  Vec full = interpolate(
      f.grid, [&](double z) { double t = z / R; return z * z * z * (a + b * t + c * t * t); },
      [&](double z) { double t = z / R; return z * z * (3 * a + 4 * b * t + 5 * c * t * t); });
  Vec v = restrict_free(f.grid, full);
  return v / std::sqrt(QuadraticForms::form(f.J, v));
}

double linear_norm0(const QuadraticForms& f, const Vec& phi, const Vec& phi_dot) {
  return std::sqrt(norm0_squared(f, phi, Vec(-phi_dot / (4 * kPi))));
}

struct Fit {
  double slope = 0, intercept = 0;
};

Fit line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  Fit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

class Output {
 public:
  Output(const std::string& dir, RunSummary& s) : dir_(dir), s_(s) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(Errc::config_error, "cannot create output directory " + dir + ": " + ec.message());
  }
  std::string path(const std::string& name) {
    s_.files.push_back(name);
    return (fs::path(dir_) / name).string();
  }
  void text(const std::string& name, const std::string& body) {
    std::ofstream out(path(name), std::ios::binary);
    out << body;
    if (!out) throw Error(Errc::config_error, "cannot write " + name);
  }

 private:
  std::string dir_;
  RunSummary& s_;
};

void line(RunSummary& s, const std::string& l) { s.text += l + "\n"; }

void write_snapshot(const DiscreteStar& eq, const FluidState& st, const std::string& path) {
  // rho on row i belongs to the cell [x_i, x_{i+1}]; the surface row carries vacuum
  CsvWriter w(path, {"x", "rho", "v", "r"});
  for (std::size_t i = 0; i < eq.x.size(); ++i) w.row({eq.x[i], i < st.rho.size() ? st.rho[i] : 0.0, st.v[i], st.r[i]});
}

void write_trajectory(const std::vector<TrajectoryRow>& rows, const std::string& path) {
  CsvWriter w(path, {"t", "sqrtE0", "E0v", "E0sigma", "E0r", "D0", "E1", "E2", "phys_energy", "sup_sigma", "sup_r"});
  for (const auto& r : rows)
    w.row({r.t, r.sqrtE0, r.E0v, r.E0sigma, r.E0r, r.D0, r.E1, r.E2, r.phys_energy, r.sup_sigma, r.sup_r});
}

double balance_worst(const std::vector<TrajectoryRow>& rows) {
  double w = 0;
  for (const auto& b : energy_balance_residual(rows))
    if (b.dissipation > 0) w = std::max(w, std::abs(b.residual) / b.dissipation);
  return w;
}

ojson instability_json(const InstabilityResult& r) {
  ojson fit = {{"rate", num(r.fit.rate)},
               {"r2", num(r.fit.r2)},
               {"samples", r.fit.samples},
               {"valid", r.fit_valid},
               {"relative_error", r.fit_valid ? num(r.fit.rate / r.lambda - 1) : ojson(nullptr)}};
  return {{"iota", r.iota},
          {"theta0", r.theta0},
          {"dt", r.dt},
          {"steps", r.steps},
          {"escape_time", r.escape_time},
          {"predicted_escape", r.predicted_escape},
          {"escape_relative_error", r.escape_time / r.predicted_escape - 1},
          {"rate_fit", fit},
          {"sup_sigma_max", r.sup_sigma_max},
          {"sup_r_max", r.sup_r_max},
          {"final_amplitude", r.final_amplitude},
          {"max_mass_defect", r.max_mass_defect},
          {"density_clips", r.clips},
          {"energy_balance_worst", balance_worst(r.rows)}};
}

std::string gnuplot_header(const std::string& out) {
  return fmt::format("set datafile separator ','\nset terminal pngcairo size 900,600\nset output '{}'\n", out);
}

}  // namespace

struct Pipeline::Commands {
  static ojson versions() {
    return {{"vstar", vstar_version()},
            {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
            {"fmt", FMT_VERSION},
            {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                          NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}};
  }

  // everything that can be computed; unavailable entries are null with the reason alongside
  static ojson derived(Pipeline& p, RunSummary& s) {
    ojson d;
    const auto& st = p.star();
    d["C0"] = 2 * sup_x_over_r3(st);
    try {
      auto lb = lambda_lower_bound(st);
      d["C1"] = lb.C1;
      d["C2"] = lb.C2;
      d["lambda_lower_bound"] = lb.bound;
    } catch (const Error& e) {
      d["C1"] = d["C2"] = d["lambda_lower_bound"] = nullptr;
      d["lower_bound_unavailable"] = e.what();
    }
    Stage keep = p.stage_;
    try {
      const auto& fp = p.fixed_point();
      const auto& f = p.forms();
      d["lambda"] = fp.lambda;
      // K0, K1 of the modal data phi, lambda phi
      const Vec& phi = fp.eig.phi;
      double K0 = std::pow(norm1(f, Vec(fp.lambda * phi)), 2) + 0.5 * std::pow(norm3(f, phi), 2);
      d["K0"] = K0;
      d["K1"] = 2 * K0 / fp.lambda + 2 * std::pow(norm2(f, phi), 2);
    } catch (const Error& e) {
      p.stage_ = keep;
      d["lambda"] = d["K0"] = d["K1"] = nullptr;
      d["lambda_unavailable"] = e.what();
      s.warnings.push_back(std::string("growth rate unavailable: ") + e.what());
    }
    return d;
  }

  static void finish(Pipeline& p, Command c, Output& out, RunSummary& s, ojson results, ojson derived) {
    ojson meta = {{"command", command_name(c)},
                  {"config_hash", config_hash(p.cfg_)},
                  {"config", ojson::parse(config_to_json(p.cfg_))},
                  {"versions", versions()},
                  {"derived", std::move(derived)},
                  {"results", std::move(results)},
                  {"warnings", s.warnings}};
    std::string name = std::string(command_name(c)) + ".json";
    s.files.push_back(name);
    meta["files"] = s.files;
    s.json = meta.dump(2) + "\n";
    s.files.pop_back();
    out.text(name, s.json);
  }

  static void star(Pipeline& p, Output& out, RunSummary& s) {
    p.stage_ = Stage::star;
    const auto& st = p.star();
    const double gamma = st.params.gamma, n = st.params.index();
    if (gamma > 4.0 / 3.0)
      s.warnings.push_back(fmt::format("gamma = {} exceeds 4/3: stable regime, no growing mode is expected", gamma));
    write_z_profile_csv(st, out.path("star_profile.csv"));
    write_mass_map_csv(st, out.path("mass_map.csv"));

    double z1 = st.radius * (1 - 1e-3), z2 = st.radius * (1 - 1e-2);
    double ez = std::log(st.rho(z2) / st.rho(z1)) / std::log((st.radius - z2) / (st.radius - z1));
    const auto& m = st.mass_grid;
    std::vector<double> lx, ly;
    for (std::size_t i = m.cells() - 10; i < m.cells(); ++i) {
      lx.push_back(std::log(m.mass_above[i]));
      ly.push_back(std::log(m.rho0[i]));
    }
    double ex = line_fit(lx, ly).slope;
    double hyd = hydrostatic_residual(st);

    line(s, fmt::format("gamma            {}", gamma));
    line(s, fmt::format("polytropic index {}", format_number(n)));
    line(s, fmt::format("radius R         {}", format_number(st.radius)));
    line(s, fmt::format("mass M           {}", format_number(st.mass)));
    line(s, fmt::format("rho0 ~ (R - r)^a a = {} (expected {})", format_number(ez), format_number(n)));
    line(s, fmt::format("rho0 ~ (M - x)^b b = {} (expected {})", format_number(ex), format_number(1 / gamma)));
    line(s, fmt::format("hydrostatic residual {}", format_number(hyd)));

    ojson res = {{"radius", st.radius},
                 {"mass", st.mass},
                 {"alpha", st.alpha},
                 {"index", n},
                 {"xi1", st.emden.first_zero ? ojson(*st.emden.first_zero) : ojson(nullptr)},
                 {"boundary_exponents",
                  {{"radius_measured", ez}, {"radius_expected", n}, {"mass_measured", ex}, {"mass_expected", 1 / gamma}}},
                 {"hydrostatic_residual", hyd},
                 {"sup_x_over_r3", sup_x_over_r3(st)}};
    out.text("plot_star.gp", gnuplot_header("star.png") +
                                 "set multiplot layout 1,2\nset xlabel 'z'\n"
                                 "plot 'star_profile.csv' skip 1 using 1:2 with lines title 'rho0'\n"
                                 "set xlabel 'x'\n"
                                 "plot 'mass_map.csv' skip 1 using 1:2 with lines title 'r0(x)'\n"
                                 "unset multiplot\n");
    ojson d = derived(p, s);
    finish(p, Command::star, out, s, std::move(res), std::move(d));
  }

  static void mode(Pipeline& p, Output& out, RunSummary& s) {
    p.stage_ = Stage::mode;
    const auto& st = p.star();
    const auto& f = p.forms();
    const auto& fp = p.fixed_point();
    p.stage_ = Stage::mode;
    auto lb = lambda_lower_bound(st);
    auto [C3, C4] = affine_constants(f);
    const auto& e = p.cfg_.eigen;
    EigenMethod method = e.method == "dense" ? EigenMethod::dense : EigenMethod::shift_invert;

    CsvWriter ladder(out.path("mu_ladder.csv"), {"s", "mu", "el_residual", "bc_residual", "e1", "upper", "lower"});
    bool monotone = true, sandwiched = true;
    double prev = -INFINITY;
    for (int k = 0; k < e.ladder_count; ++k) {
      double sv = e.ladder_min * std::pow(e.ladder_max / e.ladder_min, double(k) / (e.ladder_count - 1));
      auto r = mu_of_s(st, f, sv, method);
      double up = sv * lb.C1 - lb.C2, lo = sv * C4 - C3;
      monotone = monotone && r.mu > prev;
      sandwiched = sandwiched && r.mu <= up + 1e-10 * std::abs(up) && r.mu >= lo - 1e-10 * std::abs(lo);
      prev = r.mu;
      ladder.row({sv, r.mu, r.el_residual, r.bc_residual, r.e1, up, lo});
    }
    {
      CsvWriter w(out.path("fixed_point_samples.csv"), {"s", "mu"});
      for (auto [sv, mu] : fp.samples) w.row({sv, mu});
    }
    const auto& gm = p.mode();
    {
      CsvWriter w(out.path("mode_profile.csv"), {"x", "sigma", "v", "w", "phi"});
      for (std::size_t i = 0; i < gm.x.size(); ++i) w.row({gm.x[i], gm.sigma_x[i], gm.v_x[i], gm.w_x[i], gm.phi_x[i]});
    }
    double lam = fp.lambda;
    double fp_res = std::abs(lam * lam + fp.eig.mu) / (lam * lam);
    double ode_res = growing_mode_residual(st, gm);
    bool above = lam >= lb.bound;

    line(s, fmt::format("lambda*          {}", format_number(lam)));
    line(s, fmt::format("lower bound      {} ({})", format_number(lb.bound), above ? "holds" : "VIOLATED"));
    line(s, fmt::format("C1 {}  C2 {}  C3 {}  C4 {}", format_number(lb.C1), format_number(lb.C2), format_number(C3),
                        format_number(C4)));
    line(s, fmt::format("|lambda^2 + mu(lambda)| / lambda^2 = {}", format_number(fp_res)));
    line(s, fmt::format("mu ladder: {} points on [{}, {}], {}", e.ladder_count, format_number(e.ladder_min),
                        format_number(e.ladder_max), monotone ? "strictly increasing" : "NOT monotone"));
    line(s, fmt::format("mode equation residual {}", format_number(ode_res)));
    if (!monotone) s.warnings.push_back("mu ladder is not strictly increasing");
    if (!sandwiched) s.warnings.push_back("mu ladder leaves the affine sandwich");
    if (!above) s.warnings.push_back("lambda* is below the lower bound");

    ojson gm03 = ojson::array();
    for (double v : gm.gm03) gm03.push_back(num(v));
    ojson res = {{"lambda", lam},
                 {"fixed_point_residual", fp_res},
                 {"s0", fp.s0},
                 {"evaluations", fp.evaluations},
                 {"lower_bound", {{"C1", lb.C1}, {"C2", lb.C2}, {"bound", lb.bound}, {"holds", above}}},
                 {"affine", {{"C3", C3}, {"C4", C4}}},
                 {"ladder", {{"monotone", monotone}, {"sandwiched", sandwiched}}},
                 {"mode",
                  {{"norm0", gm.norm0},
                   {"equation_residual", ode_res},
                   {"v_origin", gm.v_origin},
                   {"sigma_surface", gm.sigma_surface},
                   {"trace_phi", gm.trace_d0},
                   {"trace_dphi", gm.trace_d1},
                   {"integrals", gm03}}}};
    out.text("plot_mode.gp", gnuplot_header("mode.png") +
                                 "set multiplot layout 1,2\nset xlabel 's'\nset logscale x\n"
                                 "plot 'mu_ladder.csv' skip 1 using 1:2 with linespoints title 'mu(s)', "
                                 "'' skip 1 using 1:6 with lines title 'upper', '' skip 1 using 1:7 with lines title 'lower'\n"
                                 "unset logscale x\nset xlabel 'x'\n"
                                 "plot 'mode_profile.csv' skip 1 using 1:2 with lines title 'sigma', "
                                 "'' skip 1 using 1:3 with lines title 'v'\n"
                                 "unset multiplot\n");
    ojson d = derived(p, s);
    finish(p, Command::mode, out, s, std::move(res), std::move(d));
  }

  static void evolve(Pipeline& p, Output& out, RunSummary& s) {
    const auto& st = p.star();
    const auto& f = p.forms();
    const auto& fp = p.fixed_point();
    p.stage_ = Stage::evolve;
    const auto& e = p.cfg_.evolve;
    const double lam = fp.lambda, C0 = 2 * sup_x_over_r3(st);
    EvolveOptions o;
    o.dt = e.dt > 0 ? e.dt : 0.05 / lam;
    o.t_final = e.t_final > 0 ? e.t_final : 5.0 / lam;
    o.output_every = e.output_every;

    struct DataSet {
      std::string name;
      Vec phi, phi_dot;
    };
    std::vector<DataSet> sets;
    if (e.data == "mode") {
      sets.push_back({"mode", fp.eig.phi, lam * fp.eig.phi});
    } else {
      std::mt19937_64 rng(p.cfg_.seed);
      for (int k = 0; k < e.random_sets; ++k) {
        Vec a = random_poly(f, rng), b = random_poly(f, rng);
        sets.push_back({fmt::format("random_{}", k), a, b});
      }
    }

    ojson runs = ojson::array();
    bool all = true;
    for (const auto& ds : sets) {
      auto tr = evolve_second_order(f, ds.phi, ds.phi_dot, o);
      auto rep = verify_growth_bounds(f, tr, lam, C0);
      all = all && rep.all();
      std::vector<double> n0(tr.states.size());
      for (std::size_t i = 0; i < n0.size(); ++i) n0[i] = linear_norm0(f, tr.states[i].phi, tr.states[i].phi_dot);
      {
        CsvWriter w(out.path("linear_trajectory_" + ds.name + ".csv"), {"t", "norm1", "norm2", "norm3", "norm0", "rate_fit"});
        for (std::size_t i = 0; i < n0.size(); ++i) {
          // local rate of norm0, forward difference on the first row
          std::size_t a = i == 0 ? 0 : i - 1, b = i == 0 ? std::min<std::size_t>(1, n0.size() - 1) : i;
          double rate = b > a ? std::log(n0[b] / n0[a]) / (tr.states[b].t - tr.states[a].t) : 0.0;
          w.row({tr.states[i].t, rep.norm1[i], rep.norm2[i], rep.norm3[i], n0[i], rate});
        }
      }
      {
        const auto& last = tr.states.back();
        std::vector<double> sigma, w_x;
        Vec w_free = -last.phi_dot / (4 * kPi);
        state_on_mass_grid(st, f.grid, last.phi, w_free, sigma, w_x);
        FeFunction phi{&f.grid, expand(f.grid, last.phi)};
        const auto& m = st.mass_grid;
        CsvWriter w(out.path("linear_profile_" + ds.name + ".csv"), {"x", "sigma", "v", "w", "phi"});
        for (std::size_t i = 0; i < m.x.size(); ++i) {
          double z = m.r0[i];
          w.row({m.x[i], sigma[i], z > 0 ? w_x[i] / (z * z) : 0.0, w_x[i], z > 0 ? phi.value(z) : 0.0});
        }
      }
      double scale = kinetic_energy(f, ds.phi_dot) + std::abs(potential_energy(f, ds.phi)), defect = 0;
      for (double d : tr.energy_defect) defect = std::max(defect, std::abs(d));
      std::vector<double> t;
      for (const auto& x : tr.states) t.push_back(x.t);
      ojson fit = nullptr;
      if (t.size() >= 10) {
        auto g = measure_growth_rate(t, n0, 0.0, o.t_final);
        fit = {{"rate", g.rate}, {"r2", g.r2}, {"relative_error", g.rate / lam - 1}};
      }
      ojson r = {{"data", ds.name},
                 {"K0", rep.K0},
                 {"K1", rep.K1},
                 {"holds", {rep.holds1, rep.holds2, rep.holds3}},
                 {"worst_ratio", {rep.worst1, rep.worst2, rep.worst3}},
                 {"energy_identity_defect", scale > 0 ? defect / scale : defect},
                 {"norm0_rate_fit", fit}};
      if (ds.name == "mode") {
        double n1 = norm1(f, ds.phi), worst = 0;
        for (std::size_t i = 0; i < t.size(); ++i)
          worst = std::max(worst, std::abs(rep.norm1[i] / (std::exp(lam * t[i]) * n1) - 1));
        r["amplitude_deviation"] = worst;
        line(s, fmt::format("modal amplitude vs exp(lambda t): max deviation {}", format_number(worst)));
      }
      line(s, fmt::format("{:10} bounds {} {} {} (worst ratios {:.4g} {:.4g} {:.4g})", ds.name,
                          rep.holds1 ? "pass" : "FAIL", rep.holds2 ? "pass" : "FAIL", rep.holds3 ? "pass" : "FAIL",
                          rep.worst1, rep.worst2, rep.worst3));
      runs.push_back(std::move(r));
    }
    line(s, fmt::format("growth-bound report: {}", all ? "all-pass" : "FAIL"));
    if (!all) s.warnings.push_back("a growth bound failed");
    ojson res = {{"lambda", lam}, {"C0", C0}, {"dt", o.dt}, {"t_final", o.t_final}, {"all_pass", all}, {"runs", runs}};
    out.text("plot_evolve.gp",
             gnuplot_header("evolve.png") + "set logscale y\nset xlabel 't'\nplot 'linear_trajectory_" +
                 sets.front().name + ".csv' skip 1 using 1:5 with lines title 'norm0', '' skip 1 using 1:2 with lines title 'norm1'\n");
    ojson d = derived(p, s);
    finish(p, Command::evolve, out, s, std::move(res), std::move(d));
  }

  static InstabilityOptions instability_options(const RunConfig& c, double iota) {
    InstabilityOptions o;
    o.iota = iota;
    o.theta0 = c.simulate.theta0;
    o.t_max = c.simulate.t_max;
    o.record_every = c.simulate.record_every;
    o.sim.cells = c.simulate.cells;
    o.sim.cfl = c.simulate.cfl;
    o.sim.viscosity = c.simulate.viscosity;
    return o;
  }

  static void simulate(Pipeline& p, Output& out, RunSummary& s) {
    const auto& st = p.star();
    const auto& gm = p.mode();
    const auto& eq = p.discrete();
    p.stage_ = Stage::simulate;
    const auto& c = p.cfg_.simulate;
    ojson runs = ojson::array();
    for (std::size_t k = 0; k < c.iota.size(); ++k) {
      auto r = run_instability(st, eq, gm, instability_options(p.cfg_, c.iota[k]), true);
      std::string tag = fmt::format("simulate_{}", k);
      write_trajectory(r.rows, out.path(tag + "_trajectory.csv"));
      ojson snaps = ojson::array();
      for (std::size_t m = 0; m < r.snapshots.size(); ++m) {
        bool keep = m == 0 || m + 1 == r.snapshots.size() || (c.snapshot_every > 0 && m % c.snapshot_every == 0);
        if (!keep) continue;
        std::string name = fmt::format("{}_snapshot_{:05}.csv", tag, m);
        write_snapshot(eq, r.snapshots[m], out.path(name));
        snaps.push_back({{"t", r.snapshots[m].t}, {"file", name}});
      }
      ojson j = instability_json(r);
      j["snapshots"] = snaps;
      runs.push_back(j);
      line(s, fmt::format("iota {:g}: escape_time {} predicted {} ({:+.2f}%)", r.iota, format_number(r.escape_time),
                          format_number(r.predicted_escape), 100 * (r.escape_time / r.predicted_escape - 1)));
      if (r.fit_valid)
        line(s, fmt::format("  rate fit {} vs lambda {} ({:+.2f}%), r2 {:.6f}", format_number(r.fit.rate),
                            format_number(r.lambda), 100 * (r.fit.rate / r.lambda - 1), r.fit.r2));
      else
        s.warnings.push_back(fmt::format("iota {:g}: too few samples in the linear window for a rate fit", r.iota));
      line(s, fmt::format("  sup|sigma/rho0| {:.3g}  sup|1-r0/r| {:.3g}  energy balance {:.3g}  clips {}",
                          r.sup_sigma_max, r.sup_r_max, balance_worst(r.rows), r.clips));
      if (!r.valid()) s.warnings.push_back(fmt::format("iota {:g}: density floor was hit", r.iota));
    }
    ojson res = {{"lambda", gm.lambda},
                 {"discrete_radius", eq.radius},
                 {"equilibrium_residual", eq.residual},
                 {"runs", runs}};
    out.text("plot_simulate.gp", gnuplot_header("simulate.png") +
                                     "set logscale y\nset xlabel 't'\n"
                                     "plot 'simulate_0_trajectory.csv' skip 1 using 1:2 with lines title 'sqrt E0'\n");
    ojson d = derived(p, s);
    finish(p, Command::simulate, out, s, std::move(res), std::move(d));
  }

  static void sweep(Pipeline& p, Output& out, RunSummary& s) {
    const auto& st = p.star();
    const auto& gm = p.mode();
    const auto& eq = p.discrete();
    p.stage_ = Stage::simulate;
    const auto& list = p.cfg_.simulate.sweep_iota;
    if (list.size() < 2) throw Error(Errc::config_error, "a sweep needs at least two iota values");
    const std::size_t n = list.size();
    std::vector<InstabilityResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    unsigned workers = p.cfg_.threads > 0 ? unsigned(p.cfg_.threads) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, unsigned(n));
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t k = next++; k < n; k = next++) {
            try {
              results[k] = run_instability(st, eq, gm, instability_options(p.cfg_, list[k]));
            } catch (...) {
              errors[k] = std::current_exception();
            }
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    std::vector<double> L, T;
    ojson runs = ojson::array();
    CsvWriter table(out.path("sweep.csv"), {"iota", "ln_inv_iota", "escape_time", "predicted_escape", "rate_fit"});
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = results[k];
      write_trajectory(r.rows, out.path(fmt::format("sweep_{}_trajectory.csv", k)));
      L.push_back(std::log(1 / r.iota));
      T.push_back(r.escape_time);
      table.row({r.iota, L.back(), r.escape_time, r.predicted_escape, r.fit_valid ? r.fit.rate : NAN});
      runs.push_back(instability_json(r));
      line(s, fmt::format("iota {:g}: escape_time {}", r.iota, format_number(r.escape_time)));
    }
    Fit fit = line_fit(L, T);
    double inv = 1 / gm.lambda, rel = fit.slope / inv - 1;
    line(s, fmt::format("slope of escape_time vs ln(1/iota) {} vs 1/lambda {} ({:+.2f}%)", format_number(fit.slope),
                        format_number(inv), 100 * rel));
    ojson res = {{"lambda", gm.lambda},
                 {"slope", fit.slope},
                 {"intercept", fit.intercept},
                 {"inverse_lambda", inv},
                 {"slope_relative_error", rel},
                 {"workers", workers},
                 {"runs", runs}};
    out.text("plot_sweep.gp", gnuplot_header("sweep.png") +
                                  fmt::format("set xlabel 'ln(1/iota)'\nset ylabel 'escape time'\n"
                                              "plot 'sweep.csv' skip 1 using 2:3 with points pt 7 title 'measured', "
                                              "{} * x + {} with lines title 'fit', "
                                              "'' skip 1 using 2:4 with lines title 'ln(theta0/iota)/lambda'\n",
                                              format_number(fit.slope), format_number(fit.intercept)));
    ojson d = derived(p, s);
    finish(p, Command::sweep, out, s, std::move(res), std::move(d));
  }
};

Command parse_command(const std::string& name) {
  for (Command c : {Command::star, Command::mode, Command::evolve, Command::simulate, Command::sweep})
    if (name == command_name(c)) return c;
  throw Error(Errc::invalid_argument, "unknown command " + name);
}

const char* command_name(Command c) {
  switch (c) {
    case Command::star: return "star";
    case Command::mode: return "mode";
    case Command::evolve: return "evolve";
    case Command::simulate: return "simulate";
    case Command::sweep: return "sweep";
  }
  return "?";
}

std::string vstar_version() { return "1.0.0"; }

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) { validate_config(cfg_); }

namespace {
// sets the stage while a lazy product is built; an escaping error leaves it in place
class StageScope {
 public:
  StageScope(Stage& s, Stage now) : s_(s), prev_(s) { s_ = now; }
  void done() { s_ = prev_; }

 private:
  Stage& s_;
  Stage prev_;
};
}  // namespace

const StationaryStar& Pipeline::star() {
  if (!star_) {
    StageScope sc(stage_, Stage::star);
    StarOptions o;
    o.tol = cfg_.star_tol;
    o.mass_cells = cfg_.grid.mass_cells;
    star_ = build_star(cfg_.params, o);
    sc.done();
  }
  return *star_;
}

const QuadraticForms& Pipeline::forms() {
  if (!forms_) {
    const auto& st = star();
    StageScope sc(stage_, Stage::mode);
    GridOptions g;
    g.n_elements = cfg_.grid.elements;
    g.grading_inner = cfg_.grid.grading_inner;
    g.grading_outer = cfg_.grid.grading_outer;
    g.z_min_frac = cfg_.grid.z_min_frac;
    g.quad_points = cfg_.grid.quad_points;
    g.inner = cfg_.grid.inner == "cutoff" ? InnerBoundary::cutoff : InnerBoundary::core_element;
    forms_ = assemble_forms(st, build_grid(st, g));
    sc.done();
  }
  return *forms_;
}

const FixedPoint& Pipeline::fixed_point() {
  if (!fp_) {
    const auto& st = star();
    const auto& f = forms();
    StageScope sc(stage_, Stage::mode);
    FixedPointOptions o;
    o.s_lo = cfg_.eigen.s_lo;
    o.s_hi = cfg_.eigen.s_hi;
    o.tol = cfg_.eigen.tol;
    o.max_iter = cfg_.eigen.max_iter;
    o.method = cfg_.eigen.method == "dense" ? EigenMethod::dense : EigenMethod::shift_invert;
    fp_ = find_fixed_point(st, f, o);
    sc.done();
  }
  return *fp_;
}

const GrowingMode& Pipeline::mode() {
  if (!mode_) {
    const auto& fp = fixed_point();
    StageScope sc(stage_, Stage::mode);
    mode_ = reconstruct_mode(*star_, *forms_, fp);
    sc.done();
  }
  return *mode_;
}

const DiscreteStar& Pipeline::discrete() {
  if (!eq_) {
    const auto& st = star();
    StageScope sc(stage_, Stage::simulate);
    eq_ = discrete_equilibrium(st, cfg_.simulate.cells);
    sc.done();
  }
  return *eq_;
}

RunSummary Pipeline::run(Command c, const std::string& out_dir) {
  stage_ = Stage::config;
  RunSummary s;
  Output out(out_dir.empty() ? cfg_.output_dir : out_dir, s);
  switch (c) {
    case Command::star: Commands::star(*this, out, s); break;
    case Command::mode: Commands::mode(*this, out, s); break;
    case Command::evolve: Commands::evolve(*this, out, s); break;
    case Command::simulate: Commands::simulate(*this, out, s); break;
    case Command::sweep: Commands::sweep(*this, out, s); break;
  }
  stage_ = Stage::config;
  return s;
}

}  // namespace vstar
