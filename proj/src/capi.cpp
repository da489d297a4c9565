#include "vstar/vstar.h"

#include <new>
#include <utility>
#include <string>

#include "vstar/error.hpp"
#include "vstar/pipeline.hpp"

struct vs_config {
  vstar::RunConfig cfg;
  std::string json, hash;
};

struct vs_session {
  vstar::Pipeline pipeline;
  vstar::RunSummary last;
  explicit vs_session(const vstar::RunConfig& c) : pipeline(c) {}
};

namespace {

thread_local std::string g_error;
thread_local std::string g_kind;

vs_status set_error(vs_status st, const std::string& kind, const std::string& msg) {
  g_kind = kind;
  g_error = msg;
  return st;
}

vs_status classify(const vstar::Error& e, vstar::Stage stage) {
  using vstar::Errc;
  switch (e.code()) {
    case Errc::unsupported_gamma:
    case Errc::config_error:
    case Errc::invalid_argument:
    case Errc::infinite_support:
      return VS_ERR_CONFIG;
    case Errc::stable_regime:
    case Errc::no_unstable_window:
      return VS_ERR_NO_INSTABILITY;
    default:
      break;
  }
  switch (stage) {
    case vstar::Stage::evolve: return VS_ERR_EVOLVE;
    case vstar::Stage::simulate: return VS_ERR_SIMULATE;
    default: return VS_ERR_SOLVER;
  }
}

// runs f, translating exceptions into status codes and the thread-local error
template <class F>
vs_status guarded(const vstar::Pipeline* p, F&& f) {
  try {
    f();
    g_error.clear();
    g_kind.clear();
    return VS_OK;
  } catch (const vstar::Error& e) {
    return set_error(classify(e, p ? p->stage() : vstar::Stage::config), vstar::errc_name(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(VS_ERR_INTERNAL, "out-of-memory", "out of memory");
  } catch (const std::exception& e) {
    return set_error(VS_ERR_INTERNAL, "internal", e.what());
  }
}

template <class F>
vs_status in_session(vs_session* s, F&& f) {
  if (!s) return set_error(VS_ERR_CONFIG, "invalid-argument", "null session");
  return guarded(&s->pipeline, std::forward<F>(f));
}

vs_status null_arg(const char* what) { return set_error(VS_ERR_CONFIG, "invalid-argument", std::string("null ") + what); }

}  // namespace

extern "C" {

const char* vs_version(void) {
  static const std::string v = vstar::vstar_version();
  return v.c_str();
}

const char* vs_last_error(void) { return g_error.c_str(); }
const char* vs_last_error_kind(void) { return g_kind.c_str(); }

vs_status vs_config_new(vs_config** out) {
  if (!out) return null_arg("output pointer");
  return guarded(nullptr, [&] { *out = new vs_config{}; });
}

vs_status vs_config_parse(const char* json, vs_config** out) {
  if (!json || !out) return null_arg("argument");
  return guarded(nullptr, [&] { *out = new vs_config{vstar::config_from_json(json), {}, {}}; });
}

vs_status vs_config_load(const char* path, vs_config** out) {
  if (!path || !out) return null_arg("argument");
  return guarded(nullptr, [&] { *out = new vs_config{vstar::load_config(path), {}, {}}; });
}

vs_status vs_config_set(vs_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return null_arg("argument");
  return guarded(nullptr, [&] { cfg->cfg = vstar::config_with_override(cfg->cfg, key, value); });
}

vs_status vs_config_validate(const vs_config* cfg) {
  if (!cfg) return null_arg("config");
  return guarded(nullptr, [&] { vstar::validate_config(cfg->cfg); });
}

const char* vs_config_json(vs_config* cfg) {
  if (!cfg) return "";
  cfg->json = vstar::config_to_json(cfg->cfg);
  return cfg->json.c_str();
}

const char* vs_config_hash(vs_config* cfg) {
  if (!cfg) return "";
  cfg->hash = vstar::config_hash(cfg->cfg);
  return cfg->hash.c_str();
}

void vs_config_free(vs_config* cfg) { delete cfg; }

vs_status vs_session_new(const vs_config* cfg, vs_session** out) {
  if (!cfg || !out) return null_arg("argument");
  return guarded(nullptr, [&] { *out = new vs_session(cfg->cfg); });
}

void vs_session_free(vs_session* s) { delete s; }

vs_status vs_star_info(vs_session* s, double* radius, double* mass) {
  return in_session(s, [&] {
    const auto& st = s->pipeline.star();
    if (radius) *radius = st.radius;
    if (mass) *mass = st.mass;
  });
}

vs_status vs_growth_rate(vs_session* s, double* lambda) {
  return in_session(s, [&] {
    double l = s->pipeline.fixed_point().lambda;
    if (lambda) *lambda = l;
  });
}

vs_status vs_relaxed_eigenvalue(vs_session* s, double s_value, double* mu) {
  return in_session(s, [&] {
    auto r = vstar::mu_of_s(s->pipeline.star(), s->pipeline.forms(), s_value);
    if (mu) *mu = r.mu;
  });
}

vs_status vs_run(vs_session* s, const char* command, const char* out_dir) {
  if (!command) return null_arg("command");
  return in_session(s, [&] {
    vstar::Command c = vstar::parse_command(command);
    s->last = s->pipeline.run(c, out_dir ? out_dir : "");
  });
}

const char* vs_run_report(vs_session* s) { return s ? s->last.text.c_str() : ""; }
const char* vs_run_metadata(vs_session* s) { return s ? s->last.json.c_str() : ""; }
size_t vs_run_warning_count(vs_session* s) { return s ? s->last.warnings.size() : 0; }
const char* vs_run_warning(vs_session* s, size_t i) {
  return s && i < s->last.warnings.size() ? s->last.warnings[i].c_str() : "";
}

}  // extern "C"
