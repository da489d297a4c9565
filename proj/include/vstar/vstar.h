#ifndef VSTAR_VSTAR_H
#define VSTAR_VSTAR_H

#include <stddef.h>

#if defined(_WIN32)
#define VS_API __declspec(dllexport)
#else
#define VS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the command line tool. */
typedef enum vs_status {
  VS_OK = 0,
  VS_ERR_CONFIG = 2,         /* bad configuration, unsupported gamma, bad argument */
  VS_ERR_SOLVER = 3,         /* star, grid, eigen or mode construction failed */
  VS_ERR_NO_INSTABILITY = 4, /* stable regime or no unstable window */
  VS_ERR_EVOLVE = 5,         /* linear evolution failed */
  VS_ERR_SIMULATE = 6,       /* nonlinear run failed */
  VS_ERR_INTERNAL = 9
} vs_status;

typedef struct vs_config vs_config;
typedef struct vs_session vs_session;

VS_API const char* vs_version(void);

/* Message and error-kind name (such as "unsupported-gamma") of the last failure on this thread. */
VS_API const char* vs_last_error(void);
VS_API const char* vs_last_error_kind(void);

/* Defaults reproduce the gamma = 1.25 case study. */
VS_API vs_status vs_config_new(vs_config** out);
VS_API vs_status vs_config_parse(const char* json, vs_config** out);
VS_API vs_status vs_config_load(const char* path, vs_config** out);
/* key is dotted ("params.gamma", "simulate.iota"), value is JSON text ("1.3", "[1e-5,1e-6]"). */
VS_API vs_status vs_config_set(vs_config* cfg, const char* key, const char* value);
VS_API vs_status vs_config_validate(const vs_config* cfg);
/* Returned strings stay valid until the next call on the same handle or its destruction. */
VS_API const char* vs_config_json(vs_config* cfg);
VS_API const char* vs_config_hash(vs_config* cfg);
VS_API void vs_config_free(vs_config* cfg);

/* A session copies the configuration and caches the star, mode and discrete equilibrium between commands. */
VS_API vs_status vs_session_new(const vs_config* cfg, vs_session** out);
VS_API void vs_session_free(vs_session* s);

VS_API vs_status vs_star_info(vs_session* s, double* radius, double* mass);
VS_API vs_status vs_growth_rate(vs_session* s, double* lambda);
VS_API vs_status vs_relaxed_eigenvalue(vs_session* s, double s_value, double* mu);

/* command: "star", "mode", "evolve", "simulate" or "sweep"; out_dir NULL or "" selects the configured directory. */
VS_API vs_status vs_run(vs_session* s, const char* command, const char* out_dir);
/* Artifacts of the last successful vs_run. */
VS_API const char* vs_run_report(vs_session* s);
VS_API const char* vs_run_metadata(vs_session* s);
VS_API size_t vs_run_warning_count(vs_session* s);
VS_API const char* vs_run_warning(vs_session* s, size_t i);

#ifdef __cplusplus
}
#endif

#endif
