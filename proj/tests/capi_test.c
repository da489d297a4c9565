#include <math.h>
#include <stdio.h>
#include <string.h>

#include "vstar/vstar.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static void defaults_and_overrides(void) {
  vs_config* cfg = NULL;
  EXPECT(vs_config_new(&cfg) == VS_OK);
  EXPECT(strstr(vs_config_json(cfg), "\"gamma\": 1.25") != NULL);
  char hash[32];
  snprintf(hash, sizeof hash, "%s", vs_config_hash(cfg));
  EXPECT(strlen(hash) == 16);
  EXPECT(vs_config_set(cfg, "params.gamma", "1.3") == VS_OK);
  EXPECT(strcmp(hash, vs_config_hash(cfg)) != 0);
  EXPECT(vs_config_set(cfg, "params.gamma", "1.25") == VS_OK);
  EXPECT(strcmp(hash, vs_config_hash(cfg)) == 0);

  EXPECT(vs_config_set(cfg, "params.unknown", "1") == VS_ERR_CONFIG);
  EXPECT(strcmp(vs_last_error_kind(), "config-error") == 0);
  EXPECT(vs_config_set(cfg, "simulate.iota", "[0.5]") == VS_OK);
  EXPECT(vs_config_validate(cfg) == VS_ERR_CONFIG);
  vs_session* s = NULL;
  EXPECT(vs_session_new(cfg, &s) == VS_ERR_CONFIG);
  EXPECT(s == NULL);
  EXPECT(strstr(vs_last_error(), "iota") != NULL);
  vs_config_free(cfg);

  EXPECT(vs_config_parse("{\"params\": ", &cfg) == VS_ERR_CONFIG);
  EXPECT(vs_config_load("/nonexistent.json", &cfg) == VS_ERR_CONFIG);
  EXPECT(vs_config_new(NULL) == VS_ERR_CONFIG);
  EXPECT(vs_run(NULL, "star", NULL) == VS_ERR_CONFIG);
}

static void session_queries(const char* out) {
  vs_config* cfg = NULL;
  EXPECT(vs_config_parse("{\"grid\": {\"elements\": 64}}", &cfg) == VS_OK);
  vs_session* s = NULL;
  EXPECT(vs_session_new(cfg, &s) == VS_OK);
  vs_config_free(cfg);

  double R = 0, M = 0, lambda = 0, mu = 0;
  EXPECT(vs_star_info(s, &R, &M) == VS_OK);
  EXPECT(R > 9 && R < 10);
  EXPECT(M > 0);
  EXPECT(vs_growth_rate(s, &lambda) == VS_OK);
  EXPECT(fabs(lambda - 0.207) < 2e-3);
  EXPECT(vs_relaxed_eigenvalue(s, lambda, &mu) == VS_OK);
  EXPECT(fabs(lambda * lambda + mu) < 1e-7 * lambda * lambda);
  EXPECT(vs_relaxed_eigenvalue(s, -1.0, &mu) == VS_ERR_CONFIG);

  EXPECT(vs_run(s, "mode", out) == VS_OK);
  EXPECT(strstr(vs_run_report(s), "lambda*") != NULL);
  EXPECT(strstr(vs_run_metadata(s), "\"config_hash\"") != NULL);
  EXPECT(vs_run_warning_count(s) == 0);
  EXPECT(vs_run(s, "plot", out) == VS_ERR_CONFIG);
  vs_session_free(s);
}

static void error_classes(const char* out) {
  struct {
    const char* key;
    const char* value;
    const char* command;
    vs_status expected;
    const char* kind;
  } cases[] = {
      {"params.gamma", "0.9", "star", VS_ERR_CONFIG, "unsupported-gamma"},
      {"params.gamma", "1.34", "mode", VS_ERR_NO_INSTABILITY, "no-unstable-window"},
      {"simulate.t_max", "5", "simulate", VS_ERR_SIMULATE, "no-escape"},
  };
  for (size_t i = 0; i < sizeof cases / sizeof cases[0]; ++i) {
    vs_config* cfg = NULL;
    vs_session* s = NULL;
    EXPECT(vs_config_new(&cfg) == VS_OK);
    EXPECT(vs_config_set(cfg, "grid.elements", "64") == VS_OK);
    EXPECT(vs_config_set(cfg, "simulate.cells", "64") == VS_OK);
    EXPECT(vs_config_set(cfg, cases[i].key, cases[i].value) == VS_OK);
    EXPECT(vs_session_new(cfg, &s) == VS_OK);
    vs_status st = vs_run(s, cases[i].command, out);
    EXPECT(st == cases[i].expected);
    EXPECT(strcmp(vs_last_error_kind(), cases[i].kind) == 0);
    if (st != cases[i].expected) fprintf(stderr, "  case %zu: status %d, %s\n", i, (int)st, vs_last_error());
    vs_session_free(s);
    vs_config_free(cfg);
  }
}

int main(int argc, char** argv) {
  const char* out = argc > 1 ? argv[1] : "capi_out";
  EXPECT(strlen(vs_version()) > 0);
  defaults_and_overrides();
  session_queries(out);
  error_classes(out);
  printf("%s (%d failures)\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
