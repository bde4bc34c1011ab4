#ifndef LITD_LITD_H
#define LITD_LITD_H

/*
 * C interface to the local-iteration distillation engine.
 *
 * Every function that can fail returns a litd_status; 0 means success and
 * anything else is an error whose human-readable message is available from
 * litd_last_error() until the next failing call on the same thread. Output
 * strings are heap-allocated and must be released with litd_string_free;
 * handles must be released with their matching *_free function. Handles are
 * not thread-safe; treat each as confined to one thread at a time.
 */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum litd_status {
  LITD_OK = 0,
  LITD_ERR_INVALID_ARGUMENT = 1,
  LITD_ERR_PARSE = 2,
  LITD_ERR_RESOURCE = 3,
  LITD_ERR_INFEASIBLE = 4,
  LITD_ERR_ALIGNMENT = 5,
  LITD_ERR_TRAIN = 6,
  LITD_ERR_UNDEFINED_VALUE = 7,
  LITD_ERR_IO = 8
} litd_status;

/* Library version string, e.g. "litd 0.1.0". Never fails. */
const char* litd_version(void);

/* Message of this thread's most recent failure; empty string if none. */
const char* litd_last_error(void);

/* Release a string returned through a char** output parameter. NULL is ok. */
void litd_string_free(char* s);

/* ---------------------------------------------------------------------- */
/* Opaque handles.                                                        */

typedef struct litd_config litd_config; /* experiment configuration        */
typedef struct litd_model litd_model;   /* per-vertex trees + layer count  */
typedef struct litd_source litd_source; /* teacher to distill from         */

/* ---------------------------------------------------------------------- */
/* Configuration: the INI dialect with [experiment], [probe], [mlp],      */
/* [distill], and [separation] sections. Parsing an empty string yields   */
/* the defaults.                                                          */

litd_status litd_config_parse(const char* text, litd_config** out);
litd_status litd_config_render(const litd_config* cfg, char** out_text);

/* Override one key, validating the result; section names match the INI
 * sections. */
litd_status litd_config_set(litd_config* cfg, const char* section, const char* key,
                            const char* value);

/* Hash of the canonical rendering; keys cached sweep cells. */
uint64_t litd_config_hash(const litd_config* cfg);
void litd_config_free(litd_config* cfg);

/* ---------------------------------------------------------------------- */
/* Models.                                                                */

/* Fresh truth: one uniformly random complete depth-`depth` tree per vertex
 * over the non-identifier inputs. */
litd_status litd_model_random(uint32_t n, int l, int depth, uint64_t seed,
                              litd_model** out);
litd_status litd_model_parse(const char* text, litd_model** out);
litd_status litd_model_render(const litd_model* m, char** out_text);

/* Run on one instance; init holds one bit per vertex, adj one bit per
 * lexicographic upper-triangle edge slot. */
litd_status litd_model_run(const litd_model* m, uint64_t init, uint64_t adj,
                           int* out_bit);

/* Exact agreement over the full instance space (small spaces only). */
litd_status litd_model_agreement(const litd_model* a, const litd_model* b,
                                 double* out);
void litd_model_free(litd_model* m);

/* ---------------------------------------------------------------------- */
/* Sources.                                                               */

/* Build the backend the config names (oracle or mlp) for this truth. */
litd_status litd_source_build(const litd_model* truth, const litd_config* cfg,
                              litd_source** out);
litd_status litd_source_parse(const char* checkpoint, litd_source** out);
litd_status litd_source_render(const litd_source* s, char** out_checkpoint);
litd_status litd_source_predict(const litd_source* s, uint64_t init, uint64_t adj,
                                int* out_bit);
litd_status litd_source_accuracy(const litd_source* s, const litd_model* truth,
                                 int samples, uint64_t seed, double* out);
void litd_source_free(litd_source* s);

/* ---------------------------------------------------------------------- */
/* Probing and distillation.                                              */

/* Linear probe of one conjunction (e.g. "x0&!x5") against the source's
 * latent; tau <= 0 requests the unconstrained fit. Risks are squared-error
 * on held-out and training halves. */
litd_status litd_probe_clause(const litd_source* s, const char* clause, int l,
                              double tau, double epsilon, double delta,
                              uint64_t sample_cap, uint64_t seed,
                              double* out_test_risk, double* out_train_risk);

/* Distill the source per the config's [distill] section at the given tree
 * depth and top-k width (k = 0 branches on accept/reject). truth may be
 * NULL; when given, the report includes agreement against it. The report is
 * a JSON object; either output pointer may be NULL if not wanted. */
litd_status litd_distill(const litd_source* src, const litd_config* cfg, int depth,
                         uint32_t k, const litd_model* truth, litd_model** out_model,
                         char** out_report);

/* ---------------------------------------------------------------------- */
/* Experiment drivers; each returns a CSV with provenance comments.       */

litd_status litd_run_lrh(const litd_config* cfg, char** out_csv);
litd_status litd_run_e2e(const litd_config* cfg, char** out_csv);
litd_status litd_run_separation(const litd_config* cfg, char** out_csv);

/* Markdown formatting pass over a driver CSV. */
litd_status litd_csv_markdown(const char* csv, char** out_md);

#ifdef __cplusplus
}
#endif

#endif /* LITD_LITD_H */
