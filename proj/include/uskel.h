/*
 * uskel — universal skeleton-based action recognition, C API.
 *
 * A thin extern-C facade over the C++ core: opaque handles, integer status
 * codes, and UTF-8 JSON strings for structured results. Every function
 * returns USKEL_OK (0) on success; on failure uskel_last_error() describes
 * the problem for the calling thread. Strings returned through out-params
 * are heap-allocated and must be released with uskel_string_free().
 */
#ifndef USKEL_H
#define USKEL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uskel_status {
    USKEL_OK = 0,
    USKEL_ERR_RUNTIME = 1, /* numerical or I/O failure */
    USKEL_ERR_CONFIG = 2   /* bad configuration, missing or malformed input */
} uskel_status;

const char* uskel_version(void);

/* Last error message for the calling thread; empty string if none. */
const char* uskel_last_error(void);

void uskel_string_free(char* s);

/* Synthetic corpus generation. Reads a generation spec (JSON) and writes
 * per-format corpus JSONL files, a sample manifest, a format registry and an
 * interpolation adjacency table into out_dir. seed_override < 0 keeps the
 * spec's seed. */
uskel_status uskel_generate(const char* genspec_path, const char* out_dir, int64_t seed_override);

/* Deterministic synthetic label embeddings. labels_path is either a JSON
 * {"labels":[{"id","name"},...]} document or a generator manifest.json;
 * unseen_ids (may be NULL) marks ids as unseen in the written bank. */
uskel_status uskel_synth_bank(const char* labels_path, int32_t dim, uint64_t seed,
                              const int32_t* unseen_ids, size_t n_unseen, const char* out_path);

/* Balanced k-means over a label bank; writes the cluster map JSON including
 * the derived cluster-level bank. */
uskel_status uskel_cluster_labels(const char* bank_path, int32_t k, uint64_t seed,
                                  int32_t max_iter, const char* out_path);

/* Stratified 70/30 (train_frac) split over a sample manifest JSONL, with
 * head/medium/tail strata from train-set frequencies. cluster_map_path may be
 * NULL when label ids are already cluster ids. */
uskel_status uskel_split_corpus(const char* manifest_path, const char* cluster_map_path,
                                double train_frac, uint64_t seed, const char* out_path);

/* Full training run driven by a run-config JSON. seed_override < 0 keeps the
 * config seed; resume != 0 continues from the checkpoints in out_dir. */
uskel_status uskel_train(const char* config_path, int64_t seed_override, int32_t resume);

/* Central-difference gradient check of the full training objective on a small
 * seeded model (dimensions from the config file). Writes the maximum relative
 * error; returns USKEL_OK also when the tolerance is exceeded — compare
 * against your own threshold. */
uskel_status uskel_grad_check(const char* config_path, double* out_max_rel_err);

/* ---- model handle --------------------------------------------------------- */

typedef struct uskel_model uskel_model;

uskel_status uskel_model_open(const char* config_path, const char* checkpoint_path,
                              uskel_model** out_model);

/* Score-level ensemble over several checkpoints of the same architecture. */
uskel_status uskel_model_open_ensemble(const char* config_path,
                                       const char* const* checkpoint_paths, size_t n,
                                       uskel_model** out_model);

void uskel_model_close(uskel_model* model);

/* Evaluates on the configured split (test side when present). gamma < 0 takes
 * the config's eval_gamma. corpus_path may be NULL to use the configured
 * corpus files, or point to one corpus JSONL to evaluate instead (the same
 * line-index sample ids apply). Returns the EvalReport as JSON. */
uskel_status uskel_model_evaluate(uskel_model* model, double gamma, const char* corpus_path,
                                  char** out_report_json);

/* Seen/unseen calibration sweep; returns JSON rows of
 * {gamma, S, U, H, seen_predicted}. */
uskel_status uskel_model_sweep_gamma(uskel_model* model, double from, double to, double step,
                                     char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* USKEL_H */
