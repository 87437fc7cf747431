#ifndef DYADMODES_H
#define DYADMODES_H

/* C interface to the dyadmodes library.
 *
 * Every call returns a dm_status. On failure the thread-local message from
 * dm_last_error() describes the cause. Matrices are column-major. A negative
 * svd_rel_tol selects the default cutoff (eps * max(rows, cols) * sigma_max).
 * List-valued configuration fields are comma-separated strings; NULL or ""
 * selects the default list. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DM_BUILDING_LIBRARY)
#    define DM_API __declspec(dllexport)
#  else
#    define DM_API __declspec(dllimport)
#  endif
#else
#  define DM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dm_status {
  DM_OK = 0,
  DM_ERR_PARSE = 1,
  DM_ERR_DIMENSION_MISMATCH = 2,
  DM_ERR_VALIDATION = 3,
  DM_ERR_EMPTY_SESSION = 4,
  DM_ERR_PRECONDITION = 5,
  DM_ERR_NUMERICAL = 6,
  DM_ERR_DEGENERATE_TRAINING = 7,
  DM_ERR_INFEASIBLE_SPLIT = 8,
  DM_ERR_NOT_FOUND = 9,
  DM_ERR_IO = 10,
  DM_ERR_UNDEFINED_CORRELATION = 11,
  DM_ERR_INVALID_ARGUMENT = 12, /* null pointer or bad size */
  DM_ERR_INTERNAL = 13
} dm_status;

DM_API const char* dm_last_error(void);
DM_API const char* dm_status_name(dm_status status);
DM_API const char* dm_version(void);

/* ---- corpus -------------------------------------------------------------- */

typedef struct dm_corpus dm_corpus;

DM_API dm_status dm_corpus_load(const char* path, dm_corpus** out);
DM_API void dm_corpus_free(dm_corpus* corpus);
DM_API size_t dm_corpus_size(const dm_corpus* corpus);
DM_API size_t dm_corpus_dim(const dm_corpus* corpus);
/* Pointer stays valid for the lifetime of the corpus. */
DM_API const char* dm_corpus_session_id(const dm_corpus* corpus, size_t index);
/* labels: 12 entries in score-key order (11 sub-scores, then ctrs). */
DM_API dm_status dm_corpus_labels(const dm_corpus* corpus, size_t index, int* labels);

/* ---- stored models ------------------------------------------------------- */

typedef struct dm_model dm_model;

DM_API dm_status dm_model_load(const char* path, dm_model** out);
DM_API void dm_model_free(dm_model* model);
DM_API size_t dm_model_feature_dim(const dm_model* model);
/* Window size, n_lambda and input type ("T", "C" or "T+C") recorded at training. */
DM_API dm_status dm_model_metadata(const dm_model* model, int* w, int* n_lambda, const char** input_type);
DM_API dm_status dm_model_predict_proba(const dm_model* model, const double* feature, size_t n,
                                        double* proba);

/* ---- numerics ------------------------------------------------------------ */

/* out: cols x rows */
DM_API dm_status dm_pseudo_inverse(const double* m, size_t rows, size_t cols, double svd_rel_tol,
                                   double* out);

typedef struct dm_spectrum {
  size_t length;        /* min(d, w) */
  size_t nonzero_T;
  size_t nonzero_C;
  size_t rank;
  double residual;
  int degenerate;
} dm_spectrum;

/* Fits one window (each matrix d x w) and writes lambda_T / lambda_C as
 * interleaved (re, im) pairs, dominance-sorted; each buffer needs 2*min(d, w)
 * doubles. */
DM_API dm_status dm_window_spectrum(const double* y_past, const double* x_in, const double* y_next,
                                    size_t d, size_t w, double svd_rel_tol, double* lambda_T,
                                    double* lambda_C, dm_spectrum* info);

DM_API dm_status dm_f1_score(const int* preds, const int* truth, size_t n, double* f1);
DM_API dm_status dm_pearson(const double* x, const double* y, size_t n, double* r, double* p);

typedef struct dm_bootstrap {
  double mean;
  double sigma;
  double threshold_2sigma;
  double threshold_3sigma;
  double positive_fraction;
  int degenerate;
} dm_bootstrap;

DM_API dm_status dm_bootstrap_baseline(const int* labels, size_t n, int n_boot, uint64_t seed,
                                       dm_bootstrap* out);

/* ---- commands ------------------------------------------------------------ */

typedef struct dm_synth_config {
  const char* out; /* session file */
  uint64_t seed;
  int null_corpus;
  int dim;
  double noise_sigma;
  int n_sessions;
  int n_clients;
  int min_length;
  int max_length;
  int control_rank;
  /* Planted spectra as comma-separated values such as "0.9" or
   * "0.4+0.3i,0.4-0.3i"; NULL or "" keeps the default. */
  const char* lambda_T0;
  const char* lambda_T1;
  const char* lambda_C;
} dm_synth_config;

typedef struct dm_featurize_config {
  const char* input;
  const char* out; /* directory */
  const char* windows;
  const char* n_lambdas;
  const char* input_types;
  int stride;
  double svd_rel_tol;
  int jobs;
} dm_featurize_config;

typedef struct dm_evaluate_config {
  const char* input;
  const char* out; /* directory */
  const char* scores;
  const char* models;
  const char* windows;
  const char* n_lambdas;
  const char* input_types;
  const char* accumulators;
  const char* aggregators;
  int folds;
  uint64_t seed;
  int n_boot;
  int stride;
  double threshold;
  double svd_rel_tol;
  int jobs;
  int soft_sum;
} dm_evaluate_config;

typedef struct dm_evaluate_summary {
  size_t n_cells;
  size_t n_failed;
  size_t n_above_local;
  double best_local_f1;
  double best_global_f1;
} dm_evaluate_summary;

typedef struct dm_baseline_config {
  const char* input;
  const char* out; /* directory */
  const char* scores;
  const char* windows;
  int stride;
  int n_boot;
  uint64_t seed;
} dm_baseline_config;

typedef struct dm_trajectory_config {
  const char* input;
  const char* model;    /* stored model file */
  const char* out;      /* CSV file */
  const char* sessions; /* session ids; NULL or "" for all */
  int stride;
  double threshold;
  double svd_rel_tol;
} dm_trajectory_config;

DM_API void dm_synth_config_init(dm_synth_config* config);
DM_API void dm_featurize_config_init(dm_featurize_config* config);
DM_API void dm_evaluate_config_init(dm_evaluate_config* config);
DM_API void dm_baseline_config_init(dm_baseline_config* config);
DM_API void dm_trajectory_config_init(dm_trajectory_config* config);

DM_API dm_status dm_synth(const dm_synth_config* config);
DM_API dm_status dm_featurize(const dm_featurize_config* config);
/* DM_OK even when some grid cells failed; see summary->n_failed. */
DM_API dm_status dm_evaluate(const dm_evaluate_config* config, dm_evaluate_summary* summary);
DM_API dm_status dm_baseline(const dm_baseline_config* config);
DM_API dm_status dm_trajectory(const dm_trajectory_config* config);

#ifdef __cplusplus
}
#endif

#endif /* DYADMODES_H */
