/* SPDX-License-Identifier: Apache-2.0 */
#ifndef TOALOC_TOALOC_H
#define TOALOC_TOALOC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(TOALOC_BUILDING)
#define TOALOC_API __declspec(dllexport)
#else
#define TOALOC_API __declspec(dllimport)
#endif
#else
#define TOALOC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every call returning toaloc_status leaves a message for
 * toaloc_last_error() on failure. */
typedef enum toaloc_status {
  TOALOC_OK = 0,
  TOALOC_ERR_ARGUMENT = 1, /* bad argument or precondition */
  TOALOC_ERR_CONFIG = 2,   /* configuration / input file problem */
  TOALOC_ERR_RUNTIME = 3   /* numerical or I/O failure while running */
} toaloc_status;

typedef enum toaloc_stage {
  TOALOC_STAGE_SIMULATE = 0,
  TOALOC_STAGE_CALIBRATE = 1,
  TOALOC_STAGE_SOLVE = 2,
  TOALOC_STAGE_TRACK = 3
} toaloc_stage;

typedef struct toaloc_experiment toaloc_experiment;
typedef struct toaloc_report toaloc_report;
typedef struct toaloc_prior toaloc_prior;

typedef struct toaloc_record {
  int epoch_id;
  const char* solver; /* owned by the experiment */
  double error_meters;
  int heard;
  int iterations;
  int converged;
} toaloc_record;

typedef struct toaloc_report_row {
  const char* solver; /* owned by the report */
  size_t count;
  double p50;
  double p90;
  double mean;
  double convergence_rate;
  double ratio_p50; /* against the first solver */
  double ratio_p90;
} toaloc_report_row;

typedef struct toaloc_calibration_entry {
  int ap_id;
  double delta_T_hat;
  int n_obs;
  double std_err;
} toaloc_calibration_entry;

typedef struct toaloc_track_row {
  double epoch_time;
  int dimension;
  double mean[6];     /* position then velocity */
  double variance[6]; /* covariance diagonal, same order */
  int updated;        /* 0: prediction only */
  double nis;
} toaloc_track_row;

TOALOC_API const char* toaloc_version(void);

/* Message of the last failed call on this thread; "" when none. */
TOALOC_API const char* toaloc_last_error(void);

/* Experiments. */
TOALOC_API toaloc_status toaloc_experiment_load(const char* config_path, toaloc_experiment** out);
/* base_dir resolves relative scenario file paths; may be NULL. */
TOALOC_API toaloc_status toaloc_experiment_parse(const char* config_json, const char* base_dir,
                                                 toaloc_experiment** out);
TOALOC_API void toaloc_experiment_free(toaloc_experiment* exp);

TOALOC_API toaloc_status toaloc_experiment_set_seed(toaloc_experiment* exp, uint64_t seed);
TOALOC_API toaloc_status toaloc_experiment_set_output_dir(toaloc_experiment* exp, const char* dir);
/* Comma separated subset of "ep,linear,nonlinear". */
TOALOC_API toaloc_status toaloc_experiment_set_solvers(toaloc_experiment* exp, const char* solvers);

/* Run the pipeline through `stage`, replacing earlier results. With
 * write_artifacts != 0 the outputs go to the configured directory. */
TOALOC_API toaloc_status toaloc_experiment_run(toaloc_experiment* exp, toaloc_stage stage, int write_artifacts);

TOALOC_API toaloc_status toaloc_experiment_epoch_count(const toaloc_experiment* exp, size_t* out);
TOALOC_API toaloc_status toaloc_experiment_skipped_count(const toaloc_experiment* exp, size_t* out);
TOALOC_API toaloc_status toaloc_experiment_record_count(const toaloc_experiment* exp, size_t* out);
TOALOC_API toaloc_status toaloc_experiment_get_record(const toaloc_experiment* exp, size_t index, toaloc_record* out);
TOALOC_API toaloc_status toaloc_experiment_calibration_count(const toaloc_experiment* exp, size_t* out);
TOALOC_API toaloc_status toaloc_experiment_get_calibration_entry(const toaloc_experiment* exp, size_t index,
                                                             toaloc_calibration_entry* out);
TOALOC_API toaloc_status toaloc_experiment_track_count(const toaloc_experiment* exp, size_t* out);
TOALOC_API toaloc_status toaloc_experiment_get_track_row(const toaloc_experiment* exp, size_t index,
                                                     toaloc_track_row* out);
/* records.csv as it would be written, NUL terminated. *needed receives the
 * size including the terminator; buf may be NULL to query it. */
TOALOC_API toaloc_status toaloc_experiment_records_csv(const toaloc_experiment* exp, char* buf, size_t capacity,
                                                       size_t* needed);

/* Reports. */
TOALOC_API toaloc_status toaloc_experiment_report(const toaloc_experiment* exp, toaloc_report** out);
TOALOC_API toaloc_status toaloc_report_from_records_csv(const char* path, toaloc_report** out);
TOALOC_API toaloc_status toaloc_report_row_count(const toaloc_report* report, size_t* out);
TOALOC_API toaloc_status toaloc_report_get_row(const toaloc_report* report, size_t index, toaloc_report_row* out);
/* Writes report.csv, report.json and cdf.csv into dir. */
TOALOC_API toaloc_status toaloc_report_write(const toaloc_report* report, const char* dir);
TOALOC_API void toaloc_report_free(toaloc_report* report);

/* NLOS bias prior on the grid l * sigma_clk / 10. */
TOALOC_API toaloc_status toaloc_prior_create(double sigma_clk, int K, int L, toaloc_prior** out);
TOALOC_API toaloc_status toaloc_prior_line_of_sight(double sigma_clk, toaloc_prior** out);
TOALOC_API toaloc_status toaloc_prior_size(const toaloc_prior* prior, size_t* out);
/* Copies min(size, capacity) masses. */
TOALOC_API toaloc_status toaloc_prior_masses(const toaloc_prior* prior, double* out, size_t capacity);
TOALOC_API toaloc_status toaloc_prior_bias(const toaloc_prior* prior, size_t index, double* out);
TOALOC_API void toaloc_prior_free(toaloc_prior* prior);

/* One epoch solved directly. AP positions are row-major n_aps x dimension.
 * Observation 0 need not be the reference; reference_ap names it. */
typedef struct toaloc_epoch_input {
  int dimension;
  size_t n_aps;
  const int* ap_ids;
  const double* ap_positions;
  size_t n_obs;
  const int* obs_ap_ids;
  const double* toas;
  int reference_ap;
  const double* cal_delays; /* per AP, may be NULL */
  const double* box_lo;     /* EP search box; NULL: APs' bounding box */
  const double* box_hi;
} toaloc_epoch_input;

typedef struct toaloc_solution {
  double position[3];
  double tau;
  double covariance[16]; /* (x, tau), row-major (D+1)^2; zero for baselines */
  int iterations;
  int converged;
} toaloc_solution;

/* solver: "ep", "linear" or "nonlinear". prior and sigma_clk are used by ep
 * only; prior may be NULL for the line-of-sight prior. */
TOALOC_API toaloc_status toaloc_solve_epoch(const char* solver, const toaloc_epoch_input* input,
                                            const toaloc_prior* prior, double sigma_clk, toaloc_solution* out);

/* Statistics. */
/* sorted_out and fraction_out each hold n values. */
TOALOC_API toaloc_status toaloc_empirical_cdf(const double* errors, size_t n, double* sorted_out,
                                              double* fraction_out);
/* Nearest-rank percentile, p in (0, 1]. */
TOALOC_API toaloc_status toaloc_percentile(const double* values, size_t n, double p, double* out);

#ifdef __cplusplus
}
#endif

#endif /* TOALOC_TOALOC_H */
