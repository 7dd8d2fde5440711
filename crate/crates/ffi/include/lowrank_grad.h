#ifndef LOWRANK_GRAD_H
#define LOWRANK_GRAD_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LrgAdamBiasMode {
  LRG_ADAM_BIAS_MODE_STANDARD = 0,
  LRG_ADAM_BIAS_MODE_PAPER = 1,
} LrgAdamBiasMode;

typedef enum LrgOptimizerKind {
  LRG_OPTIMIZER_KIND_GD = 0,
  LRG_OPTIMIZER_KIND_MOMENTUM = 1,
  LRG_OPTIMIZER_KIND_ADAM = 2,
} LrgOptimizerKind;

typedef enum LrgProjection {
  LRG_PROJECTION_NONE = 0,
  LRG_PROJECTION_RANDOM = 1,
  LRG_PROJECTION_SVD = 2,
} LrgProjection;

typedef enum LrgStatus {
  LRG_STATUS_OK = 0,
  LRG_STATUS_NULL_POINTER = 1,
  LRG_STATUS_INVALID_ARGUMENT = 2,
  LRG_STATUS_DIMENSION_MISMATCH = 3,
  LRG_STATUS_NON_FINITE = 4,
  LRG_STATUS_SVD_NOT_CONVERGED = 5,
  LRG_STATUS_DIVERGED = 6,
  LRG_STATUS_IO = 7,
  LRG_STATUS_PANIC = 8,
} LrgStatus;

/**
 * Low-rank optimizer for one weight matrix plus its random stream.
 */
typedef struct LrgLowRank LrgLowRank;

/**
 * Result of a toy training run.
 */
typedef struct LrgRunResult LrgRunResult;

typedef struct LrgOptimizerSpec {
  enum LrgOptimizerKind kind;
  double learning_rate;
  double momentum_coeff;
  double beta1;
  double beta2;
  double epsilon;
  enum LrgAdamBiasMode adam_bias_mode;
} LrgOptimizerSpec;

typedef struct LrgExperimentConfig {
  size_t dim;
  size_t rank;
  size_t steps;
  struct LrgOptimizerSpec optimizer;
  enum LrgProjection projection;
  uint64_t seed;
  size_t report_every;
  bool reset_factor_state_each_step;
} LrgExperimentConfig;

typedef struct LrgTrainRecord {
  size_t step;
  double loss;
  double predicted_delta;
  double cumulative_wall_time;
} LrgTrainRecord;

typedef struct LrgLayer {
  size_t rows;
  size_t cols;
} LrgLayer;

typedef struct LrgMemoryReport {
  size_t weight_slots;
  size_t optimizer_state_slots;
  size_t factor_slots;
  size_t factor_state_slots;
  size_t transient_gradient_slots;
  size_t total_slots;
  size_t total_bytes;
} LrgMemoryReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *lrg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lrg_version(void);

/**
 * Optimizer spec of `kind` with default coefficients.
 */
struct LrgOptimizerSpec lrg_optimizer_spec_default(enum LrgOptimizerKind kind,
                                                   double learning_rate);

/**
 * Creates a low-rank optimizer for a `rows×cols` weight matrix.
 *
 * # Safety
 * `spec` must point to a valid spec and `out` to writable storage for one
 * pointer.
 */
enum LrgStatus lrg_lowrank_new(const struct LrgOptimizerSpec *spec,
                               enum LrgProjection projection,
                               size_t rows,
                               size_t cols,
                               size_t rank,
                               uint64_t seed,
                               bool reset_factor_state_each_step,
                               struct LrgLowRank **out);

/**
 * Applies one low-rank update to `weights` in place given `gradient`.
 * Both buffers hold `rows·cols` doubles, row-major. `predicted_delta` may be
 * NULL; otherwise it receives the first-order loss-change prediction.
 *
 * # Safety
 * `handle` must come from [`lrg_lowrank_new`]; the buffers must hold `len`
 * doubles and must not alias.
 */
enum LrgStatus lrg_lowrank_step(struct LrgLowRank *handle,
                                double *weights,
                                const double *gradient,
                                size_t len,
                                double *predicted_delta);

/**
 * # Safety
 * `handle` must be NULL or come from [`lrg_lowrank_new`] and not be used
 * afterwards.
 */
void lrg_lowrank_free(struct LrgLowRank *handle);

/**
 * Trains the toy objective with `config`.
 *
 * # Safety
 * `config` must point to a valid config and `out` to writable storage for
 * one pointer.
 */
enum LrgStatus lrg_run_experiment(const struct LrgExperimentConfig *config,
                                  struct LrgRunResult **out);

/**
 * Number of records, or 0 for NULL.
 *
 * # Safety
 * `result` must be NULL or come from [`lrg_run_experiment`].
 */
size_t lrg_run_result_record_count(const struct LrgRunResult *result);

/**
 * # Safety
 * `result` must come from [`lrg_run_experiment`]; `out` must be writable.
 */
enum LrgStatus lrg_run_result_record(const struct LrgRunResult *result,
                                     size_t index,
                                     struct LrgTrainRecord *out);

/**
 * Final loss, or NaN for NULL.
 *
 * # Safety
 * `result` must be NULL or come from [`lrg_run_experiment`].
 */
double lrg_run_result_final_loss(const struct LrgRunResult *result);

/**
 * Loss before the first step, or NaN for NULL.
 *
 * # Safety
 * `result` must be NULL or come from [`lrg_run_experiment`].
 */
double lrg_run_result_initial_loss(const struct LrgRunResult *result);

/**
 * Seconds spent in update computation, or NaN for NULL.
 *
 * # Safety
 * `result` must be NULL or come from [`lrg_run_experiment`].
 */
double lrg_run_result_wall_time(const struct LrgRunResult *result);

/**
 * Writes the run as CSV to the UTF-8 path `path`.
 *
 * # Safety
 * `result` must come from [`lrg_run_experiment`]; `path` must be a
 * NUL-terminated string.
 */
enum LrgStatus lrg_run_result_write_csv(const struct LrgRunResult *result, const char *path);

/**
 * # Safety
 * `result` must be NULL or come from [`lrg_run_experiment`] and not be used
 * afterwards.
 */
void lrg_run_result_free(struct LrgRunResult *result);

/**
 * Memory of full-rank training.
 *
 * # Safety
 * `layers` must point to `count` layers; `out` must be writable.
 */
enum LrgStatus lrg_full_rank_memory(const struct LrgLayer *layers,
                                    size_t count,
                                    enum LrgOptimizerKind kind,
                                    bool include_gradient,
                                    size_t bytes_per_slot,
                                    struct LrgMemoryReport *out);

/**
 * Memory of low-rank training at `rank`.
 *
 * # Safety
 * `layers` must point to `count` layers; `out` must be writable.
 */
enum LrgStatus lrg_low_rank_memory(const struct LrgLayer *layers,
                                   size_t count,
                                   enum LrgOptimizerKind kind,
                                   size_t rank,
                                   bool include_gradient,
                                   size_t bytes_per_slot,
                                   struct LrgMemoryReport *out);

/**
 * Largest rank at which low-rank training does not use more memory than
 * full-rank training.
 *
 * # Safety
 * `layers` must point to `count` layers; `out` must be writable.
 */
enum LrgStatus lrg_crossover_rank(const struct LrgLayer *layers,
                                  size_t count,
                                  enum LrgOptimizerKind kind,
                                  size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOWRANK_GRAD_H */
