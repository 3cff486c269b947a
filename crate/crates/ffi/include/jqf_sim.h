#ifndef JQF_SIM_H
#define JQF_SIM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Initial qubit state of a reflection run.
 */
typedef enum JqfQubitState {
  JQF_QUBIT_STATE_GROUND = 0,
  JQF_QUBIT_STATE_EXCITED = 1,
} JqfQubitState;

/**
 * Result code of every fallible call.
 */
typedef enum JqfStatus {
  JQF_STATUS_OK = 0,
  JQF_STATUS_NULL_POINTER = 1,
  JQF_STATUS_INVALID_ARGUMENT = 2,
  JQF_STATUS_CONFIG = 3,
  JQF_STATUS_DOMAIN = 4,
  JQF_STATUS_NUMERIC = 5,
  JQF_STATUS_IO = 6,
  JQF_STATUS_BUFFER_TOO_SMALL = 7,
  JQF_STATUS_PANIC = 8,
} JqfStatus;

/**
 * System configuration.
 */
typedef struct JqfConfig JqfConfig;

/**
 * π-pulse control problem at a fixed truncation and pulse shape.
 */
typedef struct JqfControl JqfControl;

/**
 * Sampled curve: equal-length named columns.
 */
typedef struct JqfCurve JqfCurve;

/**
 * Diagonalized model built from a configuration.
 */
typedef struct JqfModel JqfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t jqf_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jqf_version(void);

/**
 * Bundled parameter set.
 *
 * # Safety
 * `out_config` must be a valid pointer.
 */
enum JqfStatus jqf_config_paper(struct JqfConfig **out_config);

/**
 * Parse and validate a configuration from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_config` a valid pointer.
 */
enum JqfStatus jqf_config_from_json(const char *json, struct JqfConfig **out_config);

/**
 * Set one entry by dotted key, e.g. `subsystems.1.f_a_Hz`. The value is
 * parsed as JSON. The configuration is left unchanged if the result is invalid.
 *
 * # Safety
 * `config` must come from this library; `key` and `value` NUL-terminated strings.
 */
enum JqfStatus jqf_config_set(struct JqfConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must be null or come from this library, and not be used afterwards.
 */
void jqf_config_free(struct JqfConfig *config);

/**
 * Diagonalize every subsystem of `config`.
 *
 * # Safety
 * `config` must come from this library; `out_model` a valid pointer.
 */
enum JqfStatus jqf_model_new(const struct JqfConfig *config, struct JqfModel **out_model);

/**
 * Total Hilbert-space dimension.
 *
 * # Safety
 * `model` must come from this library; `out_dim` a valid pointer.
 */
enum JqfStatus jqf_model_dim(const struct JqfModel *model, size_t *out_dim);

/**
 * Number of subsystems in the chain.
 *
 * # Safety
 * `model` must come from this library; `out_n` a valid pointer.
 */
enum JqfStatus jqf_model_subsystems(const struct JqfModel *model, size_t *out_n);

/**
 * Transition frequency `ω_{m,j'j}` between eigenstates `j` and `j'` of subsystem `m`.
 *
 * # Safety
 * `model` must come from this library; `out_omega` a valid pointer.
 */
enum JqfStatus jqf_model_transition(const struct JqfModel *model,
                                    size_t m,
                                    size_t j,
                                    size_t jp,
                                    double *out_omega);

/**
 * # Safety
 * `model` must be null or come from this library, and not be used afterwards.
 */
void jqf_model_free(struct JqfModel *model);

/**
 * Dispersive shift `χ` of a transmon coupled to a resonator.
 *
 * # Safety
 * `out_chi` must be a valid pointer.
 */
enum JqfStatus jqf_dispersive_shift(double g,
                                    double omega_r,
                                    double omega_a,
                                    double alpha,
                                    double *out_chi);

/**
 * Free decay of the qubit. Columns: `t_s, F, F_tilde, n_res, n_jqf`.
 * `t_final <= 0` and `n_steps == 0` select the defaults.
 *
 * # Safety
 * `config` must come from this library; `out_curve` a valid pointer.
 */
enum JqfStatus jqf_decay(const struct JqfConfig *config,
                         double t_final,
                         size_t n_steps,
                         size_t samples,
                         struct JqfCurve **out_curve);

/**
 * Delay-differential decay. Columns: `t_s, F, norm`.
 *
 * # Safety
 * `config` must come from this library; `out_curve` a valid pointer.
 */
enum JqfStatus jqf_dde_decay(const struct JqfConfig *config,
                             double t_final,
                             uint64_t n_steps,
                             size_t samples,
                             struct JqfCurve **out_curve);

/**
 * Reflection coefficient at each of `n` drive frequencies, written to
 * `out_re` and `out_im`. `t_final <= 0` and `n_steps == 0` select the defaults.
 *
 * # Safety
 * `omega_d`, `out_re`, `out_im` must each hold `n` doubles.
 */
enum JqfStatus jqf_reflection(const struct JqfConfig *config,
                              const double *omega_d,
                              size_t n,
                              double omega_1,
                              enum JqfQubitState state,
                              double t_final,
                              size_t n_steps,
                              double *out_re,
                              double *out_im);

/**
 * # Safety
 * `curve` must come from this library; `out_rows` and `out_columns` valid pointers.
 */
enum JqfStatus jqf_curve_shape(const struct JqfCurve *curve, size_t *out_rows, size_t *out_columns);

/**
 * Copy column `column` into `buf`, which must hold at least the row count.
 *
 * # Safety
 * `curve` must come from this library; `buf` must hold `len` doubles.
 */
enum JqfStatus jqf_curve_column(const struct JqfCurve *curve,
                                size_t column,
                                double *buf,
                                size_t len);

/**
 * # Safety
 * `curve` must be null or come from this library, and not be used afterwards.
 */
void jqf_curve_free(struct JqfCurve *curve);

/**
 * π-pulse problem on `config` as truncated, with `n_coeffs` basis functions,
 * duration `t_final`, `n_steps` RK4 steps and peak amplitude `omega_max`.
 *
 * # Safety
 * `config` must come from this library; `out_control` a valid pointer.
 */
enum JqfStatus jqf_control_new(const struct JqfConfig *config,
                               size_t n_coeffs,
                               double t_final,
                               size_t n_steps,
                               double omega_max,
                               struct JqfControl **out_control);

/**
 * Fidelity `F̃` reached by the pulse with coefficients `a`, `b` (`n_coeffs` each).
 *
 * # Safety
 * `a` and `b` must hold `n_coeffs` doubles; `out_fidelity` a valid pointer.
 */
enum JqfStatus jqf_control_fidelity(const struct JqfControl *control,
                                    const double *a,
                                    const double *b,
                                    double *out_fidelity);

/**
 * `F̃` and its gradient with respect to `a` and `b`.
 *
 * # Safety
 * `a`, `b`, `grad_a`, `grad_b` must hold `n_coeffs` doubles; `out_fidelity` a valid pointer.
 */
enum JqfStatus jqf_control_gradient(const struct JqfControl *control,
                                    const double *a,
                                    const double *b,
                                    double *out_fidelity,
                                    double *grad_a,
                                    double *grad_b);

/**
 * # Safety
 * `control` must be null or come from this library, and not be used afterwards.
 */
void jqf_control_free(struct JqfControl *control);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JQF_SIM_H */
