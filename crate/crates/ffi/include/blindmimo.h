#ifndef BLINDMIMO_H
#define BLINDMIMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BM_ESTIMATOR_BLIND 0

#define BM_ESTIMATOR_BLIND_DNCNN 1

#define BM_ESTIMATOR_DATA_AIDED 2

/*
 Result code of every fallible call.
 */
typedef enum BmStatus {
  BM_STATUS_OK = 0,
  BM_STATUS_NULL_POINTER = 1,
  BM_STATUS_INVALID_ARGUMENT = 2,
  BM_STATUS_IO = 3,
  BM_STATUS_FORMAT = 4,
  BM_STATUS_ESTIMATION = 5,
  BM_STATUS_PANIC = 6,
} BmStatus;

/*
 Trained denoiser loaded from a weight file.
 */
typedef struct BmDenoiser BmDenoiser;

/*
 Experiment configuration that operating points are run against.
 */
typedef struct BmSimulation BmSimulation;

/*
 Metrics of one operating point.
 */
typedef struct BmMetricRecord {
  /*
   One of the `BM_ESTIMATOR_*` codes.
   */
  uint32_t estimator;
  size_t n_subcarriers;
  size_t n_users;
  size_t n_antennas;
  size_t constellation_order;
  size_t cp_len;
  size_t detection_symbols;
  double snr_db;
  double ebn0_db;
  uint64_t seed;
  size_t frames;
  size_t erasures;
  double channel_mse;
  double channel_mse_ci;
  /*
   NaN for the data-aided estimator.
   */
  double pilot_mse;
  /*
   NaN for the data-aided estimator.
   */
  double pilot_ser;
  double ber_detection;
  /*
   NaN for the data-aided estimator.
   */
  double ber_sounding;
  double ber;
  double throughput;
  size_t zf_fallbacks;
} BmMetricRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *bm_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call on the same thread.
 */
const char *bm_last_error(void);

/*
 Loads denoiser weights from `path` into `*out`.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BmStatus bm_denoiser_load(const char *path, struct BmDenoiser **out);

/*
 Side length N of the matrices the denoiser accepts, or 0 for NULL.

 # Safety
 `d` must be NULL or a handle from [`bm_denoiser_load`].
 */
size_t bm_denoiser_input_size(const struct BmDenoiser *d);

/*
 Denoises one row-major `n x n` complex matrix. `y` and `out` hold
 `2 n n` doubles and may alias.

 # Safety
 `d` must be a live handle; `y` and `out` must point to `2 n n` doubles.
 */
enum BmStatus bm_denoiser_denoise(const struct BmDenoiser *d,
                                  const double *y,
                                  size_t n,
                                  double *out);

/*
 # Safety
 `d` must be NULL or a handle from [`bm_denoiser_load`], freed at most once.
 */
void bm_denoiser_free(struct BmDenoiser *d);

/*
 Creates a simulation from a shipped profile ("desk" or "full").

 # Safety
 `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BmStatus bm_simulation_from_profile(const char *name, struct BmSimulation **out);

/*
 Creates a simulation from TOML configuration text.

 # Safety
 `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BmStatus bm_simulation_from_toml(const char *toml, struct BmSimulation **out);

/*
 Sets frames per point, master seed and worker threads (0 = all cores).

 # Safety
 `sim` must be a live handle.
 */
enum BmStatus bm_simulation_configure(struct BmSimulation *sim,
                                      size_t frames_per_point,
                                      uint64_t seed,
                                      size_t workers);

/*
 Simulates one operating point. `denoiser` may be NULL unless
 `estimator` is `BM_ESTIMATOR_BLIND_DNCNN`.

 # Safety
 `sim` must be a live handle, `denoiser` NULL or live, `out` writable.
 */
enum BmStatus bm_simulation_run_point(const struct BmSimulation *sim,
                                      uint32_t estimator,
                                      double snr_db,
                                      size_t n_antennas,
                                      const struct BmDenoiser *denoiser,
                                      struct BmMetricRecord *out);

/*
 # Safety
 `sim` must be NULL or a live handle, freed at most once.
 */
void bm_simulation_free(struct BmSimulation *sim);

/*
 Blind virtual pilots of one user from its sounding slot.

 `observations` holds the `n_antennas x n` frequency-domain samples
 (antenna-major, interleaved), `rho` the `n_taps` tap powers of the
 channel. `raw_out` receives the row averages and `detected_out` the
 hard decisions with the reference at subcarrier 0, `2 n` doubles each.

 # Safety
 Pointers must be valid for the stated lengths; `denoiser` may be NULL.
 */
enum BmStatus bm_estimate_virtual_pilots(const double *observations,
                                         size_t n_antennas,
                                         size_t n,
                                         const double *rho,
                                         size_t n_taps,
                                         double noise_variance,
                                         size_t constellation_order,
                                         double reference_re,
                                         double reference_im,
                                         const struct BmDenoiser *denoiser,
                                         double *raw_out,
                                         double *detected_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLINDMIMO_H */
