#ifndef QREPEATER_H
#define QREPEATER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Outcome of a call.
 */
typedef enum QrStatus {
  QR_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  QR_STATUS_NULL_POINTER = 1,
  /*
   A string argument was not valid UTF-8.
   */
  QR_STATUS_INVALID_UTF8 = 2,
  /*
   The configuration was rejected; the message names the key.
   */
  QR_STATUS_CONFIG_ERROR = 3,
  /*
   The simulation itself failed.
   */
  QR_STATUS_SIMULATION_ERROR = 4,
  /*
   The verification suite ran and at least one check failed.
   */
  QR_STATUS_VERIFICATION_FAILED = 5,
  /*
   An internal panic was caught.
   */
  QR_STATUS_PANIC = 6,
} QrStatus;

/*
 Opaque result of an exhaustive link run.
 */
typedef struct QrLinkResult QrLinkResult;

/*
 Scalar summary of a chain simulation.
 */
typedef struct QrChainStats {
  uint64_t trials;
  uint64_t completed;
  uint64_t timed_out;
  double link_acceptance;
  double mean_attempts;
  double attempts_std_error;
  double median_attempts;
  double rate;
  double fidelity_mean;
  double fidelity_min;
} QrChainStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if the last
 call succeeded. The pointer stays valid until the next call into this
 library from the same thread.
 */
const char *qr_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qr_version(void);

/*
 Exhaustive link run. `config_json` is a run configuration (null for
 defaults); its `link` section is used.

 # Safety
 `config_json` is null or NUL-terminated; `out` is a valid pointer.
 */
enum QrStatus qr_link_run(const char *config_json, struct QrLinkResult **out);

/*
 Probability that an attempt is heralded as a success.

 # Safety
 `result` comes from [`qr_link_run`] and is not yet freed; `out` is valid.
 */
enum QrStatus qr_link_result_acceptance(const struct QrLinkResult *result, double *out);

/*
 Full link record as JSON. Release the string with [`qr_string_free`].

 # Safety
 `result` comes from [`qr_link_run`] and is not yet freed; `out` is valid.
 */
enum QrStatus qr_link_result_to_json(const struct QrLinkResult *result, char **out);

/*
 Release a link result. Null is ignored.

 # Safety
 `result` is null or comes from [`qr_link_run`] and was not freed before.
 */
void qr_link_result_free(struct QrLinkResult *result);

/*
 Release a string returned by this library. Null is ignored.

 # Safety
 `s` is null or was returned by this library and not freed before.
 */
void qr_string_free(char *s);

/*
 Monte Carlo chain simulation driven by the configuration's `link` and
 `chain` sections.

 # Safety
 `config_json` is null or NUL-terminated; `out` is valid.
 */
enum QrStatus qr_chain_simulate(const char *config_json,
                                uint64_t seed,
                                uint64_t trials,
                                struct QrChainStats *out);

/*
 Run the verification suite. Writes the text report to `report_out`
 when it is non-null (release with [`qr_string_free`]). Returns
 [`QrStatus::VerificationFailed`] if any check fails.

 # Safety
 `report_out` is null or a valid pointer.
 */
enum QrStatus qr_verify(uint64_t seed, char **report_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QREPEATER_H */
