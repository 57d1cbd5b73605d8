#ifndef SCRATCHPAD_H
#define SCRATCHPAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every fallible function.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_UTF8 = 2,
  SP_STATUS_INVALID_ARGUMENT = 3,
  SP_STATUS_IO = 4,
  SP_STATUS_CONFIG = 5,
  SP_STATUS_CHECKPOINT = 6,
  SP_STATUS_RUNTIME = 7,
  SP_STATUS_PANIC = 8,
} SpStatus;

/*
 Opaque handle to a loaded run.
 */
typedef struct SpModel SpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or "" after a success.
 The pointer stays valid until the next call into this library.
 */
const char *sp_last_error(void);

/*
 Load the run directory `run_dir` (its final averaged checkpoint).

 # Safety
 `run_dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_model_open(const char *run_dir, struct SpModel **out);

/*
 Release a model. Null is ignored.

 # Safety
 `model` must come from `sp_model_open` and not be used afterwards.
 */
void sp_model_free(struct SpModel *model);

/*
 Number of target-side vocabulary entries, reserved ids included; 0 for null.

 # Safety
 `model` must be null or come from `sp_model_open`.
 */
size_t sp_model_target_vocab(const struct SpModel *model);

/*
 Decode a whitespace-tokenised `source`. `beam == 1` is greedy; a
 `max_len` of 0 uses the run's configured limit. The output tokens are
 written to `*out_text` as one space-separated string; when
 `out_mean_entropy` is non-null it receives the mean attention entropy
 (natural log) over the decoder steps.

 # Safety
 Pointers must be valid; `source` NUL-terminated.
 */
enum SpStatus sp_decode(const struct SpModel *model,
                        const char *source,
                        size_t beam,
                        size_t max_len,
                        char **out_text,
                        double *out_mean_entropy);

/*
 Release a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void sp_string_free(char *s);

/*
 Shannon entropy (natural log) of a probability vector of length `n`.

 # Safety
 `p` must point to `n` readable doubles.
 */
enum SpStatus sp_attention_entropy(const double *p, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCRATCHPAD_H */
