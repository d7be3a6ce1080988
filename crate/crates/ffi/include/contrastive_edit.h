#ifndef CONTRASTIVE_EDIT_H
#define CONTRASTIVE_EDIT_H

/* Generated by cbindgen from contrastive-edit-ffi; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a fallible call. The numbering matches the CLI exit codes.
 */
typedef enum CeStatus {
  /**
   * The call succeeded; out-parameters are valid.
   */
  CE_STATUS_OK = 0,
  /**
   * The caller broke the contract: null pointer, bad UTF-8, invalid
   * parameter value.
   */
  CE_STATUS_USAGE = 1,
  /**
   * An input file or checkpoint was missing or malformed.
   */
  CE_STATUS_DATA = 2,
  /**
   * An unexpected failure inside the library.
   */
  CE_STATUS_INTERNAL = 3,
} CeStatus;

/**
 * Opaque handle to a tensor checkpoint.
 */
typedef struct CeCheckpoint CeCheckpoint;

/**
 * Opaque handle to a set of binary masks.
 */
typedef struct CeMaskSet CeMaskSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing this thread's most recent failure. Only meaningful
 * straight after a call returned something other than `CE_STATUS_OK`; the
 * pointer stays valid until the next failing call on the same thread.
 */
const char *ce_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ce_version(void);

/**
 * Load a checkpoint container from `path` into a new handle.
 */
enum CeStatus ce_checkpoint_load(const char *path, struct CeCheckpoint **out);

/**
 * Write the checkpoint to `path` in the canonical container format.
 */
enum CeStatus ce_checkpoint_save(const struct CeCheckpoint *ckpt, const char *path);

/**
 * Release a checkpoint handle. Null is a no-op.
 */
void ce_checkpoint_free(struct CeCheckpoint *ckpt);

/**
 * Number of tensors in the checkpoint.
 */
enum CeStatus ce_checkpoint_tensor_count(const struct CeCheckpoint *ckpt, size_t *out);

/**
 * Layout fingerprint (names and shapes only, not values).
 */
enum CeStatus ce_checkpoint_fingerprint(const struct CeCheckpoint *ckpt, uint64_t *out);

/**
 * Load a mask set from `path` into a new handle.
 */
enum CeStatus ce_mask_load(const char *path, struct CeMaskSet **out);

/**
 * Write the mask set to `path`.
 */
enum CeStatus ce_mask_save(const struct CeMaskSet *mask, const char *path);

/**
 * Release a mask handle. Null is a no-op.
 */
void ce_mask_free(struct CeMaskSet *mask);

/**
 * Number of selected (value-1) coordinates across all tensors.
 */
enum CeStatus ce_mask_ones(const struct CeMaskSet *mask, size_t *out);

/**
 * Fraction of coordinates on which two equal-layout masks disagree.
 */
enum CeStatus ce_mask_difference_fraction(const struct CeMaskSet *a,
                                          const struct CeMaskSet *b,
                                          double *out);

/**
 * Mask-based localization: select coordinates retained by exactly one of
 * the two pruning masks.
 */
enum CeStatus ce_localize_mask_based(const struct CeCheckpoint *target,
                                     const struct CeMaskSet *m_t,
                                     const struct CeCheckpoint *reference,
                                     const struct CeMaskSet *m_r,
                                     struct CeMaskSet **out);

/**
 * Value-based localization: keep the `k_fraction` share of the
 * intersection support with the largest |reference − target| difference.
 */
enum CeStatus ce_localize_value_based(const struct CeCheckpoint *target,
                                      const struct CeMaskSet *m_t,
                                      const struct CeCheckpoint *reference,
                                      const struct CeMaskSet *m_r,
                                      double k_fraction,
                                      struct CeMaskSet **out);

/**
 * Uninformed control: sample `budget` coordinates uniformly from the union
 * of the two supports, deterministically in `seed`.
 */
enum CeStatus ce_localize_uninformed(const struct CeCheckpoint *target,
                                     const struct CeMaskSet *m_t,
                                     const struct CeCheckpoint *reference,
                                     const struct CeMaskSet *m_r,
                                     size_t budget,
                                     uint64_t seed,
                                     struct CeMaskSet **out);

/**
 * θ_t′ = θ_t + α((θ_r − θ_t) ⊙ b). α in [0, 1] interpolates, outside
 * extrapolates; α must be finite.
 */
enum CeStatus ce_edit_interpolate(const struct CeCheckpoint *target,
                                  const struct CeCheckpoint *reference,
                                  const struct CeMaskSet *b,
                                  double alpha,
                                  struct CeCheckpoint **out);

/**
 * Zero out exactly the selected coordinates.
 */
enum CeStatus ce_edit_prune(const struct CeCheckpoint *target,
                            const struct CeMaskSet *b,
                            struct CeCheckpoint **out);

/**
 * Impose the reference subnetwork's support on a dense target checkpoint.
 */
enum CeStatus ce_edit_mask_switch(const struct CeCheckpoint *target_dense,
                                  const struct CeMaskSet *m_r,
                                  struct CeCheckpoint **out);

/**
 * Run the association test over an embedding-table checkpoint (one tensor
 * per word, layers × dim) against word sets from a JSON spec file, and
 * write the layer-averaged effect size. `mc_samples == 0` enumerates the
 * permutation test exhaustively; any other value draws that many Monte
 * Carlo partitions from `seed`.
 */
enum CeStatus ce_weat_avg_effect(const struct CeCheckpoint *embeddings,
                                 const char *spec_path,
                                 uint64_t mc_samples,
                                 uint64_t seed,
                                 double *out_avg_effect);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTRASTIVE_EDIT_H */
