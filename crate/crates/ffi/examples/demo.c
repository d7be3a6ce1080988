/* Smallest useful consumer of the C ABI: load a target/reference pair plus
 * their pruning masks, localize, interpolate halfway, and save the edit.
 *
 * Build (from the workspace root):
 *   cargo build -p contrastive-edit-ffi
 *   cc crates/ffi/examples/demo.c -Icrates/ffi/include \
 *      target/debug/libcontrastive_edit_ffi.a -lpthread -ldl -lm -o demo
 *
 * Usage: demo TARGET.ckpt M_T.mask REFERENCE.ckpt M_R.mask OUT.ckpt
 */
#include <stdio.h>

#include "contrastive_edit.h"

static int fail(const char *where) {
  fprintf(stderr, "%s: %s\n", where, ce_last_error());
  return 1;
}

int main(int argc, char **argv) {
  if (argc != 6) {
    fprintf(stderr, "usage: %s TARGET M_T REFERENCE M_R OUT\n", argv[0]);
    return 1;
  }

  CeCheckpoint *target = NULL, *reference = NULL, *edited = NULL;
  CeMaskSet *m_t = NULL, *m_r = NULL, *b = NULL;
  int rc = 1;

  if (ce_checkpoint_load(argv[1], &target) != CE_STATUS_OK) return fail("target");
  if (ce_mask_load(argv[2], &m_t) != CE_STATUS_OK) { fail("m_t"); goto out; }
  if (ce_checkpoint_load(argv[3], &reference) != CE_STATUS_OK) { fail("reference"); goto out; }
  if (ce_mask_load(argv[4], &m_r) != CE_STATUS_OK) { fail("m_r"); goto out; }

  if (ce_localize_mask_based(target, m_t, reference, m_r, &b) != CE_STATUS_OK) {
    fail("localize");
    goto out;
  }
  size_t ones = 0;
  ce_mask_ones(b, &ones);
  printf("localized %zu coordinates\n", ones);

  if (ce_edit_interpolate(target, reference, b, 0.5, &edited) != CE_STATUS_OK) {
    fail("edit");
    goto out;
  }
  if (ce_checkpoint_save(edited, argv[5]) != CE_STATUS_OK) {
    fail("save");
    goto out;
  }
  printf("wrote %s\n", argv[5]);
  rc = 0;

out:
  ce_checkpoint_free(edited);
  ce_mask_free(b);
  ce_mask_free(m_r);
  ce_checkpoint_free(reference);
  ce_mask_free(m_t);
  ce_checkpoint_free(target);
  return rc;
}
