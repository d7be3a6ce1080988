//! C ABI for the checkpoint-editing core.
//!
//! Everything crosses the boundary through opaque handles
//! ([`CeCheckpoint`], [`CeMaskSet`]) and a [`CeStatus`] code that mirrors
//! the CLI's exit-code convention: usage errors, data errors, internal
//! errors. The message behind the most recent failure is kept per thread
//! and read back with [`ce_last_error`].
//!
//! Ownership rules are the usual ones: every `*_load`, `ce_localize_*` and
//! `ce_edit_*` call hands the caller a new handle that must go back through
//! the matching `*_free`; plain out-parameters (`size_t`, `double`,
//! `uint64_t`) are written only when the call returns `CE_STATUS_OK`.
//!
//! The generated header lands in `include/contrastive_edit.h` at build
//! time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use contrastive_edit::biaseval::{weat, EmbeddingTable, PMethod, StdDevMode, WeatSpec};
use contrastive_edit::edit::{interpolate_extrapolate, mask_switch, prune_edit};
use contrastive_edit::localize::{localize, KAmount, LocalizationSpec, MaskRule};
use contrastive_edit::store::{Checkpoint, MaskSet};
use contrastive_edit::subnetwork::{mask_difference_fraction, mask_ones};
use contrastive_edit::{Error, ErrorClass};

// ---------------------------------------------------------------------------
// Status codes and error reporting
// ---------------------------------------------------------------------------

/// Outcome of a fallible call. The numbering matches the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeStatus {
    /// The call succeeded; out-parameters are valid.
    Ok = 0,
    /// The caller broke the contract: null pointer, bad UTF-8, invalid
    /// parameter value.
    Usage = 1,
    /// An input file or checkpoint was missing or malformed.
    Data = 2,
    /// An unexpected failure inside the library.
    Internal = 3,
}

struct Failure {
    status: CeStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let status = match e.class() {
            ErrorClass::Usage => CeStatus::Usage,
            ErrorClass::Data => CeStatus::Data,
            ErrorClass::Internal => CeStatus::Internal,
        };
        Failure { status, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { status: CeStatus::Usage, message: message.into() }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember_error(message: &str) {
    let owned = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

/// Message describing this thread's most recent failure. Only meaningful
/// straight after a call returned something other than `CE_STATUS_OK`; the
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ce_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Run a body behind the boundary: translate errors to statuses and keep
/// panics from unwinding into C.
fn boundary(body: impl FnOnce() -> Result<(), Failure>) -> CeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CeStatus::Ok,
        Ok(Err(failure)) => {
            remember_error(&failure.message);
            failure.status
        }
        Err(_) => {
            remember_error("unexpected panic behind the C boundary");
            CeStatus::Internal
        }
    }
}

// ---------------------------------------------------------------------------
// Handles and pointer plumbing
// ---------------------------------------------------------------------------

/// Opaque handle to a tensor checkpoint.
pub struct CeCheckpoint {
    inner: Checkpoint,
}

/// Opaque handle to a set of binary masks.
pub struct CeMaskSet {
    inner: MaskSet,
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| usage(format!("{what} must not be null")))
}

unsafe fn path_from(ptr: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(usage(format!("{what} must not be null")));
    }
    let text = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| usage(format!("{what} must be valid UTF-8")))?;
    Ok(PathBuf::from(text))
}

/// Move `value` onto the heap and hand ownership to the caller.
unsafe fn give<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(usage(format!("{what} must not be null")));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn store<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(usage(format!("{what} must not be null")));
    }
    *out = value;
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Load a checkpoint container from `path` into a new handle.
#[no_mangle]
pub unsafe extern "C" fn ce_checkpoint_load(
    path: *const c_char,
    out: *mut *mut CeCheckpoint,
) -> CeStatus {
    boundary(|| {
        let path = path_from(path, "path")?;
        let inner = Checkpoint::load(&path)?;
        give(out, CeCheckpoint { inner }, "out")
    })
}

/// Write the checkpoint to `path` in the canonical container format.
#[no_mangle]
pub unsafe extern "C" fn ce_checkpoint_save(
    ckpt: *const CeCheckpoint,
    path: *const c_char,
) -> CeStatus {
    boundary(|| {
        let ckpt = deref(ckpt, "ckpt")?;
        Ok(ckpt.inner.save(path_from(path, "path")?)?)
    })
}

/// Release a checkpoint handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ce_checkpoint_free(ckpt: *mut CeCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Number of tensors in the checkpoint.
#[no_mangle]
pub unsafe extern "C" fn ce_checkpoint_tensor_count(
    ckpt: *const CeCheckpoint,
    out: *mut usize,
) -> CeStatus {
    boundary(|| {
        let count = deref(ckpt, "ckpt")?.inner.tensors.len();
        store(out, count, "out")
    })
}

/// Layout fingerprint (names and shapes only, not values).
#[no_mangle]
pub unsafe extern "C" fn ce_checkpoint_fingerprint(
    ckpt: *const CeCheckpoint,
    out: *mut u64,
) -> CeStatus {
    boundary(|| {
        let fingerprint = deref(ckpt, "ckpt")?.inner.fingerprint();
        store(out, fingerprint, "out")
    })
}

// ---------------------------------------------------------------------------
// Mask sets
// ---------------------------------------------------------------------------

/// Load a mask set from `path` into a new handle.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_load(path: *const c_char, out: *mut *mut CeMaskSet) -> CeStatus {
    boundary(|| {
        let inner = MaskSet::load(path_from(path, "path")?)?;
        give(out, CeMaskSet { inner }, "out")
    })
}

/// Write the mask set to `path`.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_save(mask: *const CeMaskSet, path: *const c_char) -> CeStatus {
    boundary(|| {
        let mask = deref(mask, "mask")?;
        Ok(mask.inner.save(path_from(path, "path")?)?)
    })
}

/// Release a mask handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_free(mask: *mut CeMaskSet) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Number of selected (value-1) coordinates across all tensors.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_ones(mask: *const CeMaskSet, out: *mut usize) -> CeStatus {
    boundary(|| {
        let ones = mask_ones(&deref(mask, "mask")?.inner);
        store(out, ones, "out")
    })
}

/// Fraction of coordinates on which two equal-layout masks disagree.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_difference_fraction(
    a: *const CeMaskSet,
    b: *const CeMaskSet,
    out: *mut f64,
) -> CeStatus {
    boundary(|| {
        let fraction = mask_difference_fraction(&deref(a, "a")?.inner, &deref(b, "b")?.inner)?;
        store(out, fraction, "out")
    })
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

/// Mask-based localization: select coordinates retained by exactly one of
/// the two pruning masks.
#[no_mangle]
pub unsafe extern "C" fn ce_localize_mask_based(
    target: *const CeCheckpoint,
    m_t: *const CeMaskSet,
    reference: *const CeCheckpoint,
    m_r: *const CeMaskSet,
    out: *mut *mut CeMaskSet,
) -> CeStatus {
    localize_with(LocalizationSpec::MaskBased { rule: MaskRule::SymmetricDifference },
        target, m_t, reference, m_r, out)
}

/// Value-based localization: keep the `k_fraction` share of the
/// intersection support with the largest |reference − target| difference.
#[no_mangle]
pub unsafe extern "C" fn ce_localize_value_based(
    target: *const CeCheckpoint,
    m_t: *const CeMaskSet,
    reference: *const CeCheckpoint,
    m_r: *const CeMaskSet,
    k_fraction: f64,
    out: *mut *mut CeMaskSet,
) -> CeStatus {
    localize_with(LocalizationSpec::ValueBased { k: KAmount::Fraction(k_fraction) },
        target, m_t, reference, m_r, out)
}

/// Uninformed control: sample `budget` coordinates uniformly from the union
/// of the two supports, deterministically in `seed`.
#[no_mangle]
pub unsafe extern "C" fn ce_localize_uninformed(
    target: *const CeCheckpoint,
    m_t: *const CeMaskSet,
    reference: *const CeCheckpoint,
    m_r: *const CeMaskSet,
    budget: usize,
    seed: u64,
    out: *mut *mut CeMaskSet,
) -> CeStatus {
    localize_with(LocalizationSpec::UninformedIpEp { budget, seed },
        target, m_t, reference, m_r, out)
}

unsafe fn localize_with(
    spec: LocalizationSpec,
    target: *const CeCheckpoint,
    m_t: *const CeMaskSet,
    reference: *const CeCheckpoint,
    m_r: *const CeMaskSet,
    out: *mut *mut CeMaskSet,
) -> CeStatus {
    boundary(|| {
        let b = localize(
            &spec,
            &deref(target, "target")?.inner,
            &deref(m_t, "m_t")?.inner,
            &deref(reference, "reference")?.inner,
            &deref(m_r, "m_r")?.inner,
        )?;
        give(out, CeMaskSet { inner: b }, "out")
    })
}

// ---------------------------------------------------------------------------
// Editing
// ---------------------------------------------------------------------------

/// θ_t′ = θ_t + α((θ_r − θ_t) ⊙ b). α in [0, 1] interpolates, outside
/// extrapolates; α must be finite.
#[no_mangle]
pub unsafe extern "C" fn ce_edit_interpolate(
    target: *const CeCheckpoint,
    reference: *const CeCheckpoint,
    b: *const CeMaskSet,
    alpha: f64,
    out: *mut *mut CeCheckpoint,
) -> CeStatus {
    boundary(|| {
        let edited = interpolate_extrapolate(
            &deref(target, "target")?.inner,
            &deref(reference, "reference")?.inner,
            &deref(b, "b")?.inner,
            alpha,
        )?;
        give(out, CeCheckpoint { inner: edited }, "out")
    })
}

/// Zero out exactly the selected coordinates.
#[no_mangle]
pub unsafe extern "C" fn ce_edit_prune(
    target: *const CeCheckpoint,
    b: *const CeMaskSet,
    out: *mut *mut CeCheckpoint,
) -> CeStatus {
    boundary(|| {
        let edited = prune_edit(&deref(target, "target")?.inner, &deref(b, "b")?.inner)?;
        give(out, CeCheckpoint { inner: edited }, "out")
    })
}

/// Impose the reference subnetwork's support on a dense target checkpoint.
#[no_mangle]
pub unsafe extern "C" fn ce_edit_mask_switch(
    target_dense: *const CeCheckpoint,
    m_r: *const CeMaskSet,
    out: *mut *mut CeCheckpoint,
) -> CeStatus {
    boundary(|| {
        let edited =
            mask_switch(&deref(target_dense, "target_dense")?.inner, &deref(m_r, "m_r")?.inner)?;
        give(out, CeCheckpoint { inner: edited }, "out")
    })
}

// ---------------------------------------------------------------------------
// Bias measurement
// ---------------------------------------------------------------------------

/// Run the association test over an embedding-table checkpoint (one tensor
/// per word, layers × dim) against word sets from a JSON spec file, and
/// write the layer-averaged effect size. `mc_samples == 0` enumerates the
/// permutation test exhaustively; any other value draws that many Monte
/// Carlo partitions from `seed`.
#[no_mangle]
pub unsafe extern "C" fn ce_weat_avg_effect(
    embeddings: *const CeCheckpoint,
    spec_path: *const c_char,
    mc_samples: u64,
    seed: u64,
    out_avg_effect: *mut f64,
) -> CeStatus {
    boundary(|| {
        let table = EmbeddingTable::from_checkpoint(&deref(embeddings, "embeddings")?.inner)?;
        let spec = WeatSpec::load(path_from(spec_path, "spec_path")?)?;
        let method = if mc_samples == 0 {
            PMethod::Exhaustive
        } else {
            PMethod::MonteCarlo { n: mc_samples as usize, seed }
        };
        let result = weat(&table, &spec, method, StdDevMode::default())?;
        store(out_avg_effect, result.avg_effect, "out_avg_effect")
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use contrastive_edit::store::{MaskKind, Tensor};
    use std::ffi::CString;
    use std::fs;
    use std::ptr;

    fn cpath(path: &std::path::Path) -> CString {
        CString::new(path.to_str().unwrap()).unwrap()
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(ce_last_error()).to_string_lossy().into_owned() }
    }

    /// A small target/reference pair with pruning masks, saved to disk.
    fn fixture(dir: &std::path::Path) -> (Checkpoint, Checkpoint, MaskSet, MaskSet) {
        let mut target = Checkpoint::new();
        target.insert("w", Tensor::f32(vec![6], vec![1.0, -2.0, 3.0, -4.0, 5.0, -6.0]));
        let mut reference = Checkpoint::new();
        reference.insert("w", Tensor::f32(vec![6], vec![-1.5, 2.5, -3.5, 4.5, -5.5, 6.5]));
        let mut m_t = MaskSet::new();
        m_t.insert("w", Tensor::u8(vec![6], vec![1, 1, 0, 0, 1, 1])).unwrap();
        m_t.stamp(MaskKind::Pruning, &target);
        let mut m_r = MaskSet::new();
        m_r.insert("w", Tensor::u8(vec![6], vec![1, 0, 1, 0, 1, 1])).unwrap();
        m_r.stamp(MaskKind::Pruning, &reference);
        target.save(dir.join("target.ckpt")).unwrap();
        reference.save(dir.join("reference.ckpt")).unwrap();
        m_t.save(dir.join("m_t.mask")).unwrap();
        m_r.save(dir.join("m_r.mask")).unwrap();
        (target, reference, m_t, m_r)
    }

    #[test]
    fn localize_and_edit_match_the_core_library() {
        let dir = tempfile::tempdir().unwrap();
        let (target, reference, m_t, m_r) = fixture(dir.path());

        unsafe {
            let mut t = ptr::null_mut();
            let mut r = ptr::null_mut();
            let mut mt = ptr::null_mut();
            let mut mr = ptr::null_mut();
            assert_eq!(ce_checkpoint_load(cpath(&dir.path().join("target.ckpt")).as_ptr(), &mut t), CeStatus::Ok);
            assert_eq!(ce_checkpoint_load(cpath(&dir.path().join("reference.ckpt")).as_ptr(), &mut r), CeStatus::Ok);
            assert_eq!(ce_mask_load(cpath(&dir.path().join("m_t.mask")).as_ptr(), &mut mt), CeStatus::Ok);
            assert_eq!(ce_mask_load(cpath(&dir.path().join("m_r.mask")).as_ptr(), &mut mr), CeStatus::Ok);

            let mut count = 0usize;
            assert_eq!(ce_checkpoint_tensor_count(t, &mut count), CeStatus::Ok);
            assert_eq!(count, 1);
            let mut fp = 0u64;
            assert_eq!(ce_checkpoint_fingerprint(t, &mut fp), CeStatus::Ok);
            assert_eq!(fp, target.fingerprint());

            let mut b = ptr::null_mut();
            assert_eq!(ce_localize_mask_based(t, mt, r, mr, &mut b), CeStatus::Ok);
            let mut ones = 0usize;
            assert_eq!(ce_mask_ones(b, &mut ones), CeStatus::Ok);

            let spec = LocalizationSpec::MaskBased { rule: MaskRule::SymmetricDifference };
            let expected_b = localize(&spec, &target, &m_t, &reference, &m_r).unwrap();
            assert_eq!(ones, mask_ones(&expected_b));

            let mut edited = ptr::null_mut();
            assert_eq!(ce_edit_interpolate(t, r, b, 0.5, &mut edited), CeStatus::Ok);
            let edited_path = dir.path().join("edited.ckpt");
            assert_eq!(ce_checkpoint_save(edited, cpath(&edited_path).as_ptr()), CeStatus::Ok);
            let expected = interpolate_extrapolate(&target, &reference, &expected_b, 0.5).unwrap();
            let expected_path = dir.path().join("expected.ckpt");
            expected.save(&expected_path).unwrap();
            assert_eq!(fs::read(&edited_path).unwrap(), fs::read(&expected_path).unwrap());

            ce_checkpoint_free(edited);
            ce_mask_free(b);
            ce_mask_free(mr);
            ce_mask_free(mt);
            ce_checkpoint_free(r);
            ce_checkpoint_free(t);
        }
    }

    #[test]
    fn null_arguments_are_usage_errors_with_messages() {
        unsafe {
            let mut out = ptr::null_mut();
            assert_eq!(ce_checkpoint_load(ptr::null(), &mut out), CeStatus::Usage);
            assert!(last_error().contains("must not be null"), "{}", last_error());
            assert!(out.is_null());

            let path = CString::new("/nonexistent.ckpt").unwrap();
            assert_eq!(ce_checkpoint_save(ptr::null(), path.as_ptr()), CeStatus::Usage);

            let mut ones = 0usize;
            assert_eq!(ce_mask_ones(ptr::null(), &mut ones), CeStatus::Usage);
        }
    }

    #[test]
    fn missing_files_are_data_errors() {
        unsafe {
            let path = CString::new("/no/such/file.ckpt").unwrap();
            let mut out = ptr::null_mut();
            assert_eq!(ce_checkpoint_load(path.as_ptr(), &mut out), CeStatus::Data);
            assert!(last_error().contains("file.ckpt"), "{}", last_error());
            assert!(out.is_null());
        }
    }

    #[test]
    fn invalid_alpha_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let (target, reference, m_t, m_r) = fixture(dir.path());
        let spec = LocalizationSpec::MaskBased { rule: MaskRule::SymmetricDifference };
        let b = localize(&spec, &target, &m_t, &reference, &m_r).unwrap();
        b.save(dir.path().join("b.mask")).unwrap();
        unsafe {
            let mut t = ptr::null_mut();
            let mut r = ptr::null_mut();
            let mut bh = ptr::null_mut();
            ce_checkpoint_load(cpath(&dir.path().join("target.ckpt")).as_ptr(), &mut t);
            ce_checkpoint_load(cpath(&dir.path().join("reference.ckpt")).as_ptr(), &mut r);
            ce_mask_load(cpath(&dir.path().join("b.mask")).as_ptr(), &mut bh);
            let mut out = ptr::null_mut();
            assert_eq!(ce_edit_interpolate(t, r, bh, f64::NAN, &mut out), CeStatus::Usage);
            assert!(out.is_null());
            ce_mask_free(bh);
            ce_checkpoint_free(r);
            ce_checkpoint_free(t);
        }
    }

    #[test]
    fn weat_effect_matches_the_core_evaluator() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = EmbeddingTable::new(2, 3);
        for (word, v) in [
            ("x0", vec![0.9, 0.1, 0.0]),
            ("y0", vec![0.1, 0.9, 0.0]),
            ("a0", vec![1.0, 0.0, 0.0]),
            ("b0", vec![0.0, 1.0, 0.0]),
        ] {
            table.insert(word, vec![v.clone(), v]).unwrap();
        }
        let ckpt_path = dir.path().join("table.ckpt");
        table.to_checkpoint().save(&ckpt_path).unwrap();
        let spec_json = r#"{"name":"tiny","X":["x0"],"Y":["y0"],"A":["a0"],"B":["b0"]}"#;
        let spec_path = dir.path().join("spec.json");
        fs::write(&spec_path, spec_json).unwrap();

        let spec = WeatSpec::load(&spec_path).unwrap();
        let expected = weat(&table, &spec, PMethod::Exhaustive, StdDevMode::default()).unwrap();

        unsafe {
            let mut handle = ptr::null_mut();
            assert_eq!(ce_checkpoint_load(cpath(&ckpt_path).as_ptr(), &mut handle), CeStatus::Ok);
            let mut effect = f64::NAN;
            assert_eq!(
                ce_weat_avg_effect(handle, cpath(&spec_path).as_ptr(), 0, 0, &mut effect),
                CeStatus::Ok
            );
            assert_eq!(effect.to_bits(), expected.avg_effect.to_bits());
            ce_checkpoint_free(handle);
        }
    }

    #[test]
    fn version_is_a_static_string() {
        let version = unsafe { CStr::from_ptr(ce_version()) }.to_str().unwrap();
        assert_eq!(version, env!("CARGO_PKG_VERSION"));
    }
}
