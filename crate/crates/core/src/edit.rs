//! Contrastive editing operators: move a target checkpoint's localized
//! coordinates toward (or past) a reference.
//!
//! All operators are pure — inputs are never mutated — and local: any
//! coordinate the localization mask does not select is bitwise unchanged.
//! Selected coordinates are recomputed in f64 and rounded to f32 once, with
//! the endpoints special-cased so α=0 is a bitwise identity and α=1 adopts
//! the reference's bits exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::LocalizationSpec;
use crate::store::{Checkpoint, MaskSet, META_MASKED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditStrategy {
    Interpolate,
    Extrapolate,
    Prune,
    MaskSwitch,
}

impl EditStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            EditStrategy::Interpolate => "interpolate",
            EditStrategy::Extrapolate => "extrapolate",
            EditStrategy::Prune => "prune",
            EditStrategy::MaskSwitch => "mask_switch",
        }
    }
}

/// A validated editing request. Interpolation and extrapolation share one
/// formula and differ only in the admissible α range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub strategy: EditStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub localization: LocalizationSpec,
    #[serde(default)]
    pub notes: String,
}

impl EditPlan {
    pub fn validate(&self) -> Result<()> {
        match (self.strategy, self.alpha) {
            (EditStrategy::Interpolate | EditStrategy::Extrapolate, None) => {
                Err(Error::InvalidConfig {
                    reason: format!("strategy {} requires alpha", self.strategy.as_str()),
                })
            }
            (EditStrategy::Interpolate | EditStrategy::Extrapolate, Some(alpha))
                if !alpha.is_finite() =>
            {
                Err(Error::NonFiniteAlpha { alpha })
            }
            (EditStrategy::Interpolate, Some(alpha)) if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::AlphaOutOfRange {
                    alpha,
                    strategy: "interpolate".into(),
                    expected: "[0, 1]".into(),
                })
            }
            (EditStrategy::Extrapolate, Some(alpha)) if (0.0..=1.0).contains(&alpha) => {
                Err(Error::AlphaOutOfRange {
                    alpha,
                    strategy: "extrapolate".into(),
                    expected: "outside [0, 1]".into(),
                })
            }
            (EditStrategy::Prune | EditStrategy::MaskSwitch, Some(_)) => {
                Err(Error::InvalidConfig {
                    reason: format!("strategy {} takes no alpha", self.strategy.as_str()),
                })
            }
            _ => Ok(()),
        }
    }
}

fn stamp_provenance(
    out: &mut Checkpoint,
    strategy: &str,
    alpha: Option<f64>,
    b: Option<&MaskSet>,
    target: &Checkpoint,
    reference: Option<&Checkpoint>,
) {
    out.metadata.insert("edit_strategy".into(), strategy.to_string());
    if let Some(alpha) = alpha {
        out.metadata.insert("edit_alpha".into(), alpha.to_string());
    }
    if let Some(spec) = b.and_then(|b| b.metadata.get("localization_spec")) {
        out.metadata.insert("localization_spec".into(), spec.clone());
    }
    out.metadata
        .insert("edit_target_fingerprint".into(), format!("{:016x}", target.fingerprint()));
    if let Some(reference) = reference {
        out.metadata.insert(
            "edit_reference_fingerprint".into(),
            format!("{:016x}", reference.fingerprint()),
        );
    }
}

/// θ_t′ = θ_t + α((θ_r − θ_t) ⊙ b): linear interpolation for α in [0, 1],
/// extrapolation outside. The α range is the caller's policy ([`EditPlan`]
/// enforces it); this operator accepts any finite α.
pub fn interpolate_extrapolate(
    target: &Checkpoint,
    reference: &Checkpoint,
    b: &MaskSet,
    alpha: f64,
) -> Result<Checkpoint> {
    if !alpha.is_finite() {
        return Err(Error::NonFiniteAlpha { alpha });
    }
    if !target.same_layout(reference) {
        return Err(Error::LayoutMismatch {
            reason: "target and reference checkpoints have different layouts".into(),
        });
    }
    b.check_layout(target)?;
    b.check_parent(target)?;

    let mut out = target.clone();
    if alpha != 0.0 {
        for (name, mask) in &b.masks {
            let bits = mask.as_u8().expect("masks are U8");
            let rv = reference.f32_values(name)?;
            let tv = out
                .tensors
                .get_mut(name)
                .expect("check_layout verified presence")
                .as_f32_mut()
                .ok_or_else(|| Error::NotF32 { name: name.clone() })?;
            for (i, v) in tv.iter_mut().enumerate() {
                if bits[i] == 1 {
                    *v = if alpha == 1.0 {
                        // Adopt the reference bit-for-bit.
                        rv[i]
                    } else {
                        (*v as f64 + alpha * (rv[i] as f64 - *v as f64)) as f32
                    };
                }
            }
        }
    }
    stamp_provenance(
        &mut out,
        if (0.0..=1.0).contains(&alpha) { "interpolate" } else { "extrapolate" },
        Some(alpha),
        Some(b),
        target,
        Some(reference),
    );
    Ok(out)
}

/// θ_t′ = θ_t − (θ_t ⊙ b): zero out exactly the selected coordinates.
pub fn prune_edit(target: &Checkpoint, b: &MaskSet) -> Result<Checkpoint> {
    b.check_layout(target)?;
    b.check_parent(target)?;
    let mut out = target.clone();
    for (name, mask) in &b.masks {
        let bits = mask.as_u8().expect("masks are U8");
        let tv = out
            .tensors
            .get_mut(name)
            .expect("check_layout verified presence")
            .as_f32_mut()
            .ok_or_else(|| Error::NotF32 { name: name.clone() })?;
        for (v, &bit) in tv.iter_mut().zip(bits) {
            if bit == 1 {
                *v = 0.0;
            }
        }
    }
    stamp_provenance(&mut out, "prune", None, Some(b), target, None);
    Ok(out)
}

/// θ_t′ = θ_t ⊙ m_r: impose the reference subnetwork's support on the
/// target's *dense* (pre-pruning) values, restoring coordinates the target
/// had pruned but the reference retains.
///
/// The input must be dense: checkpoints produced by masking carry a
/// `masked` metadata flag and are rejected, because their pruned values are
/// gone and cannot be restored.
pub fn mask_switch(target_dense: &Checkpoint, m_r: &MaskSet) -> Result<Checkpoint> {
    if target_dense.metadata.get(META_MASKED).map(String::as_str) == Some("true") {
        return Err(Error::NotDense {
            reason: "checkpoint metadata flags it as masked; mask_switch needs pre-pruning values"
                .into(),
        });
    }
    let mut out = crate::store::apply_mask(target_dense, m_r)?;
    stamp_provenance(&mut out, "mask_switch", None, None, target_dense, None);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Checkpoint, Checkpoint, MaskSet) {
        let mut t = Checkpoint::new();
        t.insert("w", Tensor::f32(vec![3], vec![1.0, 2.0, 3.0]));
        let mut r = Checkpoint::new();
        r.insert("w", Tensor::f32(vec![3], vec![5.0, 2.0, -1.0]));
        let mut b = MaskSet::new();
        b.insert("w", Tensor::u8(vec![3], vec![1, 0, 1])).unwrap();
        (t, r, b)
    }

    fn w(cp: &Checkpoint) -> Vec<f32> {
        cp.f32_values("w").unwrap().to_vec()
    }

    #[test]
    fn interpolation_arithmetic() {
        let (t, r, b) = fixture();
        assert_eq!(w(&interpolate_extrapolate(&t, &r, &b, 0.5).unwrap()), vec![3.0, 2.0, 1.0]);
        assert_eq!(w(&interpolate_extrapolate(&t, &r, &b, 2.0).unwrap()), vec![9.0, 2.0, -5.0]);
    }

    #[test]
    fn alpha_zero_is_bitwise_identity() {
        let (t, r, b) = fixture();
        let out = interpolate_extrapolate(&t, &r, &b, 0.0).unwrap();
        for (a, b) in w(&t).iter().zip(w(&out).iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // −0.0 too.
        let out = interpolate_extrapolate(&t, &r, &b, -0.0).unwrap();
        for (a, b) in w(&t).iter().zip(w(&out).iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn alpha_one_adopts_reference_bits() {
        let (t, r, b) = fixture();
        let out = interpolate_extrapolate(&t, &r, &b, 1.0).unwrap();
        let (tv, rv, ov) = (w(&t), w(&r), w(&out));
        assert_eq!(ov[0].to_bits(), rv[0].to_bits());
        assert_eq!(ov[1].to_bits(), tv[1].to_bits()); // unselected
        assert_eq!(ov[2].to_bits(), rv[2].to_bits());
    }

    #[test]
    fn unselected_coordinates_are_bitwise_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 64;
            let tv: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0f32..10.0)).collect();
            let rv: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0f32..10.0)).collect();
            let bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let mut t = Checkpoint::new();
            t.insert("w", Tensor::f32(vec![n], tv.clone()));
            let mut r = Checkpoint::new();
            r.insert("w", Tensor::f32(vec![n], rv));
            let mut b = MaskSet::new();
            b.insert("w", Tensor::u8(vec![n], bits.clone())).unwrap();
            let alpha = rng.gen_range(-5.0..5.0);
            let out = interpolate_extrapolate(&t, &r, &b, alpha).unwrap();
            for (i, (&orig, &edited)) in tv.iter().zip(w(&out).iter()).enumerate() {
                if bits[i] == 0 {
                    assert_eq!(orig.to_bits(), edited.to_bits(), "index {i}, alpha {alpha}");
                }
            }
        }
    }

    #[test]
    fn midpoint_affinity_within_one_ulp() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1000;
        let tv: Vec<f32> = (0..n).map(|_| rng.gen_range(-100.0f32..100.0)).collect();
        let rv: Vec<f32> = (0..n).map(|_| rng.gen_range(-100.0f32..100.0)).collect();
        let mut t = Checkpoint::new();
        t.insert("w", Tensor::f32(vec![n], tv));
        let mut r = Checkpoint::new();
        r.insert("w", Tensor::f32(vec![n], rv));
        let mut b = MaskSet::new();
        b.insert("w", Tensor::u8(vec![n], vec![1; n])).unwrap();

        let at0 = w(&interpolate_extrapolate(&t, &r, &b, 0.0).unwrap());
        let at1 = w(&interpolate_extrapolate(&t, &r, &b, 1.0).unwrap());
        let mid = w(&interpolate_extrapolate(&t, &r, &b, 0.5).unwrap());
        for i in 0..n {
            let expect = ((at0[i] as f64 + at1[i] as f64) / 2.0) as f32;
            let ulps = (mid[i].to_bits() as i64 - expect.to_bits() as i64).abs();
            assert!(ulps <= 1, "index {i}: {} vs {expect} ({ulps} ulps)", mid[i]);
        }
    }

    #[test]
    fn rejects_non_finite_alpha_and_layout_mismatch() {
        let (t, r, b) = fixture();
        for alpha in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let err = interpolate_extrapolate(&t, &r, &b, alpha).unwrap_err();
            assert!(matches!(err, Error::NonFiniteAlpha { .. }), "{err}");
        }
        let mut r2 = r.clone();
        r2.insert("extra", Tensor::f32(vec![1], vec![0.0]));
        let err = interpolate_extrapolate(&t, &r2, &b, 0.5).unwrap_err();
        assert!(matches!(err, Error::LayoutMismatch { .. }), "{err}");
    }

    #[test]
    fn edit_plan_alpha_ranges() {
        let loc = LocalizationSpec::MaskBased { rule: Default::default() };
        let plan = |strategy, alpha| EditPlan {
            strategy,
            alpha,
            localization: loc.clone(),
            notes: String::new(),
        };
        assert!(plan(EditStrategy::Interpolate, Some(0.5)).validate().is_ok());
        assert!(plan(EditStrategy::Interpolate, Some(0.0)).validate().is_ok());
        assert!(plan(EditStrategy::Interpolate, Some(1.0)).validate().is_ok());
        assert!(matches!(
            plan(EditStrategy::Interpolate, Some(2.0)).validate(),
            Err(Error::AlphaOutOfRange { .. })
        ));
        assert!(plan(EditStrategy::Extrapolate, Some(2.0)).validate().is_ok());
        assert!(plan(EditStrategy::Extrapolate, Some(-1.0)).validate().is_ok());
        assert!(matches!(
            plan(EditStrategy::Extrapolate, Some(0.5)).validate(),
            Err(Error::AlphaOutOfRange { .. })
        ));
        assert!(matches!(
            plan(EditStrategy::Interpolate, Some(f64::NAN)).validate(),
            Err(Error::NonFiniteAlpha { .. })
        ));
        assert!(matches!(
            plan(EditStrategy::Interpolate, None).validate(),
            Err(Error::InvalidConfig { .. })
        ));
        assert!(plan(EditStrategy::Prune, None).validate().is_ok());
        assert!(matches!(
            plan(EditStrategy::Prune, Some(0.5)).validate(),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn prune_edit_zeroes_selected_and_is_idempotent() {
        let (t, _, _) = fixture();
        let mut b = MaskSet::new();
        b.insert("w", Tensor::u8(vec![3], vec![0, 1, 0])).unwrap();
        let once = prune_edit(&t, &b).unwrap();
        assert_eq!(w(&once), vec![1.0, 0.0, 3.0]);
        assert_eq!(w(&once)[1].to_bits(), 0.0f32.to_bits());
        let twice = prune_edit(&once, &b).unwrap();
        assert_eq!(w(&once), w(&twice));

        let empty = MaskSet::new();
        let untouched = prune_edit(&t, &empty).unwrap();
        assert_eq!(w(&untouched), w(&t));
    }

    #[test]
    fn prune_edit_matches_complement_apply_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let n = 32;
            let tv: Vec<f32> = (0..n).map(|_| rng.gen_range(-5.0f32..5.0)).collect();
            let bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let mut t = Checkpoint::new();
            t.insert("w", Tensor::f32(vec![n], tv));
            let mut b = MaskSet::new();
            b.insert("w", Tensor::u8(vec![n], bits.clone())).unwrap();
            let mut complement = MaskSet::new();
            complement
                .insert("w", Tensor::u8(vec![n], bits.iter().map(|&v| 1 - v).collect()))
                .unwrap();
            let pruned = prune_edit(&t, &b).unwrap();
            let masked = crate::store::apply_mask(&t, &complement).unwrap();
            assert_eq!(pruned.f32_values("w").unwrap(), masked.f32_values("w").unwrap());
        }
    }

    #[test]
    fn mask_switch_restores_and_prunes() {
        let mut dense = Checkpoint::new();
        dense.insert("w", Tensor::f32(vec![4], vec![1.0, 2.0, 3.0, 4.0]));
        let mut m_r = MaskSet::new();
        m_r.insert("w", Tensor::u8(vec![4], vec![1, 1, 0, 0])).unwrap();
        // The target's own pruning (indices 1, 3) is irrelevant: index 1 is
        // restored to its dense value, index 2 newly pruned.
        let out = mask_switch(&dense, &m_r).unwrap();
        assert_eq!(w(&out), vec![1.0, 2.0, 0.0, 0.0]);

        let mut all_ones = MaskSet::new();
        all_ones.insert("w", Tensor::u8(vec![4], vec![1; 4])).unwrap();
        let out = mask_switch(&dense, &all_ones).unwrap();
        assert_eq!(w(&out), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn mask_switch_support_equals_reference_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let n = 48;
            // Nonzero dense values so support extraction is unambiguous.
            let tv: Vec<f32> =
                (0..n).map(|_| rng.gen_range(0.1f32..5.0) * if rng.gen() { 1.0 } else { -1.0 }).collect();
            let bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
            let mut dense = Checkpoint::new();
            dense.insert("w", Tensor::f32(vec![n], tv.clone()));
            let mut m_r = MaskSet::new();
            m_r.insert("w", Tensor::u8(vec![n], bits.clone())).unwrap();
            let out = mask_switch(&dense, &m_r).unwrap();
            let support: Vec<u8> =
                w(&out).iter().map(|&v| if v != 0.0 { 1 } else { 0 }).collect();
            assert_eq!(support, bits);
            for (i, &v) in w(&out).iter().enumerate() {
                if bits[i] == 1 {
                    assert_eq!(v.to_bits(), tv[i].to_bits());
                }
            }
        }
    }

    #[test]
    fn mask_switch_rejects_masked_input() {
        let mut dense = Checkpoint::new();
        dense.insert("w", Tensor::f32(vec![2], vec![1.0, 2.0]));
        let mut m = MaskSet::new();
        m.insert("w", Tensor::u8(vec![2], vec![1, 0])).unwrap();
        let masked = crate::store::apply_mask(&dense, &m).unwrap();
        let err = mask_switch(&masked, &m).unwrap_err();
        assert!(matches!(err, Error::NotDense { .. }), "{err}");
    }

    #[test]
    fn outputs_carry_provenance() {
        let (t, r, b) = fixture();
        let out = interpolate_extrapolate(&t, &r, &b, 0.25).unwrap();
        assert_eq!(out.metadata.get("edit_strategy").map(String::as_str), Some("interpolate"));
        assert_eq!(out.metadata.get("edit_alpha").map(String::as_str), Some("0.25"));
        assert!(out.metadata.contains_key("edit_target_fingerprint"));
        assert!(out.metadata.contains_key("edit_reference_fingerprint"));
        let out = interpolate_extrapolate(&t, &r, &b, 5.0).unwrap();
        assert_eq!(out.metadata.get("edit_strategy").map(String::as_str), Some("extrapolate"));
        // Inputs were not mutated.
        assert!(t.metadata.is_empty());
    }

    #[test]
    fn composition_alpha_one_leaves_no_value_diffs_on_selection() {
        let (t, r, b) = fixture();
        let edited = interpolate_extrapolate(&t, &r, &b, 1.0).unwrap();
        let (ev, rv) = (w(&edited), w(&r));
        let bits = b.get("w").unwrap().as_u8().unwrap();
        for i in 0..3 {
            if bits[i] == 1 {
                assert_eq!(ev[i], rv[i]);
            }
        }
    }
}
