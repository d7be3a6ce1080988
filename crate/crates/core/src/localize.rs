//! Localization: selecting the coordinates that encode the property.
//!
//! Each strategy produces a localization mask `b` (a [`MaskSet`] of kind
//! `localization_mask`) over the prunable tensors: `b_i = 1` marks a
//! coordinate selected for editing. Strategies compare the target and
//! reference pruning masks (and optionally weights); the uninformed
//! variants sample at random as controls.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Checkpoint, MaskKind, MaskSet, Tensor};
use crate::subnetwork::aligned_pairs;

/// How many coordinates value-based localization keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KAmount {
    Count(usize),
    /// Fraction of the intersection support, floored to a count.
    Fraction(f64),
}

impl KAmount {
    pub fn resolve(self, intersection: usize) -> Result<usize> {
        match self {
            KAmount::Count(k) => Ok(k),
            KAmount::Fraction(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidFraction { value: f });
                }
                Ok((f * intersection as f64).floor() as usize)
            }
        }
    }
}

/// Candidate pool for uninformed localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UninformedMode {
    /// Union of the two supports — the control for interpolation and
    /// extrapolation edits ("all weights, excluding those pruned in both").
    IpEp,
    /// Target support only — the control for prune edits.
    Pr,
}

/// Which binary rule mask-based localization applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskRule {
    /// Coordinates present in exactly one subnetwork (the default).
    #[default]
    SymmetricDifference,
    /// Literal elementwise product — selects coordinates present in *both*
    /// subnetworks. Kept as a debug variant for comparison only.
    Product,
}

/// A localization request: strategy plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum LocalizationSpec {
    MaskBased {
        #[serde(default)]
        rule: MaskRule,
    },
    ValueBased { k: KAmount },
    UninformedIpEp { budget: usize, seed: u64 },
    UninformedPr { budget: usize, seed: u64 },
}

impl LocalizationSpec {
    pub fn strategy_name(&self) -> &'static str {
        match self {
            LocalizationSpec::MaskBased { .. } => "mask_based",
            LocalizationSpec::ValueBased { .. } => "value_based",
            LocalizationSpec::UninformedIpEp { .. } => "uninformed_ip_ep",
            LocalizationSpec::UninformedPr { .. } => "uninformed_pr",
        }
    }
}

fn finish(mut b: MaskSet, spec_echo: &LocalizationSpec, parent: &Checkpoint) -> MaskSet {
    b.stamp(MaskKind::Localization, parent);
    b.metadata.insert(
        "localization_spec".into(),
        serde_json::to_string(spec_echo).expect("spec serializes"),
    );
    b
}

/// Run the strategy described by `spec` against a target/reference pair.
pub fn localize(
    spec: &LocalizationSpec,
    target: &Checkpoint,
    m_t: &MaskSet,
    reference: &Checkpoint,
    m_r: &MaskSet,
) -> Result<MaskSet> {
    let raw = match spec {
        LocalizationSpec::MaskBased { rule } => mask_based_with_rule(m_t, m_r, *rule)?,
        LocalizationSpec::ValueBased { k } => value_based(target, m_t, reference, m_r, *k)?,
        LocalizationSpec::UninformedIpEp { budget, seed } => {
            uninformed(m_t, m_r, *budget, UninformedMode::IpEp, *seed)?
        }
        LocalizationSpec::UninformedPr { budget, seed } => {
            uninformed(m_t, m_r, *budget, UninformedMode::Pr, *seed)?
        }
    };
    Ok(finish(raw, spec, target))
}

/// Symmetric difference of the two supports: `b_i = 1` iff exactly one of
/// the subnetworks retains coordinate `i`.
pub fn mask_based(m_t: &MaskSet, m_r: &MaskSet) -> Result<MaskSet> {
    mask_based_with_rule(m_t, m_r, MaskRule::SymmetricDifference)
}

pub fn mask_based_with_rule(m_t: &MaskSet, m_r: &MaskSet, rule: MaskRule) -> Result<MaskSet> {
    aligned_pairs(m_t, m_r)?;
    let mut out = MaskSet::new();
    for ((name, mt), mr) in m_t.masks.iter().zip(m_r.masks.values()) {
        let (ts, rs) = (mt.as_u8().unwrap(), mr.as_u8().unwrap());
        let bits: Vec<u8> = match rule {
            MaskRule::SymmetricDifference => ts.iter().zip(rs).map(|(&t, &r)| t ^ r).collect(),
            MaskRule::Product => ts.iter().zip(rs).map(|(&t, &r)| t & r).collect(),
        };
        out.insert(name.clone(), Tensor::u8(mt.shape().to_vec(), bits))?;
    }
    Ok(out)
}

/// Select the `k` coordinates of the intersection support with the largest
/// absolute weight difference between the masked reference and masked
/// target. Ties break by (tensor name, flat index) ascending, which also
/// makes top-k selections nested across k.
pub fn value_based(
    target: &Checkpoint,
    m_t: &MaskSet,
    reference: &Checkpoint,
    m_r: &MaskSet,
    k: KAmount,
) -> Result<MaskSet> {
    if !target.same_layout(reference) {
        return Err(Error::LayoutMismatch {
            reason: "target and reference checkpoints have different layouts".into(),
        });
    }
    m_t.check_layout(target)?;
    m_r.check_layout(reference)?;
    aligned_pairs(m_t, m_r)?;

    let names: Vec<&String> = m_t.masks.keys().collect();
    // (|diff|, tensor index, flat index) over the intersection support.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (tensor_idx, name) in names.iter().enumerate() {
        let tv = target.f32_values(name)?;
        let rv = reference.f32_values(name)?;
        let tm = m_t.get(name).unwrap().as_u8().unwrap();
        let rm = m_r.get(name).unwrap().as_u8().unwrap();
        for i in 0..tv.len() {
            if tm[i] == 1 && rm[i] == 1 {
                let diff = (rv[i] as f64 - tv[i] as f64).abs();
                candidates.push((diff, tensor_idx, i));
            }
        }
    }
    let k = k.resolve(candidates.len())?;
    if k > candidates.len() {
        return Err(Error::KTooLarge { k, intersection: candidates.len() });
    }

    let mut out = MaskSet::new();
    for name in &names {
        let shape = m_t.get(name).unwrap().shape().to_vec();
        let count: usize = shape.iter().product();
        out.insert((*name).clone(), Tensor::u8(shape, vec![0u8; count]))?;
    }
    if k > 0 {
        // Largest diffs first; equal diffs resolved by ascending position.
        let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        candidates.select_nth_unstable_by(k - 1, cmp);
        for &(_, tensor_idx, i) in &candidates[..k] {
            out.masks.get_mut(names[tensor_idx]).unwrap().as_u8_mut().unwrap()[i] = 1;
        }
    }
    Ok(out)
}

/// Sample `budget` coordinates uniformly without replacement from the
/// mode's candidate pool. Pure in (inputs, seed).
pub fn uninformed(
    m_t: &MaskSet,
    m_r: &MaskSet,
    budget: usize,
    mode: UninformedMode,
    seed: u64,
) -> Result<MaskSet> {
    aligned_pairs(m_t, m_r)?;
    let names: Vec<&String> = m_t.masks.keys().collect();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (tensor_idx, name) in names.iter().enumerate() {
        let tm = m_t.get(name).unwrap().as_u8().unwrap();
        let rm = m_r.get(name).unwrap().as_u8().unwrap();
        for i in 0..tm.len() {
            let eligible = match mode {
                UninformedMode::IpEp => tm[i] == 1 || rm[i] == 1,
                UninformedMode::Pr => tm[i] == 1,
            };
            if eligible {
                candidates.push((tensor_idx, i));
            }
        }
    }
    if budget > candidates.len() {
        return Err(Error::BudgetTooLarge { budget, candidates: candidates.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = candidates.len();
    for i in 0..budget {
        let j = rng.gen_range(i..n);
        candidates.swap(i, j);
    }

    let mut out = MaskSet::new();
    for name in &names {
        let shape = m_t.get(name).unwrap().shape().to_vec();
        let count: usize = shape.iter().product();
        out.insert((*name).clone(), Tensor::u8(shape, vec![0u8; count]))?;
    }
    for &(tensor_idx, i) in &candidates[..budget] {
        out.masks.get_mut(names[tensor_idx]).unwrap().as_u8_mut().unwrap()[i] = 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Per-component report
// ---------------------------------------------------------------------------

/// Maps tensor names (by glob pattern, first match wins) to a component
/// label and layer index for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRule {
    pub pattern: String,
    pub component: String,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub component: String,
    pub layer: usize,
    pub selected_count: usize,
    pub group_elements: usize,
    pub selected_pct: f64,
}

/// Aggregate a localization mask into per-component selection percentages.
/// Every tensor with selected weights must match a rule; tensors matching
/// no rule contribute nothing.
pub fn localization_report(
    b: &MaskSet,
    layout: &Checkpoint,
    rules: &[GroupRule],
) -> Result<Vec<ComponentRow>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize), (usize, usize)> = BTreeMap::new();
    for rule in rules {
        groups.entry((rule.component.clone(), rule.layer)).or_insert((0, 0));
    }
    for (name, tensor) in &layout.tensors {
        let rule = rules.iter().find(|r| crate::subnetwork::name_matches(&r.pattern, name));
        let selected = b
            .get(name)
            .map(|m| m.as_u8().unwrap().iter().filter(|&&v| v == 1).count())
            .unwrap_or(0);
        match rule {
            Some(rule) => {
                let entry = groups.get_mut(&(rule.component.clone(), rule.layer)).unwrap();
                entry.0 += selected;
                entry.1 += tensor.element_count();
            }
            None if selected > 0 => {
                return Err(Error::UnmappedTensor { name: name.clone() });
            }
            None => {}
        }
    }
    Ok(groups
        .into_iter()
        .map(|((component, layer), (selected_count, group_elements))| ComponentRow {
            component,
            layer,
            selected_count,
            group_elements,
            selected_pct: if group_elements == 0 {
                0.0
            } else {
                100.0 * selected_count as f64 / group_elements as f64
            },
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
