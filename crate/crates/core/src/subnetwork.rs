//! Iterative magnitude pruning and subnetwork statistics.
//!
//! Pruning is global and unstructured: each round removes the
//! lowest-magnitude weights across *all* prunable tensors at once, then
//! rewinds the survivors to their initial values. A subnetwork counts as a
//! winning ticket when, fine-tuned for the same step budget as the full
//! model, its eval loss stays within a relative tolerance (default 5%).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{apply_mask, Checkpoint, Dtype, MaskKind, MaskSet, Tensor};

/// How `rate_per_round` is interpreted across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Each round prunes `rate` of the *currently unpruned* weights
    /// (classic lottery-ticket schedule: sparsity 1 − (1−p)^r).
    #[default]
    OfRemaining,
    /// Each round prunes `rate` of the *original* weight count, so rounds
    /// land on exactly p, 2p, 3p, ... sparsity.
    OfOriginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningConfig {
    /// Fraction pruned per round, in (0, 1).
    pub rate_per_round: f64,
    #[serde(default)]
    pub rate_mode: RateMode,
    pub rounds: usize,
    /// Name patterns (`*` matches any substring) for tensors pruning must
    /// not touch — typically biases and task heads.
    #[serde(default)]
    pub excluded_groups: Vec<String>,
    /// Fine-tuning steps before each prune and for each evaluation.
    pub steps_per_round: usize,
}

impl PruningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_per_round > 0.0 && self.rate_per_round < 1.0) {
            return Err(Error::InvalidFraction { value: self.rate_per_round });
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig { reason: "rounds must be at least 1".into() });
        }
        if self.steps_per_round == 0 {
            return Err(Error::InvalidConfig {
                reason: "steps_per_round must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Patterns that match no tensor in `ckpt` — callers may warn on these.
    pub fn unmatched_patterns(&self, ckpt: &Checkpoint) -> Vec<String> {
        self.excluded_groups
            .iter()
            .filter(|p| !ckpt.tensors.keys().any(|name| name_matches(p, name)))
            .cloned()
            .collect()
    }
}

/// Glob-style name match where `*` stands for any (possibly empty) substring.
pub fn name_matches(pattern: &str, name: &str) -> bool {
    fn rec(pat: &[u8], text: &[u8]) -> bool {
        match pat.split_first() {
            None => text.is_empty(),
            Some((b'*', rest)) => {
                (0..=text.len()).any(|skip| rec(rest, &text[skip..]))
            }
            Some((&c, rest)) => text.first() == Some(&c) && rec(rest, &text[1..]),
        }
    }
    rec(pattern.as_bytes(), name.as_bytes())
}

fn is_excluded(name: &str, excluded: &[String]) -> bool {
    excluded.iter().any(|p| name_matches(p, name))
}

/// Names of tensors pruning may touch: F32 and not matching any excluded
/// pattern. Ascending by name.
pub fn prunable_tensors<'a>(ckpt: &'a Checkpoint, excluded: &[String]) -> Vec<&'a str> {
    ckpt.tensors
        .iter()
        .filter(|(name, t)| t.dtype() == Dtype::F32 && !is_excluded(name, excluded))
        .map(|(name, _)| name.as_str())
        .collect()
}

/// Expand `current` into an explicit mask entry per prunable tensor
/// (absent entries become all-ones), validating alignment and that
/// excluded tensors carry no zeros.
fn explicit_mask(ckpt: &Checkpoint, current: &MaskSet, excluded: &[String]) -> Result<MaskSet> {
    current.check_layout(ckpt)?;
    for (name, mask) in &current.masks {
        if is_excluded(name, excluded) {
            let bits = mask.as_u8().expect("validated U8");
            if bits.iter().any(|&b| b == 0) {
                return Err(Error::LayoutMismatch {
                    reason: format!("excluded tensor '{name}' has pruned elements in the mask"),
                });
            }
        }
    }
    let mut out = MaskSet::new();
    out.metadata = current.metadata.clone();
    for name in prunable_tensors(ckpt, excluded) {
        let tensor = match current.get(name) {
            Some(m) => m.clone(),
            None => {
                let count = ckpt.get(name)?.element_count();
                Tensor::u8(ckpt.get(name)?.shape().to_vec(), vec![1u8; count])
            }
        };
        out.insert(name, tensor)?;
    }
    Ok(out)
}

/// Zero out the `count` smallest-magnitude currently-unpruned elements
/// across all prunable tensors. Ties break by (tensor name, flat index)
/// ascending. The result has an explicit entry for every prunable tensor.
pub fn prune_lowest_count(
    ckpt: &Checkpoint,
    current: &MaskSet,
    count: usize,
    excluded: &[String],
) -> Result<MaskSet> {
    let mut mask = explicit_mask(ckpt, current, excluded)?;
    let names: Vec<String> = mask.masks.keys().cloned().collect();

    let mut candidates: Vec<(f32, usize, usize)> = Vec::new();
    for (tensor_idx, name) in names.iter().enumerate() {
        let values = ckpt.f32_values(name)?;
        let bits = mask.get(name).unwrap().as_u8().unwrap();
        for (i, (&v, &b)) in values.iter().zip(bits).enumerate() {
            if b == 1 {
                candidates.push((v.abs(), tensor_idx, i));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::RateInfeasible { round: 0, requested: count, available: 0 });
    }
    if count > candidates.len() {
        return Err(Error::RateInfeasible {
            round: 0,
            requested: count,
            available: candidates.len(),
        });
    }
    if count > 0 {
        // Names are already in ascending order (BTreeMap keys), so the
        // (magnitude, tensor index, flat index) triple gives the documented
        // deterministic tie-break.
        let cmp = |a: &(f32, usize, usize), b: &(f32, usize, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        candidates.select_nth_unstable_by(count - 1, cmp);
        for &(_, tensor_idx, i) in &candidates[..count] {
            mask.masks.get_mut(&names[tensor_idx]).unwrap().as_u8_mut().unwrap()[i] = 0;
        }
    }
    Ok(mask)
}

/// Prune `fraction` of the currently-unpruned prunable weights (floored to
/// a whole count), globally by magnitude.
pub fn global_magnitude_prune(
    ckpt: &Checkpoint,
    current: &MaskSet,
    fraction: f64,
    excluded: &[String],
) -> Result<MaskSet> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction { value: fraction });
    }
    let mask = explicit_mask(ckpt, current, excluded)?;
    let remaining: usize =
        mask.masks.values().map(|m| m.as_u8().unwrap().iter().filter(|&&b| b == 1).count()).sum();
    if remaining == 0 {
        return Err(Error::RateInfeasible { round: 0, requested: 0, available: 0 });
    }
    let count = (fraction * remaining as f64).floor() as usize;
    prune_lowest_count(ckpt, current, count, excluded)
}

// ---------------------------------------------------------------------------
// IMP driver
// ---------------------------------------------------------------------------

/// Callbacks `run_imp` needs from a training backend. Implementations must
/// be deterministic: equal inputs produce bitwise-equal outputs, and
/// coordinates zeroed by the mask stay exactly zero through fine-tuning.
pub trait TrainerInterface {
    fn fine_tune(&self, start: &Checkpoint, mask: &MaskSet, steps: usize) -> Result<Checkpoint>;
    /// Deterministic eval loss, lower is better.
    fn evaluate(&self, ckpt: &Checkpoint) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct SubnetworkRecord {
    pub round: usize,
    pub mask: MaskSet,
    /// Fraction of prunable elements set to 0.
    pub sparsity: f64,
    /// Layout fingerprint of θ₀, hex.
    pub rewind_ckpt_ref: String,
    pub subnet_eval: f64,
    pub full_eval: f64,
    pub winning_ticket: bool,
}

impl SubnetworkRecord {
    pub const CSV_HEADER: &'static str = "round,sparsity,subnet_eval,full_eval,winning_ticket";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.round, self.sparsity, self.subnet_eval, self.full_eval, self.winning_ticket
        )
    }
}

/// True iff the subnetwork's loss is within `tol` (relative) of the full
/// model's: `subnet_eval ≤ (1 + tol) × full_eval`.
pub fn winning_ticket_check(subnet_eval: f64, full_eval: f64, tol: f64) -> Result<bool> {
    for (value, context) in [(subnet_eval, "subnet_eval"), (full_eval, "full_eval")] {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidLoss { value, context: context.into() });
        }
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::InvalidConfig { reason: format!("tolerance {tol} must be ≥ 0") });
    }
    Ok(subnet_eval <= (1.0 + tol) * full_eval)
}

pub const WINNING_TICKET_TOL: f64 = 0.05;

/// Run iterative magnitude pruning with weight rewinding.
///
/// Per round: fine-tune the current masked network from θ₀ for
/// `steps_per_round` steps, prune the schedule's share of weights by global
/// magnitude, rewind survivors to θ₀, then fine-tune the new subnetwork for
/// the same budget and compare its eval loss against the full model's
/// (fine-tuned once for that budget) to decide winning-ticket status.
pub fn run_imp(
    trainer: &dyn TrainerInterface,
    init: &Checkpoint,
    cfg: &PruningConfig,
) -> Result<Vec<SubnetworkRecord>> {
    cfg.validate()?;
    let mut mask = explicit_mask(init, &MaskSet::new(), &cfg.excluded_groups)?;
    mask.stamp(MaskKind::Pruning, init);
    let prunable_count: usize = mask.masks.values().map(Tensor::element_count).sum();
    if prunable_count == 0 {
        return Err(Error::RateInfeasible { round: 1, requested: 0, available: 0 });
    }
    let rewind_ref = format!("{:016x}", init.fingerprint());

    // The full model's budgeted fine-tune; round 1's pre-prune fine-tune is
    // the same computation, so it seeds the loop.
    let full_trained = trainer.fine_tune(init, &mask, cfg.steps_per_round)?;
    let full_eval = trainer.evaluate(&full_trained)?;

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut trained = full_trained;
    for round in 1..=cfg.rounds {
        let remaining: usize = mask
            .masks
            .values()
            .map(|m| m.as_u8().unwrap().iter().filter(|&&b| b == 1).count())
            .sum();
        let to_prune = match cfg.rate_mode {
            RateMode::OfRemaining => (cfg.rate_per_round * remaining as f64).floor() as usize,
            RateMode::OfOriginal => {
                let target_cumulative =
                    (cfg.rate_per_round * round as f64 * prunable_count as f64).floor() as usize;
                let pruned_so_far = prunable_count - remaining;
                target_cumulative.saturating_sub(pruned_so_far)
            }
        };
        if to_prune > remaining || remaining == 0 {
            return Err(Error::RateInfeasible { round, requested: to_prune, available: remaining });
        }
        mask = prune_lowest_count(&trained, &mask, to_prune, &cfg.excluded_groups).map_err(
            |e| match e {
                Error::RateInfeasible { requested, available, .. } => {
                    Error::RateInfeasible { round, requested, available }
                }
                other => other,
            },
        )?;
        mask.stamp(MaskKind::Pruning, init);

        let rewound = apply_mask(init, &mask)?;
        let subnet_trained = trainer.fine_tune(&rewound, &mask, cfg.steps_per_round)?;
        let subnet_eval = trainer.evaluate(&subnet_trained)?;

        let pruned = prunable_count - mask_ones(&mask);
        let sparsity = pruned as f64 / prunable_count as f64;
        records.push(SubnetworkRecord {
            round,
            mask: mask.clone(),
            sparsity,
            rewind_ckpt_ref: rewind_ref.clone(),
            subnet_eval,
            full_eval,
            winning_ticket: winning_ticket_check(subnet_eval, full_eval, WINNING_TICKET_TOL)?,
        });
        // Round r+1's "fine-tune the current masked network" is exactly this
        // round's subnet evaluation run.
        trained = subnet_trained;
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Mask statistics
// ---------------------------------------------------------------------------

pub(crate) fn aligned_pairs<'a>(
    a: &'a MaskSet,
    b: &'a MaskSet,
) -> Result<Vec<(&'a [u8], &'a [u8])>> {
    if a.masks.len() != b.masks.len()
        || a.masks.keys().zip(b.masks.keys()).any(|(x, y)| x != y)
    {
        return Err(Error::LayoutMismatch {
            reason: format!(
                "mask sets cover different tensors ({} vs {})",
                a.masks.len(),
                b.masks.len()
            ),
        });
    }
    let mut pairs = Vec::with_capacity(a.masks.len());
    for ((name, ma), mb) in a.masks.iter().zip(b.masks.values()) {
        if ma.shape() != mb.shape() {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                expected: ma.shape().to_vec(),
                actual: mb.shape().to_vec(),
            });
        }
        pairs.push((ma.as_u8().unwrap(), mb.as_u8().unwrap()));
    }
    Ok(pairs)
}

/// Jaccard similarity of the retained (value-1) coordinate sets. Both masks
/// must cover the same tensors; 1.0 when both retained sets are empty.
pub fn jaccard(a: &MaskSet, b: &MaskSet) -> Result<f64> {
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (xs, ys) in aligned_pairs(a, b)? {
        for (&x, &y) in xs.iter().zip(ys) {
            intersection += (x == 1 && y == 1) as usize;
            union += (x == 1 || y == 1) as usize;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// Fraction of prunable coordinates on which the two masks disagree.
pub fn mask_difference_fraction(a: &MaskSet, b: &MaskSet) -> Result<f64> {
    let mut differing = 0usize;
    let mut total = 0usize;
    for (xs, ys) in aligned_pairs(a, b)? {
        total += xs.len();
        differing += xs.iter().zip(ys).filter(|(x, y)| x != y).count();
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(differing as f64 / total as f64)
}

/// Ones counted over a mask's own tensors (its prunable set).
pub fn mask_ones(mask: &MaskSet) -> usize {
    mask.masks.values().map(|m| m.as_u8().unwrap().iter().filter(|&&b| b == 1).count()).sum()
}

/// Convenience for tests and reports: collect mask bits as a name→bits map.
pub fn mask_bits(mask: &MaskSet) -> BTreeMap<String, Vec<u8>> {
    mask.masks.iter().map(|(n, t)| (n.clone(), t.as_u8().unwrap().to_vec())).collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
