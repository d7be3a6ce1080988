//! WEAT-style bias measurement over embedding tables.
//!
//! The evaluator never runs a model: it consumes an [`EmbeddingTable`]
//! (one vector per word per layer, exported from any source) and a
//! [`WeatSpec`] of target/attribute word sets, and computes per-layer
//! association effect sizes plus permutation-test p-values.
//!
//! Sign convention: with WEAT-8-style specs (X = science terms, A = male
//! terms), a positive effect size means the stereotypical association is
//! present; negative means the anti-stereotypical one.

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Checkpoint, Tensor};

// ---------------------------------------------------------------------------
// Specifications
// ---------------------------------------------------------------------------

/// Paired target terms plus two attribute word sets — the bias specification
/// corpora and CDA swaps are built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasSpecification {
    /// (t1, t2) pairs; side 1 is stereotypically associated with `attrs_1`.
    pub target_pairs: Vec<(String, String)>,
    pub attrs_1: Vec<String>,
    pub attrs_2: Vec<String>,
}

impl BiasSpecification {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: BiasSpecification =
            serde_json::from_str(&text).map_err(|e| Error::BadInputFile {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        spec.validated()
    }

    /// Validate and normalize: exact duplicate pairs collapse to one entry
    /// (source word lists may repeat a pair verbatim); conflicting pairs or
    /// overlap between sides is an error.
    pub fn validated(mut self) -> Result<Self> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (t1, t2) in &self.target_pairs {
            match seen.get(t1.as_str()) {
                Some(&prev) if prev != t2 => {
                    return Err(Error::InvalidConfig {
                        reason: format!("target '{t1}' is paired with both '{prev}' and '{t2}'"),
                    })
                }
                _ => {
                    seen.insert(t1, t2);
                }
            }
        }
        let mut kept = Vec::new();
        for pair in std::mem::take(&mut self.target_pairs) {
            if !kept.contains(&pair) {
                kept.push(pair);
            }
        }
        self.target_pairs = kept;

        let t1: Vec<&str> = self.target_pairs.iter().map(|(a, _)| a.as_str()).collect();
        let t2: Vec<&str> = self.target_pairs.iter().map(|(_, b)| b.as_str()).collect();
        if let Some(w) = t1.iter().find(|w| t2.contains(w)) {
            return Err(Error::InvalidConfig {
                reason: format!("target term '{w}' appears on both sides of the pairing"),
            });
        }
        if let Some(w) = self.attrs_1.iter().find(|w| self.attrs_2.contains(w)) {
            return Err(Error::InvalidConfig {
                reason: format!("attribute '{w}' appears in both attribute sets"),
            });
        }
        Ok(self)
    }

    pub fn t1_terms(&self) -> Vec<&str> {
        self.target_pairs.iter().map(|(a, _)| a.as_str()).collect()
    }

    pub fn t2_terms(&self) -> Vec<&str> {
        self.target_pairs.iter().map(|(_, b)| b.as_str()).collect()
    }

    /// The paired term of `term`, looking in both directions.
    pub fn pair_of(&self, term: &str) -> Option<&str> {
        for (t1, t2) in &self.target_pairs {
            if t1 == term {
                return Some(t2);
            }
            if t2 == term {
                return Some(t1);
            }
        }
        None
    }
}

/// One WEAT instance: two target word sets and two attribute word sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatSpec {
    pub name: String,
    #[serde(rename = "X")]
    pub x: Vec<String>,
    #[serde(rename = "Y")]
    pub y: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<String>,
}

impl WeatSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: WeatSpec = serde_json::from_str(&text).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (set, words) in [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)] {
            if words.is_empty() {
                return Err(Error::EmptyWordSet { set: set.into(), spec: self.name.clone() });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

/// Per-word, per-layer embedding vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    layers: usize,
    dim: usize,
    vectors: BTreeMap<String, Vec<Vec<f64>>>,
}

impl EmbeddingTable {
    pub fn new(layers: usize, dim: usize) -> Self {
        assert!(layers >= 1 && dim >= 1, "layers and dim must be positive");
        EmbeddingTable { layers, dim, vectors: BTreeMap::new() }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn get(&self, word: &str) -> Option<&[Vec<f64>]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Insert a word's per-layer vectors, enforcing the shared layer count,
    /// dimension, and the no-zero-vector invariant.
    pub fn insert(&mut self, word: impl Into<String>, layers: Vec<Vec<f64>>) -> Result<()> {
        let word = word.into();
        if layers.len() != self.layers || layers.iter().any(|v| v.len() != self.dim) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "word '{word}': expected {} layers of dim {}, got {:?}",
                    self.layers,
                    self.dim,
                    layers.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        if layers.iter().any(|v| v.iter().all(|&c| c == 0.0)) {
            return Err(Error::ZeroVector { word });
        }
        self.vectors.insert(word, layers);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new();
        for (word, layers) in &self.vectors {
            let flat: Vec<f32> = layers.iter().flatten().map(|&v| v as f32).collect();
            cp.insert(format!("word/{word}"), Tensor::f32(vec![self.layers, self.dim], flat));
        }
        cp.metadata.insert("kind".into(), "embedding_table".into());
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (name, tensor) in &cp.tensors {
            let word = name.strip_prefix("word/").ok_or_else(|| Error::InvalidTensorMeta {
                name: name.clone(),
                position: 0,
                reason: "embedding tables hold only 'word/<token>' tensors".into(),
            })?;
            let shape = tensor.shape();
            if shape.len() != 2 {
                return Err(Error::InvalidTensorMeta {
                    name: name.clone(),
                    position: 0,
                    reason: format!("expected shape [layers, dim], got {shape:?}"),
                });
            }
            let (layers, dim) = (shape[0], shape[1]);
            let table = table.get_or_insert_with(|| EmbeddingTable::new(layers, dim));
            let values = tensor
                .as_f32()
                .ok_or_else(|| Error::NotF32 { name: name.clone() })?;
            let vecs: Vec<Vec<f64>> =
                values.chunks(dim).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
            table.insert(word, vecs)?;
        }
        table.ok_or(Error::InvalidConfig { reason: "embedding table holds no words".into() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

// ---------------------------------------------------------------------------
// WEAT arithmetic
// ---------------------------------------------------------------------------

fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some(dot / (nu * nv))
}

fn mean_cosine(w: &[f64], set: &[&[f64]], label: &str) -> Result<f64> {
    if cosine(w, w).is_none() {
        return Err(Error::ZeroVector { word: format!("{label} probe") });
    }
    let mut sum = 0.0;
    for (i, v) in set.iter().enumerate() {
        sum += cosine(w, v).ok_or_else(|| Error::ZeroVector { word: format!("{label}[{i}]") })?;
    }
    Ok(sum / set.len() as f64)
}

/// s(w, A, B): mean cosine of `w` to A minus mean cosine to B. In [−2, 2].
pub fn association(w: &[f64], a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    assert!(!a.is_empty() && !b.is_empty(), "attribute sets must be nonempty");
    Ok(mean_cosine(w, a, "A")? - mean_cosine(w, b, "B")?)
}

/// s(X, Y, A, B) = Σ_x s(x,A,B) − Σ_y s(y,A,B).
pub fn test_statistic(x: &[&[f64]], y: &[&[f64]], a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    let sx: f64 = x.iter().map(|w| association(w, a, b)).sum::<Result<f64>>()?;
    let sy: f64 = y.iter().map(|w| association(w, a, b)).sum::<Result<f64>>()?;
    Ok(sx - sy)
}

/// Which divisor the effect-size standard deviation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdDevMode {
    /// n − 1 divisor.
    #[default]
    Sample,
    /// n divisor, for cross-checks against implementations that use it.
    Population,
}

fn std_dev(values: &[f64], mode: StdDevMode) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let divisor = match mode {
        StdDevMode::Sample => n - 1.0,
        StdDevMode::Population => n,
    };
    (ss / divisor).sqrt()
}

/// Effect size: (mean_X s − mean_Y s) / std-dev_{X∪Y} s.
///
/// All-equal association scores (or a zero/non-finite result) raise
/// [`Error::DegenerateDistribution`] rather than returning NaN.
pub fn effect_size(
    x: &[&[f64]],
    y: &[&[f64]],
    a: &[&[f64]],
    b: &[&[f64]],
    mode: StdDevMode,
) -> Result<f64> {
    assert!(x.len() + y.len() >= 2, "need at least two target words");
    let sx: Vec<f64> = x.iter().map(|w| association(w, a, b)).collect::<Result<_>>()?;
    let sy: Vec<f64> = y.iter().map(|w| association(w, a, b)).collect::<Result<_>>()?;
    let pooled: Vec<f64> = sx.iter().chain(&sy).copied().collect();
    if pooled.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::DegenerateDistribution { layer: None });
    }
    let sd = std_dev(&pooled, mode);
    let mean_x = sx.iter().sum::<f64>() / sx.len() as f64;
    let mean_y = sy.iter().sum::<f64>() / sy.len() as f64;
    let effect = (mean_x - mean_y) / sd;
    if sd == 0.0 || !effect.is_finite() {
        return Err(Error::DegenerateDistribution { layer: None });
    }
    Ok(effect)
}

// ---------------------------------------------------------------------------
// Permutation test
// ---------------------------------------------------------------------------

/// How permutation p-values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// Enumerate every equal-size partition of X ∪ Y. Requires |X| = |Y|.
    Exhaustive,
    /// Sample partitions with a seeded generator.
    MonteCarlo { n: usize, seed: u64 },
}

/// Largest partition count `Exhaustive` will enumerate.
pub const ENUMERATION_CAP: u64 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num
}

/// Advance `idx` to the next k-combination of {0..n} in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] != i + n - k {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Permutation p-value: the fraction of equal-size partitions (Xᵢ, Yᵢ) of
/// X ∪ Y whose statistic strictly exceeds s(X, Y, A, B). Ties (including the
/// original partition) never count.
pub fn permutation_p(
    x: &[&[f64]],
    y: &[&[f64]],
    a: &[&[f64]],
    b: &[&[f64]],
    method: PMethod,
) -> Result<f64> {
    // One association score per pooled word; every partition statistic is a
    // signed sum over these.
    let scores: Vec<f64> = x
        .iter()
        .chain(y.iter())
        .map(|w| association(w, a, b))
        .collect::<Result<_>>()?;
    let total: f64 = scores.iter().sum();
    let k = x.len();
    let n = scores.len();
    // s(X', Y') = Σ_{X'} − Σ_{Y'} = 2·Σ_{X'} − total.
    let base = 2.0 * scores[..k].iter().sum::<f64>() - total;

    match method {
        PMethod::Exhaustive => {
            if x.len() != y.len() {
                return Err(Error::UnequalPartitionSizes { x: x.len(), y: y.len() });
            }
            let partitions = binomial(n, k);
            if partitions > ENUMERATION_CAP as u128 {
                return Err(Error::EnumerationTooLarge { partitions, cap: ENUMERATION_CAP });
            }
            let mut idx: Vec<usize> = (0..k).collect();
            let mut exceed = 0u64;
            loop {
                let stat = 2.0 * idx.iter().map(|&i| scores[i]).sum::<f64>() - total;
                if stat > base {
                    exceed += 1;
                }
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
            Ok(exceed as f64 / partitions as f64)
        }
        PMethod::MonteCarlo { n: samples, seed } => {
            assert!(samples >= 1, "Monte Carlo requires n >= 1");
            // Fixed-size chunks with per-chunk sub-seeds keep parallel and
            // serial runs identical.
            const CHUNK: usize = 4096;
            let chunks = samples.div_ceil(CHUNK);
            let exceed: u64 = (0..chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(chunk as u64);
                    let in_chunk = CHUNK.min(samples - chunk * CHUNK);
                    let mut pool: Vec<usize> = (0..n).collect();
                    let mut count = 0u64;
                    for _ in 0..in_chunk {
                        // Partial Fisher–Yates: the first k entries become a
                        // uniform k-subset.
                        for i in 0..k {
                            let j = rng.gen_range(i..n);
                            pool.swap(i, j);
                        }
                        let stat =
                            2.0 * pool[..k].iter().map(|&i| scores[i]).sum::<f64>() - total;
                        if stat > base {
                            count += 1;
                        }
                    }
                    count
                })
                .sum();
            Ok(exceed as f64 / samples as f64)
        }
    }
}

// ---------------------------------------------------------------------------
// Per-layer evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub spec: String,
    pub per_layer_effect: Vec<f64>,
    pub avg_effect: f64,
    pub per_layer_p: Vec<f64>,
    pub p_method: PMethod,
}

/// Run the WEAT for every layer of the table and average the effect sizes.
pub fn weat(
    table: &EmbeddingTable,
    spec: &WeatSpec,
    method: PMethod,
    mode: StdDevMode,
) -> Result<WeatResult> {
    spec.validate()?;
    let lookup = |words: &[String], layer: usize| -> Result<Vec<&[f64]>> {
        words
            .iter()
            .map(|w| {
                table
                    .get(w)
                    .map(|layers| layers[layer].as_slice())
                    .ok_or_else(|| Error::MissingWord { word: w.clone(), spec: spec.name.clone() })
            })
            .collect()
    };

    let mut per_layer_effect = Vec::with_capacity(table.layers());
    let mut per_layer_p = Vec::with_capacity(table.layers());
    for layer in 0..table.layers() {
        let x = lookup(&spec.x, layer)?;
        let y = lookup(&spec.y, layer)?;
        let a = lookup(&spec.a, layer)?;
        let b = lookup(&spec.b, layer)?;
        let effect = effect_size(&x, &y, &a, &b, mode).map_err(|e| match e {
            Error::DegenerateDistribution { .. } => {
                Error::DegenerateDistribution { layer: Some(layer) }
            }
            other => other,
        })?;
        per_layer_effect.push(effect);
        per_layer_p.push(permutation_p(&x, &y, &a, &b, method)?);
    }
    let avg_effect = per_layer_effect.iter().sum::<f64>() / per_layer_effect.len() as f64;
    Ok(WeatResult {
        spec: spec.name.clone(),
        per_layer_effect,
        avg_effect,
        per_layer_p,
        p_method: method,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
