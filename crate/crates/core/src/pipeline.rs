//! Seed-level toy pipeline: generate the stereo/anti corpus pair, train the
//! full models, run iterative magnitude pruning in both directions, and hook
//! trained checkpoints up to the WEAT evaluator.
//!
//! Everything downstream of a seed is deterministic, so a [`SeedArtifacts`]
//! value is a pure function of `(vocab, config, seed)` and the sweep runner
//! can rebuild any piece from the seed alone. The crate ships default data
//! files (vocabulary, bias specification, WEAT word sets) embedded at compile
//! time so the pipeline runs with no external inputs.

use serde::{Deserialize, Serialize};

use crate::biaseval::{weat, BiasSpecification, PMethod, StdDevMode, WeatResult, WeatSpec};
use crate::error::{Error, Result};
use crate::store::{apply_mask, Checkpoint};
use crate::subnetwork::{
    run_imp, PruningConfig, RateMode, SubnetworkRecord, TrainerInterface,
};
use crate::toytrain::{
    extract_embeddings, generate_corpus, train, Direction, ToyCorpus, ToyModel, ToyTrainer,
    ToyVocab, TrainConfig,
};

// ---------------------------------------------------------------------------
// Built-in data files
// ---------------------------------------------------------------------------

/// The default 64-token toy vocabulary (8 target pairs, 8+8 attributes,
/// neutral fillers).
pub fn builtin_toy_vocab() -> ToyVocab {
    ToyVocab::from_json(
        include_str!("../data/toy_vocab.json"),
        std::path::Path::new("builtin:toy_vocab.json"),
    )
    .expect("embedded toy vocabulary is valid")
}

/// WEAT word sets matching the toy vocabulary's attribute and target tokens:
/// X/Y are the science/arts attributes and A/B the female/male targets.
///
/// A holds the *female* targets deliberately. The toy predictor's input
/// embeddings anti-align co-occurring token groups (co-occurring tokens play
/// complementary prediction roles, not interchangeable ones), so a model
/// trained on female↔arts/male↔science co-occurrences puts the science
/// embeddings nearer the female ones. Listing the female targets as A makes
/// a stereo-trained model score positive, keeping the reported sign
/// convention: positive = stereotypical.
pub fn builtin_toy_weat() -> WeatSpec {
    let spec: WeatSpec = serde_json::from_str(include_str!("../data/toy_weat.json"))
        .expect("embedded toy WEAT spec parses");
    spec.validate().expect("embedded toy WEAT spec is valid");
    spec
}

/// The science/arts vs male/female WEAT word sets used at full scale.
pub fn builtin_weat8() -> WeatSpec {
    let spec: WeatSpec = serde_json::from_str(include_str!("../data/weat8.json"))
        .expect("embedded WEAT-8 spec parses");
    spec.validate().expect("embedded WEAT-8 spec is valid");
    spec
}

/// The full-scale gender bias specification (target pairs + attribute sets).
pub fn builtin_bias_spec() -> BiasSpecification {
    let spec: BiasSpecification =
        serde_json::from_str(include_str!("../data/bias_specification.json"))
            .expect("embedded bias specification parses");
    spec.validated().expect("embedded bias specification is valid")
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything a seed-level run needs besides the vocabulary and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Sentences per direction corpus (the stereo and anti corpora share a
    /// skeleton, so both have this many sentences).
    pub n_sentences: usize,
    pub neutral_fraction: f64,
    /// Sentence length in tokens.
    pub window: usize,
    /// Embedding dimension of the toy model.
    pub dim: usize,
    /// Full-model training; its `seed` field is overridden by the pipeline
    /// seed so one number drives the whole run.
    pub train: TrainConfig,
    /// Learning rate for IMP fine-tunes (and subnetwork re-derivation).
    /// Deliberately gentler than `train.lr`: pruning masks should reflect
    /// the shared initialization plus direction-specific movement, the way
    /// a brief fine-tune perturbs a pretrained model, rather than two
    /// fully-converged trajectories that agree on little.
    pub imp_lr: f64,
    pub pruning: PruningConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_sentences: 4000,
            neutral_fraction: 0.2,
            window: 8,
            dim: 16,
            // Full models train to saturation so the two directions land on
            // opposite WEAT signs regardless of where the shared θ₀ started.
            train: TrainConfig { steps: 4000, ..TrainConfig::default() },
            imp_lr: 0.3,
            pruning: PruningConfig {
                rate_per_round: 0.1,
                rate_mode: RateMode::OfOriginal,
                rounds: 4,
                // Biases stay dense: magnitude pruning targets weights, and
                // the zero-initialized biases would otherwise be pruned
                // wholesale in round one.
                excluded_groups: vec!["*.bias".into()],
                steps_per_round: 1500,
            },
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sentences == 0 {
            return Err(Error::InvalidConfig { reason: "n_sentences must be positive".into() });
        }
        if !(0.0..=1.0).contains(&self.neutral_fraction) {
            return Err(Error::InvalidFraction { value: self.neutral_fraction });
        }
        if self.window < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("window {} too small: need at least 2 tokens", self.window),
            });
        }
        if self.dim < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("dim {} too small: need at least 2", self.dim),
            });
        }
        if !self.imp_lr.is_finite() || self.imp_lr < 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!("imp_lr {} must be finite and non-negative", self.imp_lr),
            });
        }
        self.train.validate()?;
        self.pruning.validate()
    }
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// Everything one training direction produces for a seed.
#[derive(Debug, Clone)]
pub struct DirectionArtifacts {
    pub direction: Direction,
    pub corpus: ToyCorpus,
    /// Trainer bound to this corpus; reused by the sweep to re-derive
    /// subnetwork checkpoints and to score edited models.
    pub trainer: ToyTrainer,
    /// The dense fully-trained model.
    pub full: Checkpoint,
    /// Held-out leave-one-out loss of `full`.
    pub full_eval: f64,
    /// One record per pruning round, ascending sparsity.
    pub records: Vec<SubnetworkRecord>,
}

/// How far a record's sparsity may sit from a requested level and still
/// count as that level (covers the floor slack of count-based pruning).
pub const SPARSITY_MATCH_TOL: f64 = 0.01;

impl DirectionArtifacts {
    /// The pruning record whose sparsity is closest to `level`, within
    /// [`SPARSITY_MATCH_TOL`].
    pub fn record_at(&self, level: f64) -> Result<&SubnetworkRecord> {
        self.records
            .iter()
            .min_by(|a, b| {
                (a.sparsity - level)
                    .abs()
                    .partial_cmp(&(b.sparsity - level).abs())
                    .expect("sparsities are finite")
            })
            .filter(|r| (r.sparsity - level).abs() <= SPARSITY_MATCH_TOL)
            .ok_or_else(|| Error::InvalidConfig {
                reason: format!(
                    "no pruning round reaches sparsity {level} (have: {})",
                    self.records
                        .iter()
                        .map(|r| format!("{:.4}", r.sparsity))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            })
    }
}

/// The complete per-seed output: one shared initialization, two directions.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    /// θ₀ — the common starting point both directions train and rewind to.
    pub init: Checkpoint,
    pub stereo: DirectionArtifacts,
    pub anti: DirectionArtifacts,
}

impl SeedArtifacts {
    pub fn direction(&self, direction: Direction) -> Result<&DirectionArtifacts> {
        match direction {
            Direction::Stereo => Ok(&self.stereo),
            Direction::Anti => Ok(&self.anti),
            Direction::Neutral => Err(Error::InvalidConfig {
                reason: "the pipeline trains stereo and anti directions only".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

fn run_direction(
    vocab: &ToyVocab,
    cfg: &PipelineConfig,
    seed: u64,
    direction: Direction,
    init: &ToyModel,
) -> Result<DirectionArtifacts> {
    let corpus =
        generate_corpus(vocab, direction, cfg.n_sentences, cfg.neutral_fraction, cfg.window, seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train };
    let (full_model, _) = train(init, &corpus, vocab, &train_cfg)?;
    let full = full_model.into_checkpoint();
    let imp_cfg = TrainConfig { seed, lr: cfg.imp_lr, ..cfg.train };
    let trainer = ToyTrainer::new(vocab.clone(), corpus.clone(), imp_cfg)?;
    // Score the *stored* (f32-rounded) checkpoint rather than taking
    // `train`'s in-flight f64 eval, so reloading `full` from disk reproduces
    // this number bit for bit.
    let full_eval = trainer.evaluate(&full)?;
    let records = run_imp(&trainer, init.checkpoint(), &cfg.pruning)?;
    Ok(DirectionArtifacts { direction, corpus, trainer, full, full_eval, records })
}

/// Run the whole seed-level pipeline: shared initialization, then corpus →
/// train → IMP for the stereo and anti directions. The two corpora share a
/// sentence skeleton (same seed), differing only in target-token choice, and
/// both directions rewind to the same θ₀.
pub fn run_seed_pipeline(vocab: &ToyVocab, cfg: &PipelineConfig, seed: u64) -> Result<SeedArtifacts> {
    cfg.validate()?;
    let init = ToyModel::init(vocab.len(), cfg.dim, seed)?;
    let stereo = run_direction(vocab, cfg, seed, Direction::Stereo, &init)?;
    let anti = run_direction(vocab, cfg, seed, Direction::Anti, &init)?;
    Ok(SeedArtifacts { seed, init: init.into_checkpoint(), stereo, anti })
}

/// Re-derive the trained subnetwork checkpoint a pruning record describes:
/// mask θ₀, then fine-tune with pruned coordinates frozen. This repeats the
/// exact computation `run_imp` scored the record with, so the result's eval
/// loss equals the recorded `subnet_eval`.
pub fn subnet_checkpoint(
    init: &Checkpoint,
    trainer: &ToyTrainer,
    record: &SubnetworkRecord,
    steps: usize,
) -> Result<Checkpoint> {
    let rewound = apply_mask(init, &record.mask)?;
    trainer.fine_tune(&rewound, &record.mask, steps)
}

/// Extract the spec's word embeddings from a model checkpoint and run the
/// WEAT over both layers.
pub fn model_weat(
    ckpt: &Checkpoint,
    vocab: &ToyVocab,
    spec: &WeatSpec,
    method: PMethod,
) -> Result<WeatResult> {
    let model = ToyModel::from_checkpoint(ckpt.clone())?;
    let mut words: Vec<String> = Vec::new();
    for word in spec.x.iter().chain(&spec.y).chain(&spec.a).chain(&spec.b) {
        if !words.contains(word) {
            words.push(word.clone());
        }
    }
    let table = extract_embeddings(&model, vocab, &words)?;
    weat(&table, spec, method, StdDevMode::default())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
