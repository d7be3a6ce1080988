//! The toy model and its masked-token training loop.
//!
//! Architecture: a masked position is predicted from the mean of the
//! sentence's unmasked embedding rows, passed through one tanh hidden layer
//! and a softmax output. Parameters are stored as F32 tensors in a
//! [`Checkpoint`]; all arithmetic runs in f64 and results round to f32 once
//! per SGD step, so training is bitwise reproducible for a given
//! (seed, config, corpus) triple.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biaseval::EmbeddingTable;
use crate::error::{Error, Result};
use crate::store::{Checkpoint, MaskSet, Tensor};

use super::corpus::ToyCorpus;
use super::vocab::ToyVocab;

pub const EMBEDDING: &str = "embedding.weight";
pub const HIDDEN_W: &str = "hidden.weight";
pub const HIDDEN_B: &str = "hidden.bias";
pub const OUTPUT_W: &str = "output.weight";
pub const OUTPUT_B: &str = "output.bias";

/// The five tensor names of a toy model, in a fixed order shared by
/// [`ToyParams`] internals.
pub fn tensor_names() -> [&'static str; 5] {
    [EMBEDDING, HIDDEN_W, HIDDEN_B, OUTPUT_W, OUTPUT_B]
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A shape-validated checkpoint holding the five model tensors:
/// `embedding.weight` [vocab × dim], `hidden.weight` [dim × dim],
/// `hidden.bias` [dim], `output.weight` [dim × vocab], `output.bias` [vocab].
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    checkpoint: Checkpoint,
}

impl ToyModel {
    /// Random initialization: weights uniform in ±1/√dim, biases zero.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Result<ToyModel> {
        if vocab_size == 0 || dim < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("model needs vocab ≥ 1 and dim ≥ 2, got {vocab_size}×{dim}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(-scale..scale) as f32).collect()
        };
        let mut cp = Checkpoint::new();
        cp.insert(EMBEDDING, Tensor::f32(vec![vocab_size, dim], draw(vocab_size * dim)));
        cp.insert(HIDDEN_W, Tensor::f32(vec![dim, dim], draw(dim * dim)));
        cp.insert(HIDDEN_B, Tensor::f32(vec![dim], vec![0.0; dim]));
        cp.insert(OUTPUT_W, Tensor::f32(vec![dim, vocab_size], draw(dim * vocab_size)));
        cp.insert(OUTPUT_B, Tensor::f32(vec![vocab_size], vec![0.0; vocab_size]));
        Ok(ToyModel { checkpoint: cp })
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<ToyModel> {
        let emb = checkpoint.get(EMBEDDING)?;
        let (vocab, dim) = match emb.shape() {
            [v, d] => (*v, *d),
            other => {
                return Err(Error::ShapeMismatch {
                    name: EMBEDDING.into(),
                    expected: vec![0, 0],
                    actual: other.to_vec(),
                })
            }
        };
        if vocab == 0 || dim < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("model needs vocab ≥ 1 and dim ≥ 2, got {vocab}×{dim}"),
            });
        }
        for (name, expected) in [
            (HIDDEN_W, vec![dim, dim]),
            (HIDDEN_B, vec![dim]),
            (OUTPUT_W, vec![dim, vocab]),
            (OUTPUT_B, vec![vocab]),
        ] {
            let tensor = checkpoint.get(name)?;
            checkpoint.f32_values(name)?;
            if tensor.shape() != expected.as_slice() {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected,
                    actual: tensor.shape().to_vec(),
                });
            }
        }
        checkpoint.f32_values(EMBEDDING)?;
        Ok(ToyModel { checkpoint })
    }

    pub fn vocab_size(&self) -> usize {
        self.checkpoint.get(EMBEDDING).expect("validated").shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.checkpoint.get(EMBEDDING).expect("validated").shape()[1]
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.checkpoint
    }
}

// ---------------------------------------------------------------------------
// f64 working parameters
// ---------------------------------------------------------------------------

/// Dense f64 copies of the five model tensors; the working representation
/// for forward/backward passes and SGD. The same struct doubles as a
/// gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub vocab: usize,
    pub dim: usize,
    pub embedding: Vec<f64>,
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl ToyParams {
    pub fn zeros(vocab: usize, dim: usize) -> ToyParams {
        ToyParams {
            vocab,
            dim,
            embedding: vec![0.0; vocab * dim],
            hidden_w: vec![0.0; dim * dim],
            hidden_b: vec![0.0; dim],
            output_w: vec![0.0; dim * vocab],
            output_b: vec![0.0; vocab],
        }
    }

    pub fn from_model(model: &ToyModel) -> ToyParams {
        let cp = model.checkpoint();
        let widen = |name: &str| -> Vec<f64> {
            cp.f32_values(name).expect("validated").iter().map(|&v| v as f64).collect()
        };
        ToyParams {
            vocab: model.vocab_size(),
            dim: model.dim(),
            embedding: widen(EMBEDDING),
            hidden_w: widen(HIDDEN_W),
            hidden_b: widen(HIDDEN_B),
            output_w: widen(OUTPUT_W),
            output_b: widen(OUTPUT_B),
        }
    }

    /// Round back to f32 storage, carrying over checkpoint metadata.
    pub fn into_model(self, metadata: std::collections::BTreeMap<String, String>) -> ToyModel {
        let narrow = |v: &[f64]| -> Vec<f32> { v.iter().map(|&x| x as f32).collect() };
        let mut cp = Checkpoint::new();
        cp.insert(EMBEDDING, Tensor::f32(vec![self.vocab, self.dim], narrow(&self.embedding)));
        cp.insert(HIDDEN_W, Tensor::f32(vec![self.dim, self.dim], narrow(&self.hidden_w)));
        cp.insert(HIDDEN_B, Tensor::f32(vec![self.dim], narrow(&self.hidden_b)));
        cp.insert(OUTPUT_W, Tensor::f32(vec![self.dim, self.vocab], narrow(&self.output_w)));
        cp.insert(OUTPUT_B, Tensor::f32(vec![self.vocab], narrow(&self.output_b)));
        cp.metadata = metadata;
        ToyModel { checkpoint: cp }
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.embedding,
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.output_w,
            &mut self.output_b,
        ]
    }

    fn fields(&self) -> [&Vec<f64>; 5] {
        [&self.embedding, &self.hidden_w, &self.hidden_b, &self.output_w, &self.output_b]
    }

    fn zero(&mut self) {
        for field in self.fields_mut() {
            field.fill(0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Forward/backward
// ---------------------------------------------------------------------------

/// Mean cross-entropy over the sentence's masked positions, each predicted
/// from the shared context vector (mean of unmasked embedding rows; the zero
/// vector when everything is masked). When `grad` is given, accumulates
/// `scale · ∂loss/∂θ` into it. Sentences with no masked positions contribute
/// zero loss and zero gradient.
pub fn masked_loss_grad(
    params: &ToyParams,
    sentence: &[u32],
    masked: &[bool],
    scale: f64,
    grad: Option<&mut ToyParams>,
) -> f64 {
    assert_eq!(sentence.len(), masked.len(), "one mask flag per position");
    let (dim, vocab) = (params.dim, params.vocab);

    let mut context = vec![0.0f64; dim];
    let mut unmasked = 0usize;
    for (&id, &is_masked) in sentence.iter().zip(masked) {
        if !is_masked {
            let row = &params.embedding[id as usize * dim..(id as usize + 1) * dim];
            for (c, &r) in context.iter_mut().zip(row) {
                *c += r;
            }
            unmasked += 1;
        }
    }
    if unmasked > 0 {
        for c in context.iter_mut() {
            *c /= unmasked as f64;
        }
    }

    let mut hidden = vec![0.0f64; dim];
    for d in 0..dim {
        let row = &params.hidden_w[d * dim..(d + 1) * dim];
        let a: f64 = params.hidden_b[d] + row.iter().zip(&context).map(|(&w, &c)| w * c).sum::<f64>();
        hidden[d] = a.tanh();
    }

    let m = masked.iter().filter(|&&f| f).count();
    if m == 0 {
        return 0.0;
    }
    let inv_m = 1.0 / m as f64;

    let mut logits = vec![0.0f64; vocab];
    let mut probs = vec![0.0f64; vocab];
    let mut grad_hidden = vec![0.0f64; dim];
    let mut loss = 0.0f64;
    let mut grad = grad;
    for (pos, &target) in sentence.iter().enumerate() {
        if !masked[pos] {
            continue;
        }
        for (j, logit) in logits.iter_mut().enumerate() {
            *logit = params.output_b[j];
        }
        for d in 0..dim {
            let h = hidden[d];
            let row = &params.output_w[d * vocab..(d + 1) * vocab];
            for (logit, &w) in logits.iter_mut().zip(row) {
                *logit += w * h;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        loss += (lse - logits[target as usize]) * inv_m;

        if let Some(grad) = grad.as_deref_mut() {
            for (p, &z) in probs.iter_mut().zip(&logits) {
                *p = (z - lse).exp();
            }
            probs[target as usize] -= 1.0; // now ∂loss_pos/∂z
            let w = scale * inv_m;
            for (gb, &dz) in grad.output_b.iter_mut().zip(&probs) {
                *gb += w * dz;
            }
            for d in 0..dim {
                let row = &params.output_w[d * vocab..(d + 1) * vocab];
                let grow = &mut grad.output_w[d * vocab..(d + 1) * vocab];
                let h = hidden[d];
                let mut gh = 0.0;
                for ((g, &dz), &wout) in grow.iter_mut().zip(&probs).zip(row) {
                    *g += w * dz * h;
                    gh += wout * dz;
                }
                grad_hidden[d] += inv_m * gh;
            }
        }
    }

    if let Some(grad) = grad {
        let mut grad_context = vec![0.0f64; dim];
        for d in 0..dim {
            let ga = grad_hidden[d] * (1.0 - hidden[d] * hidden[d]);
            grad.hidden_b[d] += scale * ga;
            let row = &params.hidden_w[d * dim..(d + 1) * dim];
            let grow = &mut grad.hidden_w[d * dim..(d + 1) * dim];
            for ((g, &c), (&wh, gc)) in
                grow.iter_mut().zip(&context).zip(row.iter().zip(grad_context.iter_mut()))
            {
                *g += scale * ga * c;
                *gc += ga * wh;
            }
        }
        if unmasked > 0 {
            let w = scale / unmasked as f64;
            for (&id, &is_masked) in sentence.iter().zip(masked) {
                if !is_masked {
                    let grow = &mut grad.embedding[id as usize * dim..(id as usize + 1) * dim];
                    for (g, &gc) in grow.iter_mut().zip(&grad_context) {
                        *g += w * gc;
                    }
                }
            }
        }
    }
    loss
}

// ---------------------------------------------------------------------------
// Masking probabilities
// ---------------------------------------------------------------------------

/// Masking probability for the neutral tokens of a sentence containing
/// `n_special` target/attribute tokens, chosen so the expected number of
/// masked tokens stays at `window · base` no matter how aggressively the
/// special tokens are masked:
///
///   q = (window·base − n_special·pref) / (window − n_special)
///
/// clamped to [0, 1]. If clamping would shift the per-sentence expectation
/// by more than 1%, the configuration is rejected instead.
pub fn neutral_mask_prob(base: f64, pref: f64, window: usize, n_special: usize) -> Result<f64> {
    assert!(n_special <= window);
    let target = window as f64 * base;
    let q = if n_special == window {
        0.0
    } else {
        ((target - n_special as f64 * pref) / (window - n_special) as f64).clamp(0.0, 1.0)
    };
    let expected = n_special as f64 * pref + (window - n_special) as f64 * q;
    if (expected - target).abs() > 0.01 * target {
        return Err(Error::InvalidConfig {
            reason: format!(
                "pref_mask_prob {pref} forces {expected:.4} expected masked tokens per \
                 sentence (window {window}, {n_special} special) but base_mask_prob {base} \
                 implies {target:.4}; the constant-average rule cannot hold"
            ),
        });
    }
    Ok(q)
}

/// Per-position masking probabilities for one sentence: `pref_mask_prob` on
/// target/attribute tokens, the adjusted neutral probability elsewhere.
pub fn position_mask_probs(
    vocab: &ToyVocab,
    sentence: &[u32],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let n_special =
        sentence.iter().filter(|&&id| vocab.role(id).is_special()).count();
    let q = neutral_mask_prob(cfg.base_mask_prob, cfg.pref_mask_prob, sentence.len(), n_special)?;
    Ok(sentence
        .iter()
        .map(|&id| if vocab.role(id).is_special() { cfg.pref_mask_prob } else { q })
        .collect())
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub base_mask_prob: f64,
    pub pref_mask_prob: f64,
    pub seed: u64,
    /// Trailing share of sentences held out for evaluation, never trained on.
    pub eval_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 32,
            lr: 1.0,
            base_mask_prob: 0.15,
            pref_mask_prob: 0.3,
            seed: 0,
            eval_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidConfig { reason: "batch must be ≥ 1".into() });
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!("learning rate {} must be finite and ≥ 0", self.lr),
            });
        }
        for (name, p) in [
            ("base_mask_prob", self.base_mask_prob),
            ("pref_mask_prob", self.pref_mask_prob),
            ("eval_fraction", self.eval_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} {p} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Deterministic mini-batch SGD on the masked-token objective. Returns the
/// trained model and its leave-one-out loss on the held-out split.
pub fn train(
    model: &ToyModel,
    corpus: &ToyCorpus,
    vocab: &ToyVocab,
    cfg: &TrainConfig,
) -> Result<(ToyModel, f64)> {
    train_masked(model, corpus, vocab, cfg, None)
}

/// [`train`] with an optional pruning mask: masked-out coordinates are
/// zeroed at the start and their gradients suppressed, so they stay exactly
/// 0.0 through any number of steps.
pub(crate) fn train_masked(
    model: &ToyModel,
    corpus: &ToyCorpus,
    vocab: &ToyVocab,
    cfg: &TrainConfig,
    mask: Option<&MaskSet>,
) -> Result<(ToyModel, f64)> {
    cfg.validate()?;
    if model.vocab_size() != vocab.len() {
        return Err(Error::InvalidConfig {
            reason: format!(
                "model vocab {} does not match vocabulary size {}",
                model.vocab_size(),
                vocab.len()
            ),
        });
    }
    let n = corpus.sentences.len();
    let n_eval = (cfg.eval_fraction * n as f64).floor() as usize;
    let n_train = n - n_eval;
    if n_train == 0 || n_eval == 0 {
        return Err(Error::InvalidConfig {
            reason: format!(
                "corpus of {n} sentences with eval_fraction {} leaves {n_train} train / \
                 {n_eval} eval sentences; both splits must be non-empty",
                cfg.eval_fraction
            ),
        });
    }
    // Surfaces an infeasible pref/base combination before any training.
    let probs: Vec<Vec<f64>> = corpus
        .sentences
        .iter()
        .map(|s| position_mask_probs(vocab, s, cfg))
        .collect::<Result<_>>()?;

    let mask_bits: Option<Vec<Option<Vec<u8>>>> = match mask {
        None => None,
        Some(mask) => {
            mask.check_layout(model.checkpoint())?;
            mask.check_parent(model.checkpoint())?;
            Some(
                tensor_names()
                    .iter()
                    .map(|name| mask.get(name).map(|t| t.as_u8().expect("masks are U8").to_vec()))
                    .collect(),
            )
        }
    };

    let mut params = ToyParams::from_model(model);
    let mut grad = ToyParams::zeros(params.vocab, params.dim);
    if let Some(bits) = &mask_bits {
        freeze(&mut params, bits);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut masked = Vec::new();
    for step in 0..cfg.steps {
        grad.zero();
        let mut batch_loss = 0.0;
        let scale = 1.0 / cfg.batch as f64;
        for k in 0..cfg.batch {
            let idx = (step * cfg.batch + k) % n_train;
            masked.clear();
            masked.extend(probs[idx].iter().map(|&p| rng.gen::<f64>() < p));
            batch_loss += scale
                * masked_loss_grad(
                    &params,
                    &corpus.sentences[idx],
                    &masked,
                    scale,
                    Some(&mut grad),
                );
        }
        if !batch_loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        if let Some(bits) = &mask_bits {
            freeze(&mut grad, bits);
        }
        if cfg.lr != 0.0 {
            for (param, g) in params.fields_mut().into_iter().zip(grad.fields()) {
                for (p, &gv) in param.iter_mut().zip(g.iter()) {
                    *p -= cfg.lr * gv;
                }
            }
        }
    }

    let eval_loss = leave_one_out_eval(&params, &corpus.sentences[n_train..])?;
    Ok((params.into_model(model.checkpoint().metadata.clone()), eval_loss))
}

fn freeze(params: &mut ToyParams, bits: &[Option<Vec<u8>>]) {
    for (field, bits) in params.fields_mut().into_iter().zip(bits) {
        if let Some(bits) = bits {
            for (value, &bit) in field.iter_mut().zip(bits) {
                if bit == 0 {
                    *value = 0.0;
                }
            }
        }
    }
}

/// Deterministic evaluation: every position of every sentence is masked one
/// at a time and predicted from the rest; the result is the mean
/// cross-entropy over all positions. No randomness is involved, so full and
/// pruned models are compared on identical footing.
pub fn leave_one_out_eval(params: &ToyParams, sentences: &[Vec<u32>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::InvalidConfig { reason: "empty evaluation split".into() });
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut masked = Vec::new();
    for sentence in sentences {
        masked.clear();
        masked.resize(sentence.len(), false);
        for pos in 0..sentence.len() {
            masked[pos] = true;
            total += masked_loss_grad(params, sentence, &masked, 0.0, None);
            masked[pos] = false;
            count += 1;
        }
    }
    let mean = total / count as f64;
    if !mean.is_finite() {
        return Err(Error::InvalidLoss { value: mean, context: "leave-one-out evaluation".into() });
    }
    Ok(mean)
}

// ---------------------------------------------------------------------------
// Embedding extraction
// ---------------------------------------------------------------------------

/// Per-word vectors for the model's two representation layers: layer 0 is
/// the word's embedding row, layer 1 its hidden-layer image tanh(W·e + b).
pub fn extract_embeddings(
    model: &ToyModel,
    vocab: &ToyVocab,
    words: &[String],
) -> Result<EmbeddingTable> {
    if model.vocab_size() != vocab.len() {
        return Err(Error::InvalidConfig {
            reason: format!(
                "model vocab {} does not match vocabulary size {}",
                model.vocab_size(),
                vocab.len()
            ),
        });
    }
    let params = ToyParams::from_model(model);
    let dim = params.dim;
    let mut table = EmbeddingTable::new(2, dim);
    for word in words {
        let id = vocab.id(word)? as usize;
        let layer0 = params.embedding[id * dim..(id + 1) * dim].to_vec();
        let layer1: Vec<f64> = (0..dim)
            .map(|d| {
                let row = &params.hidden_w[d * dim..(d + 1) * dim];
                (params.hidden_b[d]
                    + row.iter().zip(&layer0).map(|(&w, &e)| w * e).sum::<f64>())
                .tanh()
            })
            .collect();
        table.insert(word.clone(), vec![layer0, layer1])?;
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
