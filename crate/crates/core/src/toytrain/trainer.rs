//! Adapter packaging toy training as the fine-tune/evaluate pair that
//! iterative magnitude pruning drives.

use crate::error::{Error, Result};
use crate::store::{Checkpoint, MaskSet};
use crate::subnetwork::TrainerInterface;

use super::corpus::ToyCorpus;
use super::model::{leave_one_out_eval, train_masked, ToyModel, ToyParams, TrainConfig};
use super::vocab::ToyVocab;

/// Owns a corpus, vocabulary and training configuration; each `fine_tune`
/// call replays the same deterministic SGD schedule (the mask and step count
/// come from the pruning loop), and `evaluate` scores any layout-compatible
/// checkpoint on the fixed held-out split.
#[derive(Debug, Clone)]
pub struct ToyTrainer {
    vocab: ToyVocab,
    corpus: ToyCorpus,
    cfg: TrainConfig,
}

impl ToyTrainer {
    pub fn new(vocab: ToyVocab, corpus: ToyCorpus, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(&id) = corpus.sentences.iter().flatten().max() {
            if id as usize >= vocab.len() {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "corpus references token id {id} but the vocabulary has {} tokens",
                        vocab.len()
                    ),
                });
            }
        }
        Ok(ToyTrainer { vocab, corpus, cfg })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn eval_split(&self) -> Result<&[Vec<u32>]> {
        let n = self.corpus.sentences.len();
        let n_eval = (self.cfg.eval_fraction * n as f64).floor() as usize;
        if n_eval == 0 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "corpus of {n} sentences with eval_fraction {} has no held-out sentences",
                    self.cfg.eval_fraction
                ),
            });
        }
        Ok(&self.corpus.sentences[n - n_eval..])
    }
}

impl TrainerInterface for ToyTrainer {
    fn fine_tune(&self, start: &Checkpoint, mask: &MaskSet, steps: usize) -> Result<Checkpoint> {
        let model = ToyModel::from_checkpoint(start.clone())?;
        let cfg = TrainConfig { steps, ..self.cfg };
        let (trained, _) = train_masked(&model, &self.corpus, &self.vocab, &cfg, Some(mask))?;
        Ok(trained.into_checkpoint())
    }

    fn evaluate(&self, ckpt: &Checkpoint) -> Result<f64> {
        let model = ToyModel::from_checkpoint(ckpt.clone())?;
        let params = ToyParams::from_model(&model);
        leave_one_out_eval(&params, self.eval_split()?)
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::super::corpus::{generate_corpus, Direction};
    use super::super::model::{train, EMBEDDING};
    use super::super::vocab::tiny_vocab;
    use super::*;
    use crate::store::{apply_mask, Tensor};
    use crate::subnetwork::{run_imp, PruningConfig, RateMode};

    fn setup() -> (ToyTrainer, ToyModel) {
        let vocab = tiny_vocab();
        let corpus = generate_corpus(&vocab, Direction::Stereo, 60, 0.25, 5, 2).unwrap();
        let cfg = TrainConfig { steps: 20, batch: 8, lr: 0.2, ..TrainConfig::default() };
        let model = ToyModel::init(vocab.len(), 4, 3).unwrap();
        (ToyTrainer::new(vocab, corpus, cfg).unwrap(), model)
    }

    #[test]
    fn all_ones_mask_matches_unmasked_training() {
        let (trainer, model) = setup();
        let mut ones = MaskSet::new();
        for (name, tensor) in &model.checkpoint().tensors {
            ones.insert(name.clone(), Tensor::u8(tensor.shape().to_vec(), vec![1; tensor.element_count()]))
                .unwrap();
        }
        let via_trainer = trainer.fine_tune(model.checkpoint(), &ones, 20).unwrap();
        let (direct, _) =
            train(&model, &trainer.corpus, &trainer.vocab, &trainer.cfg).unwrap();
        assert_eq!(via_trainer.to_bytes(), direct.checkpoint().to_bytes());
    }

    #[test]
    fn pruned_coordinates_stay_exactly_zero() {
        let (trainer, model) = setup();
        let emb = model.checkpoint().get(EMBEDDING).unwrap();
        let count = emb.element_count();
        let bits: Vec<u8> = (0..count).map(|i| (i % 3 != 0) as u8).collect();
        let mut mask = MaskSet::new();
        mask.insert(EMBEDDING, Tensor::u8(emb.shape().to_vec(), bits.clone())).unwrap();

        let start = apply_mask(model.checkpoint(), &mask).unwrap();
        let trained = trainer.fine_tune(&start, &mask, 40).unwrap();
        let values = trained.f32_values(EMBEDDING).unwrap();
        for (i, (&v, &bit)) in values.iter().zip(&bits).enumerate() {
            if bit == 0 {
                assert_eq!(v.to_bits(), 0.0f32.to_bits(), "coordinate {i} must stay +0.0");
            } else {
                assert_ne!(v, 0.0, "unpruned coordinate {i} should have moved");
            }
        }
    }

    #[test]
    fn evaluate_is_deterministic_and_sane() {
        let (trainer, model) = setup();
        let a = trainer.evaluate(model.checkpoint()).unwrap();
        let b = trainer.evaluate(model.checkpoint()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        // Untrained loss should sit near ln(vocab) for a near-uniform model.
        assert!(a > 0.0 && a < 2.0 * (12.0f64).ln(), "loss {a}");
    }

    #[test]
    fn drives_imp_end_to_end() {
        let (trainer, model) = setup();
        let cfg = PruningConfig {
            rate_per_round: 0.3,
            rate_mode: RateMode::OfRemaining,
            rounds: 2,
            excluded_groups: vec![],
            steps_per_round: 10,
        };
        let records = run_imp(&trainer, model.checkpoint(), &cfg).unwrap();
        assert_eq!(records.len(), 2);
        // Counts floor per round: 128 prunable → 38 then 27 more.
        assert!((records[0].sparsity - 38.0 / 128.0).abs() < 1e-12);
        assert!((records[1].sparsity - 65.0 / 128.0).abs() < 1e-12);
        for record in &records {
            assert!(record.subnet_eval.is_finite() && record.full_eval.is_finite());
            record.mask.check_layout(model.checkpoint()).unwrap();
        }
    }
}
