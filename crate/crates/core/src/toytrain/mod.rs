//! Desk-scale training stand-in: synthetic biased corpora over a small
//! vocabulary, a one-hidden-layer masked-token model trained with plain SGD,
//! and embedding extraction for the bias evaluator.
//!
//! The pieces compose into the same shape as a full fine-tuning pipeline —
//! [`generate_corpus`] produces stereotypical/anti-stereotypical corpora that
//! differ only in swapped target tokens, [`train`] runs a deterministic
//! masked-token objective with preferential masking of target and attribute
//! tokens, and [`ToyTrainer`] adapts the pair for iterative magnitude
//! pruning — while keeping every run to seconds on one core.

mod corpus;
mod model;
mod trainer;
mod vocab;

pub use corpus::{categorize_sentence, generate_corpus, Direction, ToyCorpus};
pub use model::{
    extract_embeddings, leave_one_out_eval, masked_loss_grad, neutral_mask_prob,
    position_mask_probs, train, tensor_names, ToyModel, ToyParams, TrainConfig,
};
pub use trainer::ToyTrainer;
pub use vocab::{Role, ToyVocab};
