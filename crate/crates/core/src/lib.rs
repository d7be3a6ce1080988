//! Localize and edit property-encoding weights of a model checkpoint.
//!
//! The crate works on pairs of checkpoints that share a layout: a *target*
//! whose behavior we want to change and a *reference* that differs from it
//! only in the property of interest (for gender bias, a model trained on a
//! counterfactually augmented corpus). The pipeline is:
//!
//! 1. [`store`] — read/write checkpoints and binary masks in a single-file
//!    tensor container.
//! 2. [`subnetwork`] — iterative magnitude pruning to find sparse subnetworks
//!    of both models.
//! 3. [`localize`] — compare the two subnetworks (or raw weights) to select
//!    the coordinates that encode the property.
//! 4. [`edit`] — move the target's selected coordinates toward (or past) the
//!    reference: interpolation, extrapolation, pruning, or mask switching.
//! 5. [`biaseval`] — measure the property before/after with WEAT-style
//!    association tests over embedding tables.
//!
//! Everything runs at desk scale: [`toytrain`] provides a deterministic toy
//! embedding model plus synthetic corpus generation ([`cda`] builds the
//! counterfactually augmented variants) so the full loop — train, prune,
//! localize, edit, evaluate — runs in seconds in a test suite.

pub mod biaseval;
pub mod cda;
pub mod edit;
pub mod error;
pub mod localize;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod subnetwork;
pub mod sweep;
pub mod toytrain;

pub use error::{Error, ErrorClass, Result};
