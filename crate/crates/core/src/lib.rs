//! Contrastive estimation over instance bundles for question answering.
//!
//! * [`data`]: vocabulary, instances, bundles, tokenization and validation
//! * [`scorer`]: toy encoder-decoder and the LN / UN / GS compatibility scores
//! * [`losses`]: MLE, unlikelihood and the contrastive objectives
//! * [`bundling`]: question mining, contrast-question generation, top-k negatives
//! * [`inference`]: greedy decoding, candidate ranking, joint assignment
//! * [`metrics`]: EM, token F1, consistency and posterior diagnostics
//! * [`harness`]: synthetic data, Adam, training, evaluation and the CLI

pub mod bundling;
pub mod data;
pub mod error;
pub mod harness;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod scorer;

pub use error::{Error, Result};
