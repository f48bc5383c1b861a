//! Joint dual training of a slot-value understanding model (utterance to
//! frame) and a sentence generation model (frame to utterance).
//!
//! The crate is organised bottom-up:
//!
//! * [`math`]: dense tensors, a reverse-mode gradient tape, the GRU cell,
//!   losses and Adam.
//! * [`data`]: E2E-style CSV ingestion, preprocessing, label space and
//!   vocabulary, batching.
//! * [`models`]: the generator, the understanding model, the RNN language
//!   model and the MADE frame estimator.
//! * [`coupling`]: straight-through and distribution-as-input joints.
//! * [`objectives`]: supervised losses, REINFORCE and the reward families.
//! * [`metrics`]: BLEU, ROUGE and micro-F1.
//! * [`trainer`]: primal and dual cycles, learning schemes, evaluation.
//! * [`cli`]: experiment configuration, orchestration and report export.

pub mod cli;
pub mod coupling;
pub mod data;
pub mod error;
pub mod math;
pub mod metrics;
pub mod models;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
