//! Context-aware neural chat translation with multi-task, multi-stage
//! training.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`optim`]: a small reverse-mode differentiation engine
//!   and the Adam optimiser.
//! * [`data`]: corpus records, BPE tokenisation, dialogue context windows and
//!   auxiliary-task sample construction.
//! * [`model`]: the flat context-aware encoder–decoder and its two binary
//!   classifier heads.
//! * [`train`]: loss composition, the three-stage schedule and checkpoints.
//! * [`infer`] and [`metrics`]: beam search, BLEU, TER and coherence.
//! * [`synthetic`] and [`experiment`]: toy corpora with planted context
//!   dependencies and end-to-end orchestration.

pub mod data;
pub mod error;
pub mod experiment;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
