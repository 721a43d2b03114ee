//! Population-based batched black-box optimization over fixed-length
//! discrete sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`seq`] — vocabularies, sequences, distances and the shared observation archive.
//! * [`oracles`] — in-silico objective functions (Ising, profile HMM, random
//!   networks, enumerable lookup tables) and the problem-instance file format.
//! * [`solvers`] — constituent optimizers behind a common `fit`/`propose` interface.
//! * [`engine`] — the ensemble loop: batch construction with attribution,
//!   relative-improvement rewards, decayed credit and softmax selection.
//! * [`adaptive`] — online evolution of the population's hyperparameters.
//! * [`metrics`] — sample-efficiency, diversity and optima-discovery measures.
//! * [`harness`] — experiment configs, problem generators, result emission.

pub mod adaptive;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod seq;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use seq::{ObservationStore, Sequence, Vocabulary};
