//! Dialogue learning driven by utterance-order self-supervision.
//!
//! The library is organized around the inconsistent-order-detection task:
//! [`corpus`] owns dialogue data and vocabularies, [`sampling`] produces
//! ordered/misordered utterance-pair triples, [`numerics`] supplies a small
//! reverse-mode autodiff engine with LSTM cells, [`ssn`] is the sampling-based
//! order-detection network, [`generator`] a seq2seq-with-attention responder,
//! [`adversarial`] the alternating min-max training loop and the simulated
//! experience filter, and [`evaluation`] the intrinsic/adversarial/diversity
//! evaluation protocols plus a synthetic oracle corpus.

pub mod adversarial;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod numerics;
pub mod rng;
pub mod sampling;
pub mod ssn;

pub use error::{Error, Result};
