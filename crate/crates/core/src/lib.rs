//! Quantum metric learning with triplet loss, trained and evaluated on a
//! classical statevector simulator.
//!
//! The pipeline embeds classical feature vectors into quantum states through a
//! data-reuploading circuit, reads out pairwise state overlaps with a
//! Hadamard-test construction that holds anchor, positive and negative in one
//! superposed register, and trains the circuit parameters with parameter-shift
//! gradients on a triplet hinge loss. Adversarial feature perturbations
//! harden the learned metric.

pub mod adversarial;
pub mod data;
pub mod encoding;
pub mod error;
pub mod gradient;
pub mod model;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
