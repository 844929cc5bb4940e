//! Deterministic federated-learning workbench built around SpectralKrum.

pub mod adversary;
pub mod aggregators;
pub mod error;
pub mod fedsim;
pub mod harness;
pub mod par;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
