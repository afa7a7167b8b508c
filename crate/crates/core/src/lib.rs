//! Domain-adversarial training for automatic modulation classification under
//! Rayleigh/Rician channel shift.
//!
//! The crate covers the whole laboratory: baseband signal simulation, feature
//! extraction, dataset preprocessing, a small dense network engine, baseline and
//! domain-adversarial models, training and metrics, t-SNE embeddings, and the
//! experiment runner behind the `dann-amc` binary.

pub mod domain;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod data;
pub mod features;
pub mod models;
pub mod nn;
pub mod signal;
pub mod train;

pub use domain::{Band, Direction, Domain, Modulation, NUM_CLASSES};
pub use error::{Error, Result};
