//! A desk-scale laboratory for adversarial transferability.
//!
//! The crate bundles a small reverse-mode differentiation core, a zoo of toy
//! image classifiers, seven iterative gradient attacks with their
//! transferability tricks (momentum initialisation, scheduled step sizes,
//! dual examples), spectral and spatial input transformations, ensemble
//! strategies, and an experiment harness that writes deterministic CSV.

pub mod attacks;
pub mod diffcore;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod modelzoo;
pub mod par;
pub mod transforms;

pub use error::{Error, Result};
