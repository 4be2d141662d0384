//! Quantum state diffusion simulator for driven rf-SQUIDs, with the
//! analysis pipeline (uncertainty product, stroboscopic sections, maximal
//! Lyapunov exponent) and a resumable parameter-sweep harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod circuit;
pub mod config;
pub mod error;
pub mod exec;
pub mod fock;
pub mod lindblad;
pub mod lyapunov;
pub mod noise;
pub mod observables;
pub mod qsd;
pub mod sweep;
pub mod validation;

pub use error::{Error, Result};
