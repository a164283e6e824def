//! Sparse code multiple access (SCMA) link-level toolkit.
//!
//! * [`codebook`]: system dimensions, codewords, codebook sets and parameter vectors.
//! * [`structure`]: factor graphs and symbolic codebook templates.
//! * [`channel`]: AWGN and block Rayleigh fading.
//! * [`detector`]: message-passing detection and an exhaustive MAP oracle.
//! * [`metrics`]: distance/kissing-number KPIs and the mutual-information lower bound.
//! * [`montecarlo`]: reproducible, frame-parallel SER estimation.
//! * [`optimizer`]: differential evolution over template parameters.
//! * [`fixtures`]: published codebooks and factor matrices as embedded data.

pub mod channel;
pub mod codebook;
pub mod detector;
mod error;
pub mod fixtures;
pub mod format;
pub mod metrics;
pub mod montecarlo;
pub mod optimizer;
pub mod seed;
pub mod structure;

pub use error::{Error, Result};
pub use num_complex::Complex64;
