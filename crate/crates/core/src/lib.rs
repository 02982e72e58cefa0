//! Compression-based compressed sensing: structured lossy codes, Gaussian
//! measurements, codebook-search decoders and dimension estimators.

pub mod codecs;
pub mod csp;
pub mod dimensions;
pub mod error;
pub mod measurement;
pub mod quantization;
pub mod rng;
pub mod source_models;

pub use error::{Error, Result};
