//! Block-wise low-bit weight quantization with balanced-rank and
//! offset-folding adapters.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense row-major matrices and a seeded RNG.
//! - [`quant`]: tile quantization, bit packing, dequantization.
//! - [`adapters`]: LoRA, balanced-rank (BaRA) and single-matrix (HiRA) adapters,
//!   plus their exact merges back into the frozen base.
//! - [`model`]: small networks of frozen quantized layers.
//! - [`training`]: losses, optimizers, synthetic tasks, training loops and
//!   diagnostics.
//! - [`persistence`]: binary formats and CSV output.

pub mod adapters;
pub mod error;
pub mod model;
pub mod numerics;
pub mod persistence;
pub mod quant;
pub mod training;

pub use error::{Error, Result};
