//! Dense `f64` linear algebra and the seeded random source used everywhere else.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::{Distribution, Rng};
