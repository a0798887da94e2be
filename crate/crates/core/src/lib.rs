//! Numerical experiments with plurisubharmonic functions on the unit ball of C^k (k = 1, 2).

pub mod calculus;
pub mod capacity;
pub mod envelope;
pub mod energy;
pub mod error;
pub mod fit;
pub mod gallery;
pub mod grid;
pub mod lebesgue;
pub mod majorant;
pub mod quadrature;
pub mod wstar;

pub use error::{LabError, Result};
