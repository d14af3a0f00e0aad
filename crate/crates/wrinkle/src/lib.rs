pub mod error;
pub mod experiments;
pub mod fft;
pub mod fvk;
pub mod cascade;
pub mod diagnostics;
pub mod grid;
pub mod repair;
pub mod sbp;
pub mod solver;
pub mod spectral;

pub use error::{Result, WrinkleError};
