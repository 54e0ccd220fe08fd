//! Multiwavelet time-varying ARX identification and time-frequency
//! conditional Granger causality.

pub mod error;
pub mod grid;
pub mod image;
pub mod multiwavelet;
pub mod tfcgc;
pub mod tvarx;

pub use error::{CoreError, Result};
