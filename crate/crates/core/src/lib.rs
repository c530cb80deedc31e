//! Train single-shot detectors from random initialization.

pub mod backbone;
pub mod data;
pub mod detector;
pub mod error;
pub mod evalkit;
pub mod landscape;
pub mod nn;
pub mod run;
pub mod tensor;

pub use error::{Error, Result};
