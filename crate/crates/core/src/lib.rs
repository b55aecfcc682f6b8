//! Streaming STFT phase reconstruction from magnitude.
//!
//! Phase is recovered in two stages: phase differences along time and
//! frequency are estimated (from the magnitude analytically, by a small
//! convolutional network, or taken from a reference), then integrated either
//! by weighted least squares over complex coefficients or by heap
//! integration.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod formats;
pub mod grid;
pub mod metrics;
pub mod nn;
pub mod pghi;
pub mod phasediff;
pub mod pipeline;
pub mod spectral;
pub mod wav;
pub mod wls;

pub use error::{Error, FormatError, Result};
pub use grid::TfGrid;
pub use spectral::{istft, stft, Spectrogram, StftConfig, StftProcessor, WindowKind};
