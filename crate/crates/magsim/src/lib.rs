//! Stochastic Gaussian-state simulator for a two-cell radio-frequency
//! atomic magnetometer.
//!
//! The library models the collective atomic spin quadratures of two
//! oppositely pumped vapor cells and the stroboscopic light pulses that
//! probe them, as a multimode Gaussian state.  It reproduces
//! projection-noise-limited magnetometry, measurement-induced spin
//! entanglement between the cells, and the sensitivity improvement the
//! entanglement buys, along with the calibration and mode-matching
//! machinery needed to compare either against experiment.

pub mod config;
pub mod dsp;
pub mod estimation;
pub mod gaussian;
pub mod modes;
pub mod output;
pub mod physics;
pub mod protocol;
pub mod run;

pub use gaussian::{AffineChannel, GaussianError, QuadratureState, VACUUM_VAR};
pub use modes::ModeLabel;
