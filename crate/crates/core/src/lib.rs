//! Longitudinal calibration tables for autonomous vehicles.
//!
//! A calibration table maps a signed pedal command (brake negative, throttle
//! positive) and the current speed to the acceleration the vehicle achieves.
//! The controller uses the inverse view, desired acceleration and speed to
//! command, as its feedforward term.
//!
//! The crate covers the whole loop:
//!
//! - [`table`]: storage, bilinear lookup, inversion, isotonic projection and
//!   the text file format.
//! - [`preprocess`]: offline log cleaning (mean filter, steering gate,
//!   per-cell outlier removal, grid binning) and the online feedback pipeline
//!   (delay alignment, Butterworth low-pass, consistency gates).
//! - [`offline`]: sigmoid MLP trained with Adam, a linear baseline, k-fold
//!   cross-validation and table construction.
//! - [`online`]: per-cycle table adaptation with distance and similarity
//!   weighted cell updates and atomic table publication.
//! - [`simulator`]: a ground-truth longitudinal plant, a scripted human
//!   driver for log generation and a closed-loop tracking harness.
//! - [`cli`]: experiment configs, run manifests and the subcommands behind
//!   the `longcal` binary.

pub mod cli;
pub mod error;
pub mod isotonic;
pub mod offline;
pub mod online;
pub mod preprocess;
pub mod simulator;
pub mod table;

pub use error::{Error, Result};
pub use table::{CalibrationTable, InverseTableView};
