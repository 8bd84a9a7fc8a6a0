//! Data cleaning for offline training and online feedback.
//!
//! Offline logs go through [`steering_gate`], [`mean_filter`] and then
//! [`bin_and_uniform`], which applies [`remove_outliers`] per grid cell.
//! Online frames go through [`FeedbackPipeline`]: mode and steering gate,
//! delay alignment, Butterworth low-pass, command consistency and
//! speed/acceleration consistency.

mod butterworth;
mod offline;
mod online;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use butterworth::{butterworth_lowpass, ButterworthLowpass, CUTOFF_HZ, ORDER};
pub use offline::{
    bin_and_uniform, mean_filter, prepare_offline, remove_outliers, steering_gate, GridBins,
    OfflinePreprocessConfig,
};
pub use online::{
    align_delay, command_consistency_gate, speed_acc_consistency_gate, AlignedPair, DelayAligner,
    FeedbackConfig, FeedbackFrame, FeedbackPipeline, GateOutcome, OnlineFeedback, Rejection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriveMode {
    #[serde(rename = "MANUAL")]
    Manual,
    #[serde(rename = "AUTO")]
    Auto,
}

/// One log frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSample {
    /// Seconds.
    pub t: f64,
    /// Signed pedal command, %.
    pub cmd: f64,
    /// Speed, m/s.
    pub v: f64,
    /// IMU longitudinal acceleration, m/s².
    pub acc: f64,
    /// Steering wheel angle, degrees.
    pub theta: f64,
    pub mode: DriveMode,
}

fn validate_log(samples: &[DriveSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if ![s.t, s.cmd, s.v, s.acc, s.theta].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidLog(format!("row {}: non-finite field", i + 1)));
        }
        if s.v < 0.0 {
            return Err(Error::InvalidLog(format!("row {}: negative speed", i + 1)));
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(Error::InvalidLog(format!(
                "row {}: timestamp {} not after {}",
                i + 1,
                s.t,
                samples[i - 1].t
            )));
        }
    }
    Ok(())
}

/// Reads `t,cmd,v,acc,theta,mode` CSV.
pub fn read_drive_log(reader: impl Read) -> Result<Vec<DriveSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let samples = rdr.deserialize().collect::<Result<Vec<DriveSample>, _>>()?;
    validate_log(&samples)?;
    Ok(samples)
}

pub fn read_drive_log_file(path: &Path) -> Result<Vec<DriveSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_drive_log(std::io::BufReader::new(file))
}

pub fn write_drive_log(writer: impl Write, samples: &[DriveSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in samples {
        wtr.serialize(s)?;
    }
    wtr.flush().map_err(|e| Error::io("<drive log>", e))?;
    Ok(())
}
