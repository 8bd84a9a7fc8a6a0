use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::butterworth::ButterworthLowpass;
use super::DriveMode;
use crate::error::{Error, Result};
use crate::table::CalibrationTable;

/// Timestamp slack for matching frames on a fixed-rate clock.
const TIME_EPS: f64 = 1e-6;

/// A command frame paired with the sensor frame nearest `t + delay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub t: f64,
    pub cmd: f64,
    pub t_acc: f64,
    pub acc: f64,
}

/// Nearest-neighbour lookup into a timestamped sensor stream.
#[derive(Debug, Clone, Copy)]
pub struct DelayAligner<'a> {
    imu: &'a [(f64, f64)],
    delay: f64,
}

impl<'a> DelayAligner<'a> {
    pub fn new(imu: &'a [(f64, f64)], delay: f64) -> Result<Self> {
        if !(delay >= 0.0) {
            return Err(Error::InvalidParameter(format!("delay must be >= 0, got {delay}")));
        }
        Ok(Self { imu, delay })
    }

    /// Sensor frame nearest `t + delay`; `NoMatch` past the end of the log.
    pub fn pair_at(&self, t: f64, cmd: f64) -> Result<AlignedPair> {
        let target = t + self.delay;
        let last = self.imu.last().ok_or(Error::NoMatch { t })?;
        if target > last.0 + TIME_EPS {
            return Err(Error::NoMatch { t });
        }
        let hi = self.imu.partition_point(|&(ti, _)| ti < target);
        let k = if hi == 0 {
            0
        } else if hi == self.imu.len() || target - self.imu[hi - 1].0 <= self.imu[hi].0 - target {
            hi - 1
        } else {
            hi
        };
        let (t_acc, acc) = self.imu[k];
        Ok(AlignedPair { t, cmd, t_acc, acc })
    }
}

/// Pairs every command frame that has a sensor frame `delay` seconds later.
///
/// Frames in the last `delay` seconds of the log have no partner and are
/// dropped.
pub fn align_delay(
    cmd_stream: &[(f64, f64)],
    imu_stream: &[(f64, f64)],
    delay: f64,
) -> Result<Vec<AlignedPair>> {
    let aligner = DelayAligner::new(imu_stream, delay)?;
    Ok(cmd_stream
        .iter()
        .map_while(|&(t, cmd)| aligner.pair_at(t, cmd).ok())
        .collect())
}

fn nearest_frame(history: &[(f64, f64)], t: f64) -> Option<usize> {
    if history.is_empty() {
        return None;
    }
    let hi = history.partition_point(|&(ti, _)| ti < t);
    Some(if hi == 0 {
        0
    } else if hi == history.len() || t - history[hi - 1].0 <= history[hi].0 - t {
        hi - 1
    } else {
        hi
    })
}

/// True iff every command within `window` seconds of `t_ref` stays strictly
/// within `delta_cmd_gap` of the command at `t_ref`.
pub fn command_consistency_gate(
    cmd_history: &[(f64, f64)],
    t_ref: f64,
    delta_cmd_gap: f64,
    window: f64,
) -> Result<bool> {
    let from = t_ref - window;
    let to = t_ref + window;
    let covered = match (cmd_history.first(), cmd_history.last()) {
        (Some(first), Some(last)) => first.0 <= from + TIME_EPS && last.0 >= to - TIME_EPS,
        _ => false,
    };
    if !covered {
        return Err(Error::InsufficientHistory { from, to });
    }
    let k = nearest_frame(cmd_history, t_ref).expect("non-empty history");
    let cmd_ref = cmd_history[k].1;
    Ok(cmd_history
        .iter()
        .filter(|(t, _)| *t >= from - TIME_EPS && *t <= to + TIME_EPS)
        .all(|(_, c)| (c - cmd_ref).abs() < delta_cmd_gap))
}

/// `(v_ref - v_k) * (a_ref - a_k) > 0`: the speed error and the acceleration
/// error point the same way.
pub fn speed_acc_consistency_gate(v_ref: f64, v_k: f64, a_ref: f64, a_k: f64) -> bool {
    (v_ref - v_k) * (a_ref - a_k) > 0.0
}

/// One control-cycle input to the feedback pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackFrame {
    pub t: f64,
    /// Command issued this cycle, %.
    pub cmd: f64,
    /// Measured speed, m/s.
    pub v: f64,
    /// Raw IMU acceleration, m/s².
    pub acc: f64,
    pub theta: f64,
    pub mode: DriveMode,
    /// Reference (desired) speed this cycle, m/s.
    pub v_desired: f64,
}

/// Feedback that passed every gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineFeedback {
    /// Time of the measurement, s.
    pub t: f64,
    /// Command issued one delay earlier, %.
    pub cmd_ref: f64,
    /// Speed when that command was issued, m/s.
    pub v_ref: f64,
    /// Acceleration the current table expects for `(cmd_ref, v_ref)`.
    pub acc_ref: f64,
    /// Low-passed measured acceleration now.
    pub acc_k: f64,
    /// Measured speed now.
    pub v_k: f64,
    /// Desired speed now.
    pub v_desired: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rejection {
    NotAuto,
    Steering,
    /// Not enough history yet to look back one delay plus the window.
    Warmup,
    CommandUnsteady,
    SpeedAccInconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOutcome {
    Accepted(OnlineFeedback),
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub sample_rate: f64,
    /// Actuator delay estimate, s.
    pub delay: f64,
    /// Half-width of the command consistency window, s.
    pub window: f64,
    /// Maximum command deviation inside the window, %.
    pub delta_cmd_gap: f64,
    /// Steering wheel angle threshold, degrees.
    pub delta_steer: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            sample_rate: 100.0,
            delay: 0.2,
            window: 0.1,
            delta_cmd_gap: 10.0,
            delta_steer: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct HistoryEntry {
    t: f64,
    cmd: f64,
    v: f64,
    theta: f64,
    mode: DriveMode,
}

/// Streaming version of the online preprocessing chain.
///
/// Owns one Butterworth state for the IMU stream; frames must arrive in time
/// order, one per control cycle.
#[derive(Debug, Clone)]
pub struct FeedbackPipeline {
    cfg: FeedbackConfig,
    lowpass: ButterworthLowpass,
    history: VecDeque<HistoryEntry>,
    scratch: Vec<(f64, f64)>,
}

impl FeedbackPipeline {
    pub fn new(cfg: FeedbackConfig) -> Result<Self> {
        let lowpass = ButterworthLowpass::new(cfg.sample_rate)?;
        if !(cfg.delay >= 0.0 && cfg.window >= 0.0) {
            return Err(Error::InvalidParameter("delay and window must be >= 0".into()));
        }
        Ok(Self {
            cfg,
            lowpass,
            history: VecDeque::new(),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &FeedbackConfig {
        &self.cfg
    }

    /// Clears history and filter state (e.g. between driving sessions).
    pub fn reset(&mut self) {
        self.lowpass.reset();
        self.history.clear();
    }

    /// Feeds one cycle; `table` supplies the expected acceleration.
    pub fn push(&mut self, frame: FeedbackFrame, table: &CalibrationTable) -> GateOutcome {
        let acc_k = self.lowpass.filter(frame.acc);
        self.history.push_back(HistoryEntry {
            t: frame.t,
            cmd: frame.cmd,
            v: frame.v,
            theta: frame.theta,
            mode: frame.mode,
        });
        let horizon = self.cfg.delay + self.cfg.window + 2.0 / self.cfg.sample_rate;
        while self
            .history
            .front()
            .is_some_and(|h| h.t < frame.t - horizon)
        {
            self.history.pop_front();
        }

        if frame.mode != DriveMode::Auto {
            return GateOutcome::Rejected(Rejection::NotAuto);
        }
        if frame.theta.abs() >= self.cfg.delta_steer {
            return GateOutcome::Rejected(Rejection::Steering);
        }

        let t_ref = frame.t - self.cfg.delay;
        self.scratch.clear();
        self.scratch.extend(self.history.iter().map(|h| (h.t, h.cmd)));
        let steady = match command_consistency_gate(
            &self.scratch,
            t_ref,
            self.cfg.delta_cmd_gap,
            self.cfg.window,
        ) {
            Ok(steady) => steady,
            Err(_) => return GateOutcome::Rejected(Rejection::Warmup),
        };
        let k = nearest_frame(&self.scratch, t_ref).expect("history covers t_ref");
        let issued = self.history[k];
        if issued.mode != DriveMode::Auto {
            return GateOutcome::Rejected(Rejection::NotAuto);
        }
        if issued.theta.abs() >= self.cfg.delta_steer {
            return GateOutcome::Rejected(Rejection::Steering);
        }
        if !steady {
            return GateOutcome::Rejected(Rejection::CommandUnsteady);
        }

        let acc_ref = table.lookup_acc(issued.cmd, issued.v);
        if !speed_acc_consistency_gate(frame.v_desired, frame.v, acc_ref, acc_k) {
            return GateOutcome::Rejected(Rejection::SpeedAccInconsistent);
        }
        GateOutcome::Accepted(OnlineFeedback {
            t: frame.t,
            cmd_ref: issued.cmd,
            v_ref: issued.v,
            acc_ref,
            acc_k,
            v_k: frame.v,
            v_desired: frame.v_desired,
        })
    }
}
