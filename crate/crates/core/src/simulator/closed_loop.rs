use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, TrackingMetrics};
use super::plant::{Plant, PlantConfig};
use super::profile::{ProfilePoint, SpeedProfile};
use crate::error::{Error, Result};
use crate::online::{CycleOutcome, OnlineCalibrator, SessionRecord};
use crate::preprocess::{DriveMode, FeedbackConfig, FeedbackFrame, FeedbackPipeline};
use crate::table::{nearest_index, CalibrationTable, InverseTableView};

/// Table feedforward plus PI on speed error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// %/(m/s).
    pub kp: f64,
    /// %/m.
    pub ki: f64,
    /// Look-ahead on the desired acceleration, s.
    pub preview: f64,
    /// Bound on the integral contribution, %.
    pub integral_limit: f64,
    /// Command held while the profile is stopped, %.
    pub hold_cmd: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.1,
            preview: 0.2,
            integral_limit: 20.0,
            hold_cmd: -20.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Controller {
    cfg: ControllerConfig,
    integral: f64,
}

impl Controller {
    fn command(&mut self, inverse: &InverseTableView, v: f64, now: ProfilePoint, ahead: ProfilePoint, dt: f64) -> f64 {
        if now.v <= 0.0 && ahead.v <= 0.0 {
            self.integral = 0.0;
            return self.cfg.hold_cmd;
        }
        let e = now.v - v;
        let bound = self.cfg.integral_limit / self.cfg.ki.max(f64::MIN_POSITIVE);
        self.integral = (self.integral + e * dt).clamp(-bound, bound);
        let ff = inverse.lookup_cmd(v, ahead.a);
        (ff + self.cfg.kp * e + self.cfg.ki * self.integral).clamp(-100.0, 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopConfig {
    /// s.
    pub duration: f64,
    pub controller: ControllerConfig,
    pub profile: SpeedProfile,
    pub feedback: FeedbackConfig,
    /// Speed error treated as divergence, m/s.
    pub diverge_limit: f64,
    /// How long the error must persist, s.
    pub diverge_window: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            duration: 900.0,
            controller: ControllerConfig::default(),
            profile: SpeedProfile::default(),
            feedback: FeedbackConfig::default(),
            diverge_limit: 5.0,
            diverge_window: 1.0,
        }
    }
}

/// Where the feedforward table comes from.
pub enum Feedforward<'a> {
    Fixed(&'a CalibrationTable),
    Online(&'a mut OnlineCalibrator),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub t: f64,
    pub v_des: f64,
    pub v: f64,
    pub a_des: f64,
    pub cmd: f64,
    /// True acceleration over the step into this frame.
    pub acc: f64,
    pub acc_meas: f64,
    pub speed_error: f64,
    pub station_error: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub trace: Vec<TraceFrame>,
    pub metrics: TrackingMetrics,
    /// Cycles that updated the table.
    pub session: Vec<SessionRecord>,
    /// Wall time of each update plus publish.
    pub step_times: Vec<Duration>,
    /// Updates per cell nearest to the feedback point, `[cmd][speed]`.
    pub visits: Vec<usize>,
    pub final_table: CalibrationTable,
}

impl ClosedLoopRun {
    pub fn step_time_percentile(&self, q: f64) -> Option<Duration> {
        percentile(&self.step_times, q)
    }
}

/// Nearest-rank percentile, `q` in `[0, 1]`.
pub fn percentile(samples: &[Duration], q: f64) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Tracks `cfg.profile` for `cfg.duration` seconds on a fresh plant.
///
/// With [`Feedforward::Online`] every cycle goes through the feedback
/// pipeline and the calibrator; the calibrator keeps the adapted table for
/// the next run.
pub fn run_closed_loop(
    plant_cfg: &PlantConfig,
    seed: u64,
    mut feedforward: Feedforward<'_>,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopRun> {
    plant_cfg.validate()?;
    cfg.profile.validate(plant_cfg.v_max)?;
    let dt = plant_cfg.dt();
    let n = (cfg.duration * plant_cfg.sample_rate).round() as usize;
    let mut plant = Plant::new(plant_cfg.clone(), seed);
    let mut controller = Controller {
        cfg: cfg.controller.clone(),
        integral: 0.0,
    };
    let fixed_inverse = match &feedforward {
        Feedforward::Fixed(t) => Some(t.invert()?),
        Feedforward::Online(_) => None,
    };
    let mut pipeline = FeedbackPipeline::new(FeedbackConfig {
        sample_rate: plant_cfg.sample_rate,
        ..cfg.feedback.clone()
    })?;

    let (speed_grid, cmd_grid) = match &feedforward {
        Feedforward::Fixed(t) => (t.speed_grid().to_vec(), t.cmd_grid().to_vec()),
        Feedforward::Online(c) => (c.init_table().speed_grid().to_vec(), c.init_table().cmd_grid().to_vec()),
    };
    let mut visits = vec![0; speed_grid.len() * cmd_grid.len()];
    let mut trace = Vec::with_capacity(n);
    let mut session = Vec::new();
    let mut step_times = Vec::new();
    let mut station_des = 0.0;
    let mut acc_meas = 0.0;
    let mut over_since: Option<f64> = None;

    for k in 0..n {
        let t = k as f64 * dt;
        let now = cfg.profile.at(t);
        let ahead = cfg.profile.at(t + cfg.controller.preview);
        let v = plant.speed();
        let speed_error = now.v - v;
        if speed_error.abs() > cfg.diverge_limit {
            let since = *over_since.get_or_insert(t);
            if t - since >= cfg.diverge_window - 1e-9 {
                return Err(Error::Diverged {
                    t,
                    limit: cfg.diverge_limit,
                    window: cfg.diverge_window,
                });
            }
        } else {
            over_since = None;
        }

        let cmd = match &mut feedforward {
            Feedforward::Fixed(_) => {
                let inv = fixed_inverse.as_ref().expect("fixed inverse");
                controller.command(inv, v, now, ahead, dt)
            }
            Feedforward::Online(cal) => {
                let snap = cal.current();
                let cmd = controller.command(&snap.inverse, v, now, ahead, dt);
                let frame = FeedbackFrame {
                    t,
                    cmd,
                    v,
                    acc: acc_meas,
                    theta: 0.0,
                    mode: DriveMode::Auto,
                    v_desired: now.v,
                };
                let outcome = pipeline.push(frame, &snap.table);
                if let CycleOutcome::Updated(rec) = cal.step(&outcome)? {
                    visits[nearest_index(&cmd_grid, rec.cmd_ref) * speed_grid.len() + nearest_index(&speed_grid, rec.v_ref)] += 1;
                    session.push(rec);
                    step_times.extend(cal.last_step_time());
                }
                cmd
            }
        };

        trace.push(TraceFrame {
            t,
            v_des: now.v,
            v,
            a_des: now.a,
            cmd,
            acc: plant.acceleration(),
            acc_meas,
            speed_error,
            station_error: station_des - plant.station(),
        });

        let a = plant.step(cmd, dt);
        acc_meas = plant.measure_acc(a);
        station_des += cfg.profile.at(t + dt).v * dt;
    }

    let final_table = match &feedforward {
        Feedforward::Fixed(t) => (*t).clone(),
        Feedforward::Online(c) => c.current().table.clone(),
    };
    Ok(ClosedLoopRun {
        metrics: compute_metrics(&trace)?,
        trace,
        session,
        step_times,
        visits,
        final_table,
    })
}
