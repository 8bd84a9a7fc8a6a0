//! Per-cycle online adaptation of the calibration table.
//!
//! Each accepted feedback sample yields a gain `acc_ref - acc_k`. Every cell
//! then moves by `sigma * gain / (1 + cost)`, where the cost grows with the
//! cell's distance from the feedback point and with the agreement between
//! the frozen initial table and the measured acceleration. The result is
//! projected back to monotone and published as a whole.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{GateOutcome, OnlineFeedback, Rejection};
use crate::table::{CalibrationTable, InverseTableView};

/// Which window condition puts a cell inside the full-update neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuRule {
    /// Near in command or near in speed.
    Either,
    /// Near in command and near in speed.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub alpha: f64,
    pub beta: f64,
    pub m_cmd: u32,
    pub m_v: u32,
    pub xi: f64,
    pub epsilon: f64,
    pub iota: f64,
    pub sigma: f64,
    /// Half-width of the command window, %.
    pub delta_cmd: f64,
    /// Half-width of the speed window, m/s.
    pub delta_v: f64,
    /// Speed error at or below which no update happens, m/s.
    pub gamma_v: f64,
    /// Command differences are divided by this before weighting, %.
    pub cmd_scale: f64,
    /// Speed differences are divided by this before weighting, m/s.
    pub speed_scale: f64,
    pub mu_rule: MuRule,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            m_cmd: 2,
            m_v: 2,
            xi: 1e-8,
            epsilon: 1.0,
            iota: 1.0,
            sigma: 0.05,
            delta_cmd: 5.0,
            delta_v: 0.2,
            gamma_v: 0.05,
            cmd_scale: 1.0,
            speed_scale: 1.0,
            mu_rule: MuRule::Both,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("xi", self.xi),
            ("epsilon", self.epsilon),
            ("iota", self.iota),
            ("sigma", self.sigma),
            ("delta_cmd", self.delta_cmd),
            ("delta_v", self.delta_v),
            ("gamma_v", self.gamma_v),
            ("cmd_scale", self.cmd_scale),
            ("speed_scale", self.speed_scale),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
            }
        }
        if self.sigma > 1.0 {
            return Err(Error::InvalidParameter(format!("sigma must be <= 1, got {}", self.sigma)));
        }
        for (name, m) in [("m_cmd", self.m_cmd), ("m_v", self.m_v)] {
            if m == 0 || m % 2 != 0 {
                return Err(Error::InvalidParameter(format!("{name} must be a positive even integer, got {m}")));
            }
        }
        Ok(())
    }
}

/// True when tracking is already good enough to skip the update.
pub fn converge_check(v_ref: f64, v_actual: f64, gamma_v: f64) -> bool {
    (v_ref - v_actual).abs() <= gamma_v
}

/// Expected minus measured acceleration.
pub fn compute_gain(acc_ref: f64, acc_k: f64) -> f64 {
    acc_ref - acc_k
}

/// 1 inside the update window around the feedback point, else 0.
pub fn mu(d_cmd: f64, d_v: f64, cfg: &OnlineConfig) -> f64 {
    let near_cmd = d_cmd.abs() <= cfg.delta_cmd;
    let near_v = d_v.abs() <= cfg.delta_v;
    let inside = match cfg.mu_rule {
        MuRule::Either => near_cmd || near_v,
        MuRule::Both => near_cmd && near_v,
    };
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Distance term for a cell offset `(d_cmd, d_v)` from the feedback point.
pub fn distance(d_cmd: f64, d_v: f64, cfg: &OnlineConfig) -> f64 {
    let c = d_cmd / cfg.cmd_scale;
    let v = d_v / cfg.speed_scale;
    (1.0 - mu(d_cmd, d_v, cfg))
        * (cfg.alpha * c.powi(cfg.m_cmd as i32) + cfg.beta * v.powi(cfg.m_v as i32) + cfg.xi)
}

/// Similarity term between a cell's initial value and the measured acceleration.
pub fn similarity(init_acc: f64, acc_k: f64, cfg: &OnlineConfig) -> f64 {
    cfg.epsilon * (-cfg.iota * (init_acc - acc_k).abs()).exp()
}

/// Cost of updating the cell at `(cmd, v)` with initial value `init_acc`.
pub fn cell_cost(cmd: f64, v: f64, init_acc: f64, fb: &OnlineFeedback, cfg: &OnlineConfig) -> f64 {
    distance(cmd - fb.cmd_ref, v - fb.v_ref, cfg) * similarity(init_acc, fb.acc_k, cfg)
}

/// Step size for one cell; carries the sign of `gain`.
pub fn cell_step(gain: f64, cost: f64, sigma: f64) -> f64 {
    gain * sigma / (1.0 + cost)
}

/// One adaptation step. The step is subtracted: a positive gain means the
/// vehicle accelerated less than the table predicted, so the table's
/// accelerations come down.
///
/// Returns the projected table and the number of cells whose value changed.
pub fn update_table(
    current: &CalibrationTable,
    init: &CalibrationTable,
    fb: &OnlineFeedback,
    cfg: &OnlineConfig,
) -> Result<(CalibrationTable, usize)> {
    let gain = compute_gain(fb.acc_ref, fb.acc_k);
    let speeds = current.speed_grid();
    let mut acc = current.values().to_vec();
    for (i, &c) in current.cmd_grid().iter().enumerate() {
        for (j, &v) in speeds.iter().enumerate() {
            let k = i * speeds.len() + j;
            let cost = cell_cost(c, v, init.values()[k], fb, cfg);
            acc[k] -= cell_step(gain, cost, cfg.sigma);
        }
    }
    let updated = current.with_values(acc)?.project_monotone();
    let changed = updated
        .values()
        .iter()
        .zip(current.values())
        .filter(|(a, b)| a != b)
        .count();
    Ok((updated, changed))
}

/// A published table together with its inverse view.
#[derive(Debug)]
pub struct TableSnapshot {
    pub revision: u64,
    pub table: CalibrationTable,
    pub inverse: InverseTableView,
}

/// Single-writer, many-reader holder of the controller-visible table.
#[derive(Debug)]
pub struct TablePublisher {
    current: ArcSwap<TableSnapshot>,
}

impl TablePublisher {
    pub fn new(table: CalibrationTable) -> Result<Self> {
        let inverse = table.invert()?;
        Ok(Self {
            current: ArcSwap::from_pointee(TableSnapshot {
                revision: 0,
                table,
                inverse,
            }),
        })
    }

    pub fn load(&self) -> Arc<TableSnapshot> {
        self.current.load_full()
    }

    pub fn revision(&self) -> u64 {
        self.current.load().revision
    }

    /// Replaces the table; readers see it from their next `load`.
    pub fn publish(&self, table: CalibrationTable) -> Result<u64> {
        let inverse = table.invert()?;
        let revision = self.current.load().revision + 1;
        self.current.store(Arc::new(TableSnapshot {
            revision,
            table,
            inverse,
        }));
        Ok(revision)
    }
}

/// What happened in one control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleOutcome {
    Rejected(Rejection),
    Converged,
    Updated(SessionRecord),
}

/// One row of the online session log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub cycle: u64,
    pub t: f64,
    pub cmd_ref: f64,
    pub v_ref: f64,
    pub acc_ref: f64,
    pub acc_k: f64,
    pub gain: f64,
    pub updated_cells: usize,
    pub revision: u64,
}

/// Online calibration state: the frozen initial table, the publisher and
/// the cycle counter.
#[derive(Debug)]
pub struct OnlineCalibrator {
    cfg: OnlineConfig,
    init_table: Arc<CalibrationTable>,
    publisher: Arc<TablePublisher>,
    cycle: u64,
    last_step: Option<Duration>,
}

impl OnlineCalibrator {
    pub fn new(initial: CalibrationTable, cfg: OnlineConfig) -> Result<Self> {
        Self::resume(initial.clone(), initial, cfg)
    }

    /// Starts from `current` while costs keep referring to `init`.
    pub fn resume(init: CalibrationTable, current: CalibrationTable, cfg: OnlineConfig) -> Result<Self> {
        cfg.validate()?;
        if init.speed_grid() != current.speed_grid() || init.cmd_grid() != current.cmd_grid() {
            return Err(Error::InvalidTable("initial and current tables use different grids".into()));
        }
        Ok(Self {
            cfg,
            init_table: Arc::new(init),
            publisher: Arc::new(TablePublisher::new(current)?),
            cycle: 0,
            last_step: None,
        })
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.cfg
    }

    pub fn init_table(&self) -> &CalibrationTable {
        &self.init_table
    }

    pub fn publisher(&self) -> Arc<TablePublisher> {
        Arc::clone(&self.publisher)
    }

    pub fn current(&self) -> Arc<TableSnapshot> {
        self.publisher.load()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Wall time of the last update plus publish, if the last cycle updated.
    pub fn last_step_time(&self) -> Option<Duration> {
        self.last_step
    }

    /// Runs one control cycle on the gate outcome. The cycle counter
    /// advances whether or not the table changes.
    pub fn step(&mut self, outcome: &GateOutcome) -> Result<CycleOutcome> {
        self.cycle += 1;
        self.last_step = None;
        let fb = match outcome {
            GateOutcome::Rejected(r) => return Ok(CycleOutcome::Rejected(*r)),
            GateOutcome::Accepted(fb) => fb,
        };
        if converge_check(fb.v_desired, fb.v_k, self.cfg.gamma_v) {
            return Ok(CycleOutcome::Converged);
        }
        let start = Instant::now();
        let current = self.publisher.load();
        let (table, updated_cells) = update_table(&current.table, &self.init_table, fb, &self.cfg)?;
        let revision = self.publisher.publish(table)?;
        self.last_step = Some(start.elapsed());
        Ok(CycleOutcome::Updated(SessionRecord {
            cycle: self.cycle,
            t: fb.t,
            cmd_ref: fb.cmd_ref,
            v_ref: fb.v_ref,
            acc_ref: fb.acc_ref,
            acc_k: fb.acc_k,
            gain: compute_gain(fb.acc_ref, fb.acc_k),
            updated_cells,
            revision,
        }))
    }
}

/// Writes `cycle,t,cmd_ref,v_ref,acc_ref,acc_k,gain,updated_cells,revision` CSV.
pub fn write_session_log(writer: impl Write, records: &[SessionRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<session log>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_units() -> OnlineConfig {
        OnlineConfig::default()
    }

    fn feedback(cmd_ref: f64, v_ref: f64, acc_ref: f64, acc_k: f64) -> OnlineFeedback {
        OnlineFeedback {
            t: 1.0,
            cmd_ref,
            v_ref,
            acc_ref,
            acc_k,
            v_k: v_ref,
            v_desired: v_ref + 0.5,
        }
    }

    fn table() -> CalibrationTable {
        CalibrationTable::from_fn(
            vec![0.0, 0.5, 1.0, 1.5, 2.0],
            (-4..=4).map(|i| i as f64 * 25.0).collect(),
            |c, v| c / 50.0 - 0.1 * v,
        )
        .unwrap()
    }

    #[test]
    fn converge_check_examples() {
        assert!(converge_check(1.0, 1.0, 0.05));
        assert!(converge_check(1.0, 1.05, 0.05 + 1e-15));
        assert!(converge_check(1.0, 1.0625, 0.0625));
        assert!(!converge_check(1.0, 1.06, 0.05));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(compute_gain(0.7, 0.7), 0.0);
        assert!((compute_gain(1.0, 0.4) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cost_examples() {
        let cfg = raw_units();
        let fb = feedback(20.0, 1.0, 0.5, 0.3);
        // Inside both windows, init equals the measurement.
        assert_eq!(cell_cost(20.0, 1.0, 0.3, &fb, &cfg), 0.0);
        // Offsets of 10 % and 1 m/s, outside both windows.
        let far = cell_cost(30.0, 2.0, 0.3, &fb, &cfg);
        assert!((far - (100.0 + 1.0 + 1e-8) * cfg.epsilon).abs() < 1e-9);
        let cfg_eps = OnlineConfig { epsilon: 0.5, ..raw_units() };
        assert!((cell_cost(30.0, 2.0, 0.3, &fb, &cfg_eps) - (101.0 + 1e-8) * 0.5).abs() < 1e-9);
    }

    #[test]
    fn mu_rules() {
        let either = OnlineConfig { mu_rule: MuRule::Either, ..OnlineConfig::default() };
        assert_eq!(mu(50.0, 0.1, &either), 1.0);
        assert_eq!(mu(2.0, 1.0, &either), 1.0);
        assert_eq!(mu(50.0, 1.0, &either), 0.0);
        let both = OnlineConfig { mu_rule: MuRule::Both, ..either };
        assert_eq!(mu(50.0, 0.1, &both), 0.0);
        assert_eq!(mu(5.0, 0.2, &both), 1.0);
    }

    #[test]
    fn similarity_bounds() {
        let cfg = OnlineConfig { epsilon: 2.0, ..OnlineConfig::default() };
        assert_eq!(similarity(0.3, 0.3, &cfg), 2.0);
        assert!(similarity(0.3, 1.3, &cfg) < 2.0);
        assert!(similarity(100.0, -100.0, &cfg) < 1e-80);
    }

    #[test]
    fn validation() {
        assert!(OnlineConfig::default().validate().is_ok());
        assert!(OnlineConfig { m_cmd: 3, ..Default::default() }.validate().is_err());
        assert!(OnlineConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(OnlineConfig { sigma: 1.5, ..Default::default() }.validate().is_err());
        assert!(OnlineConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_gain_is_fixed_point() {
        let t = table();
        let (u, changed) = update_table(&t, &t, &feedback(25.0, 1.0, 0.4, 0.4), &OnlineConfig::default()).unwrap();
        assert_eq!(u, t);
        assert_eq!(changed, 0);
    }

    #[test]
    fn positive_gain_lowers_every_cell() {
        let t = table();
        let cfg = OnlineConfig { mu_rule: MuRule::Both, ..OnlineConfig::default() };
        let fb = feedback(25.0, 1.0, 0.5, 0.1);
        let (u, changed) = update_table(&t, &t, &fb, &cfg).unwrap();
        assert_eq!(changed, t.n_cells());
        // The feedback cell has zero cost and moves by exactly sigma * gain.
        let (i, j) = (5, 2);
        assert!((t.get(i, j) - u.get(i, j) - 0.05 * 0.4).abs() < 1e-12);
        for (a, b) in u.values().iter().zip(t.values()) {
            assert!(a < b);
        }
    }

    #[test]
    fn init_table_is_never_touched() {
        let init = table();
        let before = init.values().to_vec();
        let mut cal = OnlineCalibrator::new(init, OnlineConfig::default()).unwrap();
        for k in 0..50 {
            let fb = feedback(25.0, 1.0, 0.5, 0.1 + 0.01 * k as f64);
            assert!(matches!(cal.step(&GateOutcome::Accepted(fb)).unwrap(), CycleOutcome::Updated(_)));
        }
        assert_eq!(cal.cycle(), 50);
        assert_eq!(cal.current().revision, 50);
        let after: Vec<u64> = cal.init_table().values().iter().map(|x| x.to_bits()).collect();
        assert_eq!(after, before.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_ne!(cal.current().table.values(), &before[..]);
    }

    #[test]
    fn cycle_counter_advances_on_skips() {
        let mut cal = OnlineCalibrator::new(table(), OnlineConfig::default()).unwrap();
        let out = cal.step(&GateOutcome::Rejected(Rejection::Warmup)).unwrap();
        assert_eq!(out, CycleOutcome::Rejected(Rejection::Warmup));
        let converged = OnlineFeedback { v_desired: 1.0, v_k: 1.02, ..feedback(25.0, 1.0, 0.5, 0.1) };
        assert_eq!(cal.step(&GateOutcome::Accepted(converged)).unwrap(), CycleOutcome::Converged);
        assert_eq!(cal.cycle(), 2);
        assert_eq!(cal.current().revision, 0);
        assert!(cal.last_step_time().is_none());
    }

    #[test]
    fn session_log_header() {
        let rec = SessionRecord {
            cycle: 3,
            t: 0.03,
            cmd_ref: 20.0,
            v_ref: 1.0,
            acc_ref: 0.5,
            acc_k: 0.4,
            gain: 0.1,
            updated_cells: 656,
            revision: 1,
        };
        let mut buf = Vec::new();
        write_session_log(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cycle,t,cmd_ref,v_ref,acc_ref,acc_k,gain,updated_cells,revision\n"));
    }

    #[test]
    fn concurrent_readers_see_whole_tables() {
        // Every published table is constant-valued with its revision, so a
        // torn read would show mixed values or a mismatched revision.
        let speeds = vec![0.0, 1.0, 2.0];
        let cmds = vec![-100.0, 0.0, 100.0];
        let constant = |r: u64| CalibrationTable::from_fn(speeds.clone(), cmds.clone(), |_, _| r as f64).unwrap();
        let publisher = Arc::new(TablePublisher::new(constant(0)).unwrap());
        let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let p = Arc::clone(&publisher);
                let done = Arc::clone(&done);
                std::thread::spawn(move || {
                    let mut last = 0;
                    let mut reads = 0u64;
                    while !done.load(std::sync::atomic::Ordering::Relaxed) || reads == 0 {
                        let snap = p.load();
                        assert!(snap.revision >= last, "revision went backwards");
                        last = snap.revision;
                        let expected = snap.revision as f64;
                        assert!(snap.table.values().iter().all(|&a| a == expected));
                        assert_eq!(snap.inverse.lookup_cmd(1.0, expected - 1.0), -100.0);
                        reads += 1;
                    }
                })
            })
            .collect();
        for r in 1..=2000 {
            assert_eq!(publisher.publish(constant(r)).unwrap(), r);
        }
        done.store(true, std::sync::atomic::Ordering::Relaxed);
        for h in readers {
            h.join().unwrap();
        }
        assert_eq!(publisher.revision(), 2000);
    }

    proptest! {
        #[test]
        fn step_bounded_by_sigma_gain(
            cmd_ref in -100.0f64..100.0,
            v_ref in 0.0f64..2.0,
            acc_ref in -3.0f64..3.0,
            acc_k in -3.0f64..3.0,
            sigma in 0.01f64..1.0,
            both in any::<bool>(),
        ) {
            let cfg = OnlineConfig {
                sigma,
                mu_rule: if both { MuRule::Both } else { MuRule::Either },
                ..OnlineConfig::default()
            };
            let t = table();
            let fb = feedback(cmd_ref, v_ref, acc_ref, acc_k);
            let gain = compute_gain(acc_ref, acc_k);
            for (i, &c) in t.cmd_grid().iter().enumerate() {
                for (j, &v) in t.speed_grid().iter().enumerate() {
                    let cost = cell_cost(c, v, t.get(i, j), &fb, &cfg);
                    let step = cell_step(gain, cost, sigma);
                    prop_assert!(cost >= 0.0);
                    prop_assert!(step.abs() <= sigma * gain.abs() + 1e-15);
                    prop_assert!(step * gain >= 0.0);
                    if mu(c - cmd_ref, v - v_ref, &cfg) == 1.0 {
                        prop_assert_eq!(step, gain * sigma);
                    }
                }
            }
            let (u, _) = update_table(&t, &t, &fb, &cfg).unwrap();
            prop_assert!(u.is_monotone());
            prop_assert!(u.values().iter().all(|a| a.is_finite()));
        }
    }
}
