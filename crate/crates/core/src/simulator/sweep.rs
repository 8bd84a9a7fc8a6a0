use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::closed_loop::{run_closed_loop, ClosedLoopConfig, ClosedLoopRun, Feedforward};
use super::plant::PlantConfig;
use crate::error::Result;
use crate::online::{OnlineCalibrator, OnlineConfig};
use crate::table::CalibrationTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Cargo loads, kg, in driving order.
    pub loads: Vec<f64>,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            loads: vec![0.0, 150.0, 300.0, 360.0],
            rounds: 3,
            seed: 0,
        }
    }
}

/// Noise seed of one `(load, round)` job; shared by online and frozen runs.
pub fn job_seed(seed: u64, load_index: usize, round: usize) -> u64 {
    seed.wrapping_mul(1_000_003)
        .wrapping_add((load_index as u64) << 16)
        .wrapping_add(round as u64)
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub load: f64,
    pub round: usize,
    pub online: bool,
    pub run: ClosedLoopRun,
}

/// Frozen-table runs: every `(load, round)` is independent and runs in
/// parallel.
pub fn sweep_frozen(
    plant: impl Fn(f64) -> PlantConfig + Sync,
    table: &CalibrationTable,
    loop_cfg: &ClosedLoopConfig,
    sweep: &SweepConfig,
) -> Result<Vec<SweepRun>> {
    let jobs: Vec<(usize, f64, usize)> = sweep
        .loads
        .iter()
        .enumerate()
        .flat_map(|(i, &load)| (0..sweep.rounds).map(move |r| (i, load, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, load, round)| {
            let run = run_closed_loop(&plant(load), job_seed(sweep.seed, i, round), Feedforward::Fixed(table), loop_cfg)?;
            Ok(SweepRun {
                load,
                round,
                online: false,
                run,
            })
        })
        .collect()
}

/// Online runs: one calibrator drives every load and round in order, so
/// each run starts from the table the previous one left behind.
pub fn sweep_online(
    plant: impl Fn(f64) -> PlantConfig,
    initial: &CalibrationTable,
    online_cfg: &OnlineConfig,
    loop_cfg: &ClosedLoopConfig,
    sweep: &SweepConfig,
) -> Result<Vec<SweepRun>> {
    let mut cal = OnlineCalibrator::new(initial.clone(), online_cfg.clone())?;
    let mut out = Vec::new();
    for (i, &load) in sweep.loads.iter().enumerate() {
        for round in 0..sweep.rounds {
            let run = run_closed_loop(&plant(load), job_seed(sweep.seed, i, round), Feedforward::Online(&mut cal), loop_cfg)?;
            out.push(SweepRun {
                load,
                round,
                online: true,
                run,
            });
        }
    }
    Ok(out)
}
