use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plant::{Plant, PlantConfig};
use crate::preprocess::{DriveMode, DriveSample};
use crate::table::nearest_index;

/// Scripted manual driver: holds a random pedal position for a random
/// dwell, switching pedals to keep the speed inside `[0, v_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverScript {
    pub duration: f64,
    pub dwell_min: f64,
    pub dwell_max: f64,
    /// Fraction of segments driven through a turn.
    pub turn_fraction: f64,
    /// Steering wheel angle in turns, degrees.
    pub turn_angle: f64,
    /// Steering jitter on straights, degrees.
    pub straight_jitter: f64,
}

impl Default for DriverScript {
    fn default() -> Self {
        Self {
            duration: 1200.0,
            dwell_min: 1.0,
            dwell_max: 4.0,
            turn_fraction: 0.05,
            turn_angle: 25.0,
            straight_jitter: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriveLog {
    pub samples: Vec<DriveSample>,
    /// Samples per grid cell, `[cmd][speed]` row-major.
    pub cell_counts: Vec<usize>,
}

impl DriveLog {
    /// Fraction of grid cells with at least one sample.
    pub fn coverage(&self) -> f64 {
        let hit = self.cell_counts.iter().filter(|&&c| c > 0).count();
        hit as f64 / self.cell_counts.len() as f64
    }
}

/// Per-cell sample counts of a log, nearest-cell assignment.
pub fn cell_counts(samples: &[DriveSample], speed_grid: &[f64], cmd_grid: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; speed_grid.len() * cmd_grid.len()];
    for s in samples {
        counts[nearest_index(cmd_grid, s.cmd) * speed_grid.len() + nearest_index(speed_grid, s.v)] += 1;
    }
    counts
}

/// Drives the plant with the script and logs every control period.
pub fn generate_drive_log(
    plant_cfg: &PlantConfig,
    script: &DriverScript,
    speed_grid: &[f64],
    cmd_grid: &[f64],
    seed: u64,
) -> DriveLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plant = Plant::new(plant_cfg.clone(), seed.wrapping_add(1));
    let dt = plant_cfg.dt();
    let n = (script.duration * plant_cfg.sample_rate).round() as usize;
    let v_hi = plant_cfg.v_max * 0.97;

    let mut cmd = 0.0;
    let mut theta_center = 0.0;
    let mut dwell_left = 0.0;
    let mut acc_meas = 0.0;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let v = plant.speed();
        let too_fast = v > v_hi && cmd > 0.0;
        let stuck = v <= 0.0 && cmd <= 0.0 && dwell_left < script.dwell_max - 0.5;
        if dwell_left <= 0.0 || too_fast || stuck {
            cmd = if too_fast {
                -rng.random_range(1.0..=100.0)
            } else if stuck {
                rng.random_range(1.0..=100.0)
            } else {
                rng.random_range(-100.0..=100.0)
            };
            cmd = (cmd * 2.0f64).round() / 2.0;
            dwell_left = rng.random_range(script.dwell_min..=script.dwell_max);
            theta_center = if rng.random_bool(script.turn_fraction) {
                script.turn_angle * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                0.0
            };
        }
        dwell_left -= dt;
        let theta = theta_center + script.straight_jitter * (rng.random::<f64>() * 2.0 - 1.0);
        samples.push(DriveSample {
            t,
            cmd,
            v,
            acc: acc_meas,
            theta,
            mode: DriveMode::Manual,
        });
        let a = plant.step(cmd, dt);
        acc_meas = plant.measure_acc(a);
    }
    let cell_counts = cell_counts(&samples, speed_grid, cmd_grid);
    DriveLog {
        samples,
        cell_counts,
    }
}
