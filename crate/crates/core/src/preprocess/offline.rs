use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::online::align_delay;
use super::DriveSample;
use crate::error::{Error, Result};
use crate::offline::RegressionSample;
use crate::table::nearest_index;

/// Trailing mean of the `window` samples before each position.
///
/// `out[k] = mean(series[k..k + window])`, i.e. the filtered value at time
/// index `k + window`. The result has `len - window + 1` entries; the last one
/// belongs to the instant just after the series ends.
pub fn mean_filter(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidParameter("mean filter window must be >= 1".into()));
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    Ok(series
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect())
}

/// Keeps samples with `|theta| < delta_steer`.
pub fn steering_gate(samples: &[DriveSample], delta_steer: f64) -> Vec<DriveSample> {
    samples
        .iter()
        .filter(|s| s.theta.abs() < delta_steer)
        .copied()
        .collect()
}

/// Drops values more than one (population) standard deviation from the mean.
///
/// Single pass over the input. Fewer than two values, or zero spread, pass
/// through unchanged.
pub fn remove_outliers(cell: &[f64]) -> Vec<f64> {
    keep_mask(cell)
        .into_iter()
        .zip(cell)
        .filter_map(|(keep, &x)| keep.then_some(x))
        .collect()
}

fn keep_mask(cell: &[f64]) -> Vec<bool> {
    let n = cell.len();
    if n < 2 {
        return vec![true; n];
    }
    let mean = cell.iter().sum::<f64>() / n as f64;
    let var = cell.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![true; n];
    }
    cell.iter().map(|x| (x - mean).abs() / std <= 1.0).collect()
}

/// Samples grouped by nearest `(cmd, v)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBins {
    speed_grid: Vec<f64>,
    cmd_grid: Vec<f64>,
    /// `[cmd][speed]`, row-major.
    cells: Vec<Vec<RegressionSample>>,
}

impl GridBins {
    pub fn speed_grid(&self) -> &[f64] {
        &self.speed_grid
    }

    pub fn cmd_grid(&self) -> &[f64] {
        &self.cmd_grid
    }

    pub fn cell(&self, cmd_index: usize, speed_index: usize) -> &[RegressionSample] {
        &self.cells[cmd_index * self.speed_grid.len() + speed_index]
    }

    /// Sample count per cell, `[cmd][speed]` row-major.
    pub fn counts(&self) -> Vec<usize> {
        self.cells.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All retained samples in cell order.
    pub fn samples(&self) -> Vec<RegressionSample> {
        self.cells.iter().flatten().copied().collect()
    }

    /// Bounds of a cell: halfway to the neighbours, open-ended at the edges.
    pub fn cell_bounds(&self, cmd_index: usize, speed_index: usize) -> ((f64, f64), (f64, f64)) {
        fn bounds(grid: &[f64], i: usize) -> (f64, f64) {
            let lo = if i == 0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (grid[i - 1] + grid[i])
            };
            let hi = if i + 1 == grid.len() {
                f64::INFINITY
            } else {
                0.5 * (grid[i] + grid[i + 1])
            };
            (lo, hi)
        }
        (bounds(&self.cmd_grid, cmd_index), bounds(&self.speed_grid, speed_index))
    }
}

/// Bins samples to their nearest grid cell, caps each cell at `cap` samples
/// by seeded uniform subsampling, then removes outliers per cell.
pub fn bin_and_uniform(
    samples: &[RegressionSample],
    speed_grid: &[f64],
    cmd_grid: &[f64],
    cap: usize,
    seed: u64,
) -> Result<GridBins> {
    if cap == 0 {
        return Err(Error::InvalidParameter("cell cap must be >= 1".into()));
    }
    let nv = speed_grid.len();
    let mut cells = vec![Vec::new(); cmd_grid.len() * nv];
    for s in samples {
        let i = nearest_index(cmd_grid, s.cmd);
        let j = nearest_index(speed_grid, s.v);
        cells[i * nv + j].push(*s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for cell in &mut cells {
        if cell.len() > cap {
            let mut keep = index::sample(&mut rng, cell.len(), cap).into_vec();
            keep.sort_unstable();
            *cell = keep.into_iter().map(|k| cell[k]).collect();
        }
        let accs: Vec<f64> = cell.iter().map(|s| s.acc).collect();
        let mask = keep_mask(&accs);
        let mut it = mask.iter();
        cell.retain(|_| *it.next().expect("mask length"));
    }

    Ok(GridBins {
        speed_grid: speed_grid.to_vec(),
        cmd_grid: cmd_grid.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflinePreprocessConfig {
    /// Mean filter window (samples).
    pub mean_window: usize,
    /// Steering wheel angle threshold, degrees.
    pub delta_steer: f64,
    /// Maximum samples kept per grid cell.
    pub cell_cap: usize,
    /// Actuator delay, s. Each acceleration frame is paired with the
    /// command issued this much earlier.
    pub acc_delay: f64,
    /// Frames slower than this are dropped like turns, m/s.
    pub min_speed: f64,
}

impl Default for OfflinePreprocessConfig {
    fn default() -> Self {
        Self {
            mean_window: 5,
            delta_steer: 10.0,
            cell_cap: 60,
            acc_delay: 0.2,
            min_speed: 0.05,
        }
    }
}

/// Full offline cleaning: steering and standstill gates, delay alignment,
/// mean filter, binning.
///
/// The mean filter runs over each contiguous stretch that survives the
/// gates, so the window never spans a removed turn or stop. Each sample
/// pairs an acceleration frame with that frame's speed and the command issued
/// `acc_delay` earlier; all three series are filtered to stay time-aligned.
pub fn prepare_offline(
    log: &[DriveSample],
    cfg: &OfflinePreprocessConfig,
    speed_grid: &[f64],
    cmd_grid: &[f64],
    seed: u64,
) -> Result<GridBins> {
    let kept: Vec<DriveSample> = steering_gate(log, cfg.delta_steer)
        .into_iter()
        .filter(|s| s.v >= cfg.min_speed)
        .collect();
    let mut triples = Vec::with_capacity(kept.len());
    for segment in contiguous_segments(&kept) {
        let imu: Vec<(f64, f64)> = segment.iter().map(|s| (s.t, s.acc)).collect();
        let cmds: Vec<(f64, f64)> = segment.iter().map(|s| (s.t, s.cmd)).collect();
        let pairs = align_delay(&cmds, &imu, cfg.acc_delay)?;
        if pairs.len() <= cfg.mean_window {
            continue;
        }
        let speeds: Vec<f64> = pairs
            .iter()
            .map(|p| segment[segment.partition_point(|s| s.t < p.t_acc - 1e-9)].v)
            .collect();
        let cmd = mean_filter(&pairs.iter().map(|p| p.cmd).collect::<Vec<_>>(), cfg.mean_window)?;
        let v = mean_filter(&speeds, cfg.mean_window)?;
        let acc = mean_filter(&pairs.iter().map(|p| p.acc).collect::<Vec<_>>(), cfg.mean_window)?;
        // out[k] is the filtered value at index k + window; the final entry
        // has no sample to attach to.
        for k in 0..pairs.len() - cfg.mean_window {
            triples.push(RegressionSample {
                cmd: cmd[k],
                v: v[k],
                acc: acc[k],
            });
        }
    }
    bin_and_uniform(&triples, speed_grid, cmd_grid, cfg.cell_cap, seed)
}

/// Splits at gaps longer than 1.5 nominal sample periods.
fn contiguous_segments(samples: &[DriveSample]) -> Vec<&[DriveSample]> {
    if samples.len() < 2 {
        return vec![samples];
    }
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let nominal = dts[dts.len() / 2];
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..samples.len() {
        if samples[k].t - samples[k - 1].t > 1.5 * nominal {
            out.push(&samples[start..k]);
            start = k;
        }
    }
    out.push(&samples[start..]);
    out
}
