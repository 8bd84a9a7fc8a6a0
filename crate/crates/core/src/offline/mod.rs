//! Offline table learning from manual driving logs.
//!
//! Throttle and brake models are trained separately on the cleaned, binned
//! samples and then tabulated onto the calibration grid.

mod cv;
mod linear;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{prepare_offline, DriveSample, GridBins, OfflinePreprocessConfig};
use crate::table::CalibrationTable;

pub use cv::{cross_validate, cross_validate_with, fold_assignment, mae_rmse, CvReport, FoldMetrics, ModelKind};
pub use linear::{train_linear, LinearModel};
pub use mlp::{train_mlp, MlpHyper, MlpModel, MlpTraining, MIN_TRAINING_SAMPLES};

/// One training example in raw units: command %, speed m/s, acceleration m/s².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub cmd: f64,
    pub v: f64,
    pub acc: f64,
}

pub trait Regressor {
    fn predict(&self, cmd: f64, v: f64) -> f64;
}

impl<R: Regressor + ?Sized> Regressor for Box<R> {
    fn predict(&self, cmd: f64, v: f64) -> f64 {
        (**self).predict(cmd, v)
    }
}

impl<R: Regressor + ?Sized> Regressor for &R {
    fn predict(&self, cmd: f64, v: f64) -> f64 {
        (**self).predict(cmd, v)
    }
}

/// Splits into `(throttle, brake)` training sets.
///
/// Commands inside `±deadband` are dropped.
pub fn split_by_pedal(samples: &[RegressionSample], deadband: f64) -> (Vec<RegressionSample>, Vec<RegressionSample>) {
    let throttle = samples.iter().filter(|s| s.cmd > deadband).copied().collect();
    let brake = samples.iter().filter(|s| s.cmd < -deadband).copied().collect();
    (throttle, brake)
}

/// Throttle and brake models behind one predictor, chosen by command sign.
#[derive(Debug, Clone)]
pub struct PedalModels<R> {
    pub throttle: R,
    pub brake: R,
}

impl<R: Regressor> Regressor for PedalModels<R> {
    fn predict(&self, cmd: f64, v: f64) -> f64 {
        if cmd > 0.0 {
            self.throttle.predict(cmd, v)
        } else if cmd < 0.0 {
            self.brake.predict(cmd, v)
        } else {
            0.5 * (self.throttle.predict(0.0, v) + self.brake.predict(0.0, v))
        }
    }
}

/// Trains one model per pedal with `train`.
pub fn train_pedal_models<R>(
    samples: &[RegressionSample],
    train: impl Fn(&[RegressionSample]) -> Result<R>,
) -> Result<PedalModels<R>> {
    let (throttle, brake): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.cmd > 0.0);
    Ok(PedalModels {
        throttle: train(&throttle)?,
        brake: train(&brake)?,
    })
}

/// Tabulates the two models onto the grid and projects to monotone.
///
/// Positive commands use `throttle`, negative ones `brake`; the `cmd = 0`
/// row averages both models evaluated at zero command.
pub fn build_table(
    throttle: &dyn Regressor,
    brake: &dyn Regressor,
    speed_grid: &[f64],
    cmd_grid: &[f64],
) -> Result<CalibrationTable> {
    let models = PedalModels { throttle, brake };
    let table = CalibrationTable::from_fn(speed_grid.to_vec(), cmd_grid.to_vec(), |c, v| models.predict(c, v))?;
    Ok(table.project_monotone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    pub preprocess: OfflinePreprocessConfig,
    pub mlp: MlpHyper,
    /// Pedal deadband excluded from training, %.
    pub deadband: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            preprocess: OfflinePreprocessConfig::default(),
            mlp: MlpHyper::default(),
            deadband: 2.0,
            folds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineModels {
    pub bins: GridBins,
    pub throttle_samples: Vec<RegressionSample>,
    pub brake_samples: Vec<RegressionSample>,
    pub throttle: MlpTraining,
    pub brake: MlpTraining,
    pub table: CalibrationTable,
}

/// Cleans a manual-driving log, trains both pedal models and tabulates them.
pub fn train_offline(
    log: &[DriveSample],
    cfg: &OfflineConfig,
    speed_grid: &[f64],
    cmd_grid: &[f64],
) -> Result<OfflineModels> {
    let bins = prepare_offline(log, &cfg.preprocess, speed_grid, cmd_grid, cfg.seed)?;
    let (throttle_samples, brake_samples) = split_by_pedal(&bins.samples(), cfg.deadband);
    for (name, set) in [("throttle", &throttle_samples), ("brake", &brake_samples)] {
        if set.len() < MIN_TRAINING_SAMPLES {
            log::error!("{name} model has only {} samples after preprocessing", set.len());
            return Err(Error::TooFewSamples {
                needed: MIN_TRAINING_SAMPLES,
                got: set.len(),
            });
        }
    }
    let hyper = MlpHyper {
        seed: cfg.mlp.seed ^ cfg.seed,
        ..cfg.mlp.clone()
    };
    let (throttle, brake) = rayon::join(
        || train_mlp(&throttle_samples, &hyper),
        || train_mlp(&brake_samples, &hyper),
    );
    let (throttle, brake) = (throttle?, brake?);
    let table = build_table(&throttle.model, &brake.model, speed_grid, cmd_grid)?;
    Ok(OfflineModels {
        bins,
        throttle_samples,
        brake_samples,
        throttle,
        brake,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Const(f64);

    impl Regressor for Const {
        fn predict(&self, _: f64, _: f64) -> f64 {
            self.0
        }
    }

    #[test]
    fn constant_models_give_constant_halves() {
        let speeds = vec![0.0, 1.0, 2.0];
        let cmds = vec![-10.0, -5.0, 0.0, 5.0, 10.0];
        let t = build_table(&Const(0.8), &Const(-1.5), &speeds, &cmds).unwrap();
        for j in 0..3 {
            assert_eq!(t.column(j), vec![-1.5, -1.5, -0.35, 0.8, 0.8]);
        }
        assert!(t.is_monotone());
    }

    #[test]
    fn build_table_projects_non_monotone_models() {
        // Throttle model decreasing in command: projection flattens it.
        struct Decreasing;
        impl Regressor for Decreasing {
            fn predict(&self, c: f64, _: f64) -> f64 {
                1.0 - 0.01 * c
            }
        }
        let t = build_table(&Decreasing, &Const(-1.0), &[0.0, 1.0], &[-10.0, 0.0, 10.0, 20.0]).unwrap();
        assert!(t.is_monotone());
    }

    #[test]
    fn split_respects_deadband() {
        let s = |cmd, v| RegressionSample { cmd, v, acc: 0.0 };
        let (thr, brk) = split_by_pedal(&[s(1.0, 1.0), s(3.0, 1.0), s(-3.0, 1.0), s(-1.5, 2.0)], 2.0);
        assert_eq!(thr, vec![s(3.0, 1.0)]);
        assert_eq!(brk, vec![s(-3.0, 1.0)]);
    }
}
