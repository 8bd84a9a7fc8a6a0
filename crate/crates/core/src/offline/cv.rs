//! k-fold cross-validation reporting MAE and RMSE on held-out folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{train_linear, train_mlp, train_pedal_models, MlpHyper, RegressionSample, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    NeuralNetwork,
    Linear,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NeuralNetwork => "nn",
            ModelKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub n_test: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldMetrics>,
    /// Mean of per-fold MAE.
    pub mae: f64,
    /// Mean of per-fold RMSE.
    pub rmse: f64,
}

/// `(MAE, RMSE)` of a residual sequence; `(0, 0)` when empty.
pub fn mae_rmse(residuals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for r in residuals {
        abs += r.abs();
        sq += r * r;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (abs / n as f64, (sq / n as f64).sqrt())
}

/// Seeded assignment of each sample to one of `folds` folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos % folds;
    }
    fold
}

/// Cross-validates an arbitrary trainer. Folds run in parallel; each
/// trainer call sees only the training split.
pub fn cross_validate_with<F>(
    samples: &[RegressionSample],
    folds: usize,
    seed: u64,
    train: F,
) -> Result<CvReport>
where
    F: Fn(&[RegressionSample]) -> Result<Box<dyn Regressor + Send>> + Sync,
{
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    if samples.len() < folds {
        return Err(Error::TooFewSamples {
            needed: folds,
            got: samples.len(),
        });
    }
    let assignment = fold_assignment(samples.len(), folds, seed);
    let results: Vec<Result<FoldMetrics>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (test, train_split): (Vec<_>, Vec<_>) = samples
                .iter()
                .zip(&assignment)
                .partition(|(_, &f)| f == k);
            let train_split: Vec<RegressionSample> = train_split.into_iter().map(|(s, _)| *s).collect();
            let model = train(&train_split)?;
            let (mae, rmse) = mae_rmse(test.iter().map(|(s, _)| model.predict(s.cmd, s.v) - s.acc));
            Ok(FoldMetrics {
                n_test: test.len(),
                mae,
                rmse,
            })
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let n = folds.len() as f64;
    Ok(CvReport {
        mae: folds.iter().map(|f| f.mae).sum::<f64>() / n,
        rmse: folds.iter().map(|f| f.rmse).sum::<f64>() / n,
        folds,
    })
}

/// Cross-validates the two-pedal model: each fold trains separate throttle
/// and brake models of the given kind.
pub fn cross_validate(
    samples: &[RegressionSample],
    folds: usize,
    kind: ModelKind,
    hyper: &MlpHyper,
    seed: u64,
) -> Result<CvReport> {
    match kind {
        ModelKind::NeuralNetwork => cross_validate_with(samples, folds, seed, |s| {
            let models = train_pedal_models(s, |p| Ok(train_mlp(p, hyper)?.model))?;
            Ok(Box::new(models) as Box<dyn Regressor + Send>)
        }),
        ModelKind::Linear => cross_validate_with(samples, folds, seed, |s| {
            Ok(Box::new(train_pedal_models(s, train_linear)?) as Box<dyn Regressor + Send>)
        }),
    }
}
