//! Ordinary least squares baseline: `acc = w0 + w1 * cmd + w2 * v`.

use nalgebra::{DMatrix, DVector};

use super::{RegressionSample, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub cmd_coef: f64,
    pub speed_coef: f64,
}

impl Regressor for LinearModel {
    fn predict(&self, cmd: f64, v: f64) -> f64 {
        self.intercept + self.cmd_coef * cmd + self.speed_coef * v
    }
}

/// Least-squares fit; `Singular` when the design matrix is rank deficient.
pub fn train_linear(samples: &[RegressionSample]) -> Result<LinearModel> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    let x = DMatrix::from_fn(samples.len(), 3, |r, c| match c {
        0 => 1.0,
        1 => samples[r].cmd,
        _ => samples[r].v,
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.acc));

    // Column scaling keeps the rank test meaningful when cmd (~100) and
    // v (~1) differ by orders of magnitude.
    let scales: Vec<f64> = (0..3)
        .map(|c| x.column(c).norm())
        .collect();
    if scales.iter().any(|&s| s == 0.0) {
        return Err(Error::Singular);
    }
    let mut xs = x.clone();
    for (c, s) in scales.iter().enumerate() {
        xs.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = xs.svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if sv.min() <= max * 1e-10 {
        return Err(Error::Singular);
    }
    let w = svd.solve(&y, 0.0).map_err(|_| Error::Singular)?;
    Ok(LinearModel {
        intercept: w[0] / scales[0],
        cmd_coef: w[1] / scales[1],
        speed_coef: w[2] / scales[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs(cmd: f64, v: f64, acc: f64) -> RegressionSample {
        RegressionSample { cmd, v, acc }
    }

    #[test]
    fn exact_coefficients() {
        let samples: Vec<_> = (0..40)
            .map(|k| {
                let cmd = (k * 7 % 23) as f64 * 4.0 - 40.0;
                let v = (k % 5) as f64 * 0.6;
                rs(cmd, v, 0.3 + 0.02 * cmd - 0.05 * v)
            })
            .collect();
        let m = train_linear(&samples).unwrap();
        assert!((m.intercept - 0.3).abs() < 1e-9);
        assert!((m.cmd_coef - 0.02).abs() < 1e-9);
        assert!((m.speed_coef + 0.05).abs() < 1e-9);
    }

    #[test]
    fn residuals_orthogonal_to_inputs() {
        let samples: Vec<_> = (0..200)
            .map(|k| {
                let cmd = (k as f64 * 0.37).sin() * 90.0;
                let v = (k as f64 * 0.11).cos().abs() * 3.0;
                rs(cmd, v, (cmd / 30.0).tanh() + 0.1 * v * v)
            })
            .collect();
        let m = train_linear(&samples).unwrap();
        let mut dots = [0.0; 3];
        for s in &samples {
            let r = s.acc - m.predict(s.cmd, s.v);
            dots[0] += r;
            dots[1] += r * s.cmd;
            dots[2] += r * s.v;
        }
        for d in dots {
            assert!(d.abs() < 1e-6, "{dots:?}");
        }
    }

    #[test]
    fn duplicates_are_singular() {
        let samples = vec![rs(10.0, 1.0, 0.2); 10];
        assert!(matches!(train_linear(&samples), Err(Error::Singular)));
        // Collinear: v constant.
        let samples: Vec<_> = (0..10).map(|k| rs(k as f64, 1.0, 0.1)).collect();
        assert!(matches!(train_linear(&samples), Err(Error::Singular)));
        assert!(matches!(train_linear(&samples[..2]), Err(Error::TooFewSamples { .. })));
    }
}
