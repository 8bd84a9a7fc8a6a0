//! Third-order Butterworth low-pass, bilinear transform with prewarping.
//!
//! Realized as a first-order section followed by a biquad, both in
//! transposed direct form II. Runs causally, one sample at a time.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const ORDER: usize = 3;
pub const CUTOFF_HZ: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ButterworthLowpass {
    // First-order section: y = b0 x + b1 x' - a1 y'
    fo_b: [f64; 2],
    fo_a1: f64,
    fo_z: f64,
    // Biquad: b0 b1 b2 / a1 a2
    bq_b: [f64; 3],
    bq_a: [f64; 2],
    bq_z: [f64; 2],
}

impl ButterworthLowpass {
    /// 2 Hz cutoff at the given sample rate.
    pub fn new(sample_rate: f64) -> Result<Self> {
        Self::with_cutoff(sample_rate, CUTOFF_HZ)
    }

    pub fn with_cutoff(sample_rate: f64, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !sample_rate.is_finite() || !(sample_rate > 2.0 * cutoff) {
            return Err(Error::InvalidRate(sample_rate));
        }
        // Prewarped analog cutoff expressed through K = tan(pi fc / fs).
        let k = (PI * cutoff / sample_rate).tan();

        // 1 / (s + 1)
        let fo_norm = 1.0 / (1.0 + k);
        let fo_b = [k * fo_norm, k * fo_norm];
        let fo_a1 = (k - 1.0) * fo_norm;

        // 1 / (s^2 + s + 1)
        let k2 = k * k;
        let bq_norm = 1.0 / (1.0 + k + k2);
        let b0 = k2 * bq_norm;
        let bq_b = [b0, 2.0 * b0, b0];
        let bq_a = [2.0 * (k2 - 1.0) * bq_norm, (1.0 - k + k2) * bq_norm];

        Ok(Self {
            fo_b,
            fo_a1,
            fo_z: 0.0,
            bq_b,
            bq_a,
            bq_z: [0.0; 2],
        })
    }

    pub fn filter(&mut self, x: f64) -> f64 {
        let y1 = self.fo_b[0] * x + self.fo_z;
        self.fo_z = self.fo_b[1] * x - self.fo_a1 * y1;

        let y = self.bq_b[0] * y1 + self.bq_z[0];
        self.bq_z[0] = self.bq_b[1] * y1 - self.bq_a[0] * y + self.bq_z[1];
        self.bq_z[1] = self.bq_b[2] * y1 - self.bq_a[1] * y;
        y
    }

    pub fn reset(&mut self) {
        self.fo_z = 0.0;
        self.bq_z = [0.0; 2];
    }
}

/// Filters a whole series from a zero initial state.
pub fn butterworth_lowpass(series: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let mut f = ButterworthLowpass::new(sample_rate)?;
    Ok(series.iter().map(|&x| f.filter(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FS: f64 = 100.0;

    /// Peak output over the last two seconds of a 20 s sinusoid.
    fn steady_gain(freq: f64) -> f64 {
        let n = (20.0 * FS) as usize;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * freq * k as f64 / FS).sin()).collect();
        let y = butterworth_lowpass(&x, FS).unwrap();
        y[n - 200..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Analog Butterworth magnitude at the prewarped frequency.
    fn analytic_gain(freq: f64) -> f64 {
        let w = (PI * freq / FS).tan() / (PI * CUTOFF_HZ / FS).tan();
        1.0 / (1.0 + w.powi(6)).sqrt()
    }

    #[test]
    fn unity_dc_gain() {
        let y = butterworth_lowpass(&vec![3.0; 1000], FS).unwrap();
        assert!((y[999] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn half_power_at_cutoff() {
        let g = steady_gain(2.0);
        assert!((g - 1.0 / 2f64.sqrt()).abs() < 0.03, "gain {g}");
        assert!((g - analytic_gain(2.0)).abs() < 0.01);
    }

    #[test]
    fn stopband_at_20hz() {
        let g = steady_gain(20.0);
        assert!(g < 0.005, "gain {g}");
        assert!(analytic_gain(20.0) < 0.005);
    }

    #[test]
    fn passband_matches_analytic_curve() {
        for f in [0.5, 1.0, 3.0, 5.0] {
            let g = steady_gain(f);
            assert!((g - analytic_gain(f)).abs() < 0.01, "{f} Hz: {g} vs {}", analytic_gain(f));
        }
    }

    #[test]
    fn rejects_low_sample_rate() {
        assert!(matches!(ButterworthLowpass::new(4.0), Err(Error::InvalidRate(_))));
        assert!(ButterworthLowpass::new(0.0).is_err());
        assert!(ButterworthLowpass::new(f64::NAN).is_err());
        assert!(ButterworthLowpass::new(4.5).is_ok());
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            x in prop::collection::vec(-5.0f64..5.0, 1..200),
            y_seed in prop::collection::vec(-5.0f64..5.0, 200),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y = &y_seed[..x.len()];
            let mixed: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            let fx = butterworth_lowpass(&x, FS).unwrap();
            let fy = butterworth_lowpass(y, FS).unwrap();
            let fm = butterworth_lowpass(&mixed, FS).unwrap();
            for k in 0..x.len() {
                prop_assert!((fm[k] - (a * fx[k] + b * fy[k])).abs() < 1e-9);
            }
        }
    }
}
