//! Pool-adjacent-violators for non-decreasing least-squares fits.

/// Returns the L2-nearest non-decreasing sequence to `values` (equal weights).
///
/// Sequences that are already non-decreasing come back bit-identical.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    // Each block stores (sum, count); a block's fitted value is its mean.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &y in values {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("at least one block");
            *last = (s0 + s1, n0 + n1);
        }
    }

    let mut out = Vec::with_capacity(values.len());
    for (sum, n) in blocks {
        let mean = if n == 1 { sum } else { sum / n as f64 };
        out.extend(std::iter::repeat_n(mean, n));
    }
    out
}

pub fn is_non_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_single_violation() {
        assert_eq!(isotonic_increasing(&[1.0, 3.0, 2.0]), vec![1.0, 2.5, 2.5]);
    }

    #[test]
    fn monotone_input_is_fixed_point() {
        let v = [-2.0, -1.0, -1.0, 0.5, 4.0];
        assert_eq!(isotonic_increasing(&v), v.to_vec());
    }

    #[test]
    fn fully_reversed_collapses_to_mean() {
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), vec![2.0; 3]);
    }

    #[test]
    fn cascading_merge() {
        // 4 and 5 merge to 4.5, then 1 forces the pool {4,5,1} to 10/3.
        let out = isotonic_increasing(&[0.0, 4.0, 5.0, 1.0, 6.0]);
        let m = 10.0 / 3.0;
        assert_eq!(out, vec![0.0, m, m, m, 6.0]);
    }

    /// Brute-force oracle: the L2 projection onto the monotone cone is the
    /// unique sequence whose every block mean satisfies the min-max formula
    /// y_i = max_{j<=i} min_{k>=i} mean(x[j..=k]).
    fn minmax_oracle(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        (i..n)
                            .map(|k| x[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_minmax_oracle(x in prop::collection::vec(-10.0f64..10.0, 1..12)) {
            let fast = isotonic_increasing(&x);
            let slow = minmax_oracle(&x);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
            }
        }

        #[test]
        fn output_is_monotone_and_idempotent(x in prop::collection::vec(-10.0f64..10.0, 0..40)) {
            let once = isotonic_increasing(&x);
            prop_assert!(is_non_decreasing(&once));
            prop_assert_eq!(isotonic_increasing(&once), once);
        }
    }
}
