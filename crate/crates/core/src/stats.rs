//! Summary statistics over trajectories.

use rand::Rng;

use crate::scalar::sum_compensated;

/// Sample mean and its standard error (`sd / sqrt(n)`); `(NaN, NaN)` when empty.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum_compensated(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = sum_compensated(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Median (mean of the two middle values for even length); `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Bootstrap standard error of the median.
pub fn bootstrap_median_stderr<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    rng: &mut R,
) -> f64 {
    if values.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let mut buf = vec![0.0; values.len()];
    let medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.gen_range(0..values.len())];
            }
            median(&buf)
        })
        .collect();
    let (_, se) = mean_stderr(&medians);
    se * (resamples as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn mean_and_median() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn bootstrap_of_constant_is_zero() {
        let mut rng = substream(0, 0);
        assert_eq!(bootstrap_median_stderr(&[1.0; 20], 100, &mut rng), 0.0);
        let spread: Vec<f64> = (0..50).map(f64::from).collect();
        assert!(bootstrap_median_stderr(&spread, 200, &mut rng) > 0.0);
    }
}
