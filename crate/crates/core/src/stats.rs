//! Statistical helpers: chi-square quantiles, binomial confidence intervals
//! and order-fixed compensated summation.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 95% standard-normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Quantile of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_quantile(dof: usize, prob: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Config(
            "chi-square quantile needs at least one degree of freedom".into(),
        ));
    }
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::Config(format!(
            "chi-square quantile probability {prob} outside [0, 1)"
        )));
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.inverse_cdf(prob))
}

/// Wilson score interval for `successes` out of `trials` at ~95% coverage.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Kahan–Babuška summation in iteration order.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Nearest-rank percentile of an unsorted sample (`q` in [0, 1]).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_table_values() {
        // standard table values
        assert!((chi_square_quantile(1, 0.95).unwrap() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((chi_square_quantile(1, 0.975).unwrap() - 5.023_886_187_314_888).abs() < 1e-9);
        assert!((chi_square_quantile(3, 0.99).unwrap() - 11.344_866_730_144_37).abs() < 1e-8);
    }

    #[test]
    fn chi_square_two_dof_is_exponential() {
        for &tail in &[0.5, 0.05, 1e-3, 1e-6] {
            let exact = -2.0 * f64::ln(tail);
            let q = chi_square_quantile(2, 1.0 - tail).unwrap();
            assert!((q - exact).abs() < 1e-8 * exact.max(1.0), "tail {tail}: {q} vs {exact}");
        }
    }

    #[test]
    fn chi_square_rejects_bad_input() {
        assert!(chi_square_quantile(0, 0.5).is_err());
        assert!(chi_square_quantile(1, 1.0).is_err());
    }

    #[test]
    fn wilson_brackets_the_ratio() {
        let (lo, hi) = wilson_interval(76, 100);
        assert!(lo < 0.76 && 0.76 < hi);
        assert!((lo - 0.6679).abs() < 1e-3 && (hi - 0.8329).abs() < 1e-3);
        let (lo, hi) = wilson_interval(100, 100);
        assert!(hi == 1.0 && lo < 1.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16, 1.0, -1e16];
        values.extend(std::iter::repeat_n(0.1, 10));
        let s: CompensatedSum = values.into_iter().collect();
        assert!((s.value() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn percentiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
    }
}
