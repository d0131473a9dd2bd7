//! Goodness-of-fit and Monte Carlo summary helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Cells are merged until each expects at least this many observations.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Default significance level for goodness-of-fit tests.
pub const DEFAULT_SIGNIFICANCE: f64 = 1e-3;

/// Width of Monte Carlo confidence bands, in standard errors.
pub const CONFIDENCE_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub cells: usize,
    pub significance: f64,
    pub pass: bool,
}

/// Pearson chi-square test of `observed` counts against cell probabilities.
///
/// `probabilities` must cover the whole support (tail cells included) and
/// sum to one. Adjacent cells are merged left to right until every merged
/// cell expects at least [`MIN_EXPECTED_COUNT`] observations; a short
/// remainder is folded into the last merged cell.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64], significance: f64) -> Result<ChiSquareReport> {
    if observed.len() != probabilities.len() {
        return Err(Error::SizeMismatch {
            expected: probabilities.len(),
            found: observed.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let (obs, exp) = merge_cells(observed, probabilities, total);
    if obs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{total} trials leave fewer than two cells with expected count >= {MIN_EXPECTED_COUNT}"
        )));
    }
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = obs.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p_value = dist.sf(statistic);
    Ok(ChiSquareReport {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        cells: obs.len(),
        significance,
        pass: p_value > significance,
    })
}

fn merge_cells(observed: &[u64], probabilities: &[f64], total: f64) -> (Vec<u64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0f64);
    for (&o, &p) in observed.iter().zip(probabilities) {
        o_acc += o;
        e_acc += p * total;
        if e_acc >= MIN_EXPECTED_COUNT {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0 || e_acc > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    (obs, exp)
}

/// A Monte Carlo estimate with a confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    /// Proportion estimate with a normal-approximation band of
    /// [`CONFIDENCE_SIGMAS`] standard errors.
    pub fn proportion(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            value: p,
            half_width: CONFIDENCE_SIGMAS * (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// Sample mean with a band of [`CONFIDENCE_SIGMAS`] standard errors.
    pub fn mean(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            half_width: CONFIDENCE_SIGMAS * (var / n).sqrt(),
        }
    }

    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }
}

/// Median of a sample (mean of the two middle values for even lengths).
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merging_folds_thin_tails() {
        let probs = [0.001, 0.001, 0.498, 0.498, 0.001, 0.001];
        let (o, e) = merge_cells(&[0, 1, 50, 47, 1, 1], &probs, 100.0);
        assert_eq!(o, vec![51, 49]);
        assert!((e[0] - 50.0).abs() < 1e-9 && (e[1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_fit_has_p_value_one() {
        let r = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4], DEFAULT_SIGNIFICANCE).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(r.pass);
        assert_eq!(r.degrees_of_freedom, 3);
    }

    #[test]
    fn gross_misfit_fails() {
        let r = chi_square_gof(&[100, 0], &[0.5, 0.5], DEFAULT_SIGNIFICANCE).unwrap();
        assert!(!r.pass);
        assert!((r.statistic - 100.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_trials_is_an_error() {
        assert!(chi_square_gof(&[3, 2], &[0.5, 0.5], DEFAULT_SIGNIFICANCE).is_err());
    }

    #[test]
    fn estimates() {
        let e = Estimate::proportion(50, 100);
        assert_eq!(e.value, 0.5);
        assert!((e.half_width - 0.15).abs() < 1e-12);
        let m = Estimate::mean(&[1.0, 2.0, 3.0]);
        assert_eq!(m.value, 2.0);
        assert!((m.half_width - 3.0 * (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
