//! Randomized rounding, Polya noise and the discrete Laplace distribution.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::stream_rng;
use crate::stats::{chi_square_gof, ChiSquareReport, Estimate, DEFAULT_SIGNIFICANCE};

/// Noise configuration of one player's encoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Discrete Laplace parameter, `e^{−ε/p}`.
    pub alpha: f64,
    /// Polya shape, `1/n`.
    pub r: f64,
    /// Rounding precision, `√n`.
    pub p_precision: f64,
}

impl NoiseParams {
    pub fn new(alpha: f64, r: f64, p_precision: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("Polya shape must be > 0, got {r}")));
        }
        if !(p_precision.is_finite() && p_precision >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "precision must be >= 1, got {p_precision}"
            )));
        }
        Ok(Self { alpha, r, p_precision })
    }

    /// Parameters for `n` players at privacy level `epsilon`.
    pub fn for_players(n: usize, epsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidCount("n must be at least 1".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        let p = (n as f64).sqrt();
        Self::new((-epsilon / p).exp(), 1.0 / n as f64, p)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_polya(r: f64, p: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParameter(format!("Polya shape must be > 0, got {r}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("Polya parameter must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// `⌊xp⌋ + Bernoulli(xp − ⌊xp⌋)`.
pub fn randomized_round<R: Rng + ?Sized>(x: f64, p: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("input {x} lies outside [0, 1]")));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidParameter(format!("precision must be >= 1, got {p}")));
    }
    let scaled = x * p;
    let base = scaled.floor();
    let frac = scaled - base;
    let up = frac > 0.0 && rng.random::<f64>() < frac;
    Ok(base as u64 + u64::from(up))
}

/// `binom(k+r−1, k)·p^k·(1−p)^r`, zero for negative `k`.
pub fn polya_pmf(r: f64, p: f64, k: i64) -> Result<f64> {
    check_polya(r, p)?;
    if k < 0 {
        return Ok(0.0);
    }
    let k = k as f64;
    let log = ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + k * p.ln() + r * (-p).ln_1p();
    Ok(log.exp())
}

/// One Polya(r, p) draw as a Gamma-Poisson mixture.
pub fn sample_polya<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> Result<u64> {
    check_polya(r, p)?;
    let gamma = Gamma::new(r, p / (1.0 - p)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let lambda: f64 = gamma.sample(rng);
    if lambda <= 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(poisson.sample(rng) as u64)
}

/// `(1−α)/(1+α)·α^{|k|}`.
pub fn dlap_pmf(alpha: f64, k: i64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) / (1.0 + alpha) * alpha.powf(k.unsigned_abs() as f64))
}

/// `P[Z <= k]` for `Z ~ DLap(α)`.
pub fn dlap_cdf(alpha: f64, k: i64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if k < 0 {
        alpha.powf(k.unsigned_abs() as f64) / (1.0 + alpha)
    } else {
        1.0 - alpha.powf((k + 1) as f64) / (1.0 + alpha)
    })
}

/// `E|Z| = 2α/(1−α²)` for `Z ~ DLap(α)`.
pub fn dlap_mean_abs(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(2.0 * alpha / (1.0 - alpha * alpha))
}

/// DLap(α) as the difference of two Geometric(1−α) draws.
pub fn sample_dlap<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<i64> {
    check_alpha(alpha)?;
    let geo = Geometric::new(1.0 - alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(geo.sample(rng) as i64 - geo.sample(rng) as i64)
}

/// DLap(α) by inverting the closed-form CDF.
pub fn sample_dlap_inverse_cdf<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<i64> {
    check_alpha(alpha)?;
    // Uniform on the open interval (0, 1).
    let u = ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    let ln_a = alpha.ln();
    let k = if u <= alpha / (1.0 + alpha) {
        -((u * (1.0 + alpha)).ln() / ln_a).floor()
    } else {
        ((((1.0 - u) * (1.0 + alpha)).ln() / ln_a).ceil() - 1.0).max(0.0)
    };
    Ok(k as i64)
}

/// `Σ_{i<n} (Polya(1/n, α) − Polya′(1/n, α))`.
pub fn sample_polya_sum<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<i64> {
    let r = 1.0 / n as f64;
    let mut z = 0i64;
    for _ in 0..n {
        z += sample_polya(r, alpha, rng)? as i64;
        z -= sample_polya(r, alpha, rng)? as i64;
    }
    Ok(z)
}

/// Chi-square report for the Polya-sum experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyaDlapReport {
    pub n: usize,
    pub sample_alpha: f64,
    pub null_alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub chi_square: ChiSquareReport,
}

impl PolyaDlapReport {
    pub fn pass(&self) -> bool {
        self.chi_square.pass
    }
}

/// Draws `trials` values of the Polya sum at `sample_alpha` and tests them
/// against `DLap(null_alpha)`. Trial `i` reads sub-stream `i` of `seed`.
pub fn polya_dlap_test(
    n: usize,
    sample_alpha: f64,
    null_alpha: f64,
    trials: usize,
    seed: u64,
    significance: f64,
) -> Result<PolyaDlapReport> {
    if n == 0 {
        return Err(Error::InvalidCount("n must be at least 1".into()));
    }
    check_alpha(sample_alpha)?;
    check_alpha(null_alpha)?;
    // Integer support |k| <= half, plus one tail cell on each side.
    let half = ((1e-12f64).ln() / null_alpha.ln()).ceil().clamp(1.0, 100_000.0) as i64;
    let bins = (2 * half + 3) as usize;
    let counts = par::histogram_trials(trials, bins, |i| {
        let z = sample_polya_sum(n, sample_alpha, &mut stream_rng(seed, i as u64))
            .expect("parameters validated");
        (z.clamp(-half - 1, half + 1) + half + 1) as usize
    });
    let mut probs = Vec::with_capacity(bins);
    probs.push(dlap_cdf(null_alpha, -half - 1)?);
    for k in -half..=half {
        probs.push(dlap_pmf(null_alpha, k)?);
    }
    probs.push(1.0 - dlap_cdf(null_alpha, half)?);
    let chi_square = chi_square_gof(&counts, &probs, significance)?;
    Ok(PolyaDlapReport {
        n,
        sample_alpha,
        null_alpha,
        trials,
        seed,
        chi_square,
    })
}

/// [`polya_dlap_test`] with the correct null at the default significance.
pub fn polya_dlap_equivalence_test(n: usize, alpha: f64, trials: usize, seed: u64) -> Result<PolyaDlapReport> {
    polya_dlap_test(n, alpha, alpha, trials, seed, DEFAULT_SIGNIFICANCE)
}

/// Monte Carlo estimate of `E[(Σ_i (x_i − y_i/p))²]` for `n` copies of `x`.
pub fn rounding_mse(n: usize, x: f64, p: f64, trials: usize, seed: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::InvalidCount("at least one trial is required".into()));
    }
    randomized_round(x, p, &mut stream_rng(seed, 0))?;
    let errors = par::map_trials(trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let mut err = 0.0;
        for _ in 0..n {
            err += x - randomized_round(x, p, &mut rng).expect("validated") as f64 / p;
        }
        err * err
    });
    Ok(Estimate::mean(&errors))
}

/// `n/(4p²)`.
pub fn rounding_mse_bound(n: usize, p: f64) -> f64 {
    n as f64 / (4.0 * p * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn randomized_round_examples() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(randomized_round(0.5, 2.0, &mut rng).unwrap(), 1);
            assert_eq!(randomized_round(1.0, 3.0, &mut rng).unwrap(), 3);
        }
        let ups = (0..100_000)
            .filter(|_| randomized_round(0.25, 2.0, &mut rng).unwrap() == 1)
            .count();
        assert!((ups as f64 / 1e5 - 0.5).abs() < 0.01);
        assert!(matches!(randomized_round(1.5, 2.0, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(randomized_round(-0.1, 2.0, &mut rng), Err(Error::Domain(_))));
        assert!(randomized_round(0.5, 0.5, &mut rng).is_err());
    }

    #[test]
    fn randomized_round_is_unbiased() {
        for x in [0.13, 0.25, 0.77] {
            for p in [2.0, 10.0] {
                let mut rng = stream_rng(2, (x * 100.0) as u64);
                let samples: Vec<f64> = (0..100_000)
                    .map(|_| randomized_round(x, p, &mut rng).unwrap() as f64)
                    .collect();
                let est = Estimate::mean(&samples);
                let target = x * p;
                assert!(
                    est.lower() <= target && target <= est.upper(),
                    "x={x} p={p}: {est:?}"
                );
            }
        }
    }

    #[test]
    fn rounding_mse_within_bound() {
        let est = rounding_mse(100, 0.13, 10.0, 10_000, 3).unwrap();
        // Exact value n·f(1−f)/p² with fractional part f = 0.3.
        let exact = 100.0 * 0.3 * 0.7 / 100.0;
        assert!((est.value - exact).abs() <= est.half_width, "{est:?}");
        assert!(est.value <= rounding_mse_bound(100, 10.0) + est.half_width);
    }

    #[test]
    fn polya_pmf_examples() {
        assert!((polya_pmf(1.0, 0.5, 2).unwrap() - 0.125).abs() < 1e-12);
        assert!((polya_pmf(0.5, 0.5, 0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((polya_pmf(0.5, 0.5, 1).unwrap() - 0.25 * 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(polya_pmf(0.5, 0.5, -1).unwrap(), 0.0);
        assert!(polya_pmf(0.0, 0.5, 1).is_err());
        assert!(polya_pmf(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn polya_pmf_matches_generalized_binomial() {
        // binom(k+r−1, k) = Π_{j=1}^{k} (r+j−1)/j.
        for r in [0.01, 0.3, 1.0, 2.5] {
            for p in [0.1f64, 0.5, 0.9] {
                let mut coeff = 1.0;
                for k in 0..40i64 {
                    if k > 0 {
                        coeff *= (r + k as f64 - 1.0) / k as f64;
                    }
                    let direct = coeff * p.powi(k as i32) * (1.0 - p).powf(r);
                    let got = polya_pmf(r, p, k).unwrap();
                    assert!((got - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300, "{r} {p} {k}");
                }
                let total: f64 = (0..5000).map(|k| polya_pmf(r, p, k).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-9, "r={r} p={p}: {total}");
            }
        }
    }

    #[test]
    fn sample_polya_examples() {
        let mut rng = stream_rng(4, 0);
        let zeros = (0..100_000)
            .filter(|_| sample_polya(1.0, 0.5, &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / 1e5 - 0.5).abs() < 0.01);
        assert!((0..1000).all(|_| sample_polya(1.0, 1e-9, &mut rng).unwrap() == 0));
        assert!(sample_polya(-1.0, 0.5, &mut rng).is_err());
    }

    #[test]
    fn sample_polya_goodness_of_fit() {
        let (r, p) = (0.1, 0.5);
        let top = 60usize;
        let hist = par::histogram_trials(100_000, top + 1, |i| {
            (sample_polya(r, p, &mut stream_rng(5, i as u64)).unwrap() as usize).min(top)
        });
        let mut probs: Vec<f64> = (0..top as i64).map(|k| polya_pmf(r, p, k).unwrap()).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        let report = chi_square_gof(&hist, &probs, DEFAULT_SIGNIFICANCE).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn dlap_pmf_examples() {
        assert!((dlap_pmf(0.5, 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((dlap_pmf(0.5, 1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((dlap_pmf(0.5, -1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((dlap_pmf(1e-9, 0).unwrap() - 1.0).abs() < 1e-8);
        assert!(dlap_pmf(1.0, 0).is_err());
    }

    #[test]
    fn dlap_pmf_normalizes_and_matches_cdf() {
        for alpha in [0.01, 0.3, 0.5, 0.9] {
            let total: f64 = (-1000..=1000).map(|k| dlap_pmf(alpha, k).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{alpha}: {total}");
            let mut acc = 0.0;
            for k in -1000..=20 {
                acc += dlap_pmf(alpha, k).unwrap();
                if k >= -20 {
                    assert!((acc - dlap_cdf(alpha, k).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn geometric_difference_convolution_is_dlap() {
        // Exact oracle: Σ_j g(j)·g(j+|k|) with g(j) = Polya(1, α) pmf.
        for alpha in [0.3, 0.5, 0.9] {
            for k in -10i64..=10 {
                let conv: f64 = (0..4000i64)
                    .map(|j| polya_pmf(1.0, alpha, j).unwrap() * polya_pmf(1.0, alpha, j + k.abs()).unwrap())
                    .sum();
                assert!((conv - dlap_pmf(alpha, k).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dlap_mean_abs_matches_samples() {
        let alpha = (-0.1f64).exp();
        let exact = dlap_mean_abs(alpha).unwrap();
        let series: f64 = (-2000..=2000)
            .map(|k: i64| k.unsigned_abs() as f64 * dlap_pmf(alpha, k).unwrap())
            .sum();
        assert!((exact - series).abs() < 1e-9);
        let mut rng = stream_rng(6, 0);
        for inverse in [false, true] {
            let samples: Vec<f64> = (0..100_000)
                .map(|_| {
                    let z = if inverse {
                        sample_dlap_inverse_cdf(alpha, &mut rng)
                    } else {
                        sample_dlap(alpha, &mut rng)
                    };
                    z.unwrap().unsigned_abs() as f64
                })
                .collect();
            let est = Estimate::mean(&samples);
            assert!(est.lower() <= exact && exact <= est.upper(), "{est:?} vs {exact}");
        }
    }

    #[test]
    fn dlap_samplers_agree_with_pmf() {
        for alpha in [0.3, 0.8] {
            let half = 40i64;
            let bins = (2 * half + 3) as usize;
            let probs: Vec<f64> = std::iter::once(dlap_cdf(alpha, -half - 1).unwrap())
                .chain((-half..=half).map(|k| dlap_pmf(alpha, k).unwrap()))
                .chain(std::iter::once(1.0 - dlap_cdf(alpha, half).unwrap()))
                .collect();
            for inverse in [false, true] {
                let hist = par::histogram_trials(100_000, bins, |i| {
                    let mut rng = stream_rng(7, i as u64);
                    let z = if inverse {
                        sample_dlap_inverse_cdf(alpha, &mut rng)
                    } else {
                        sample_dlap(alpha, &mut rng)
                    }
                    .unwrap();
                    (z.clamp(-half - 1, half + 1) + half + 1) as usize
                });
                let r = chi_square_gof(&hist, &probs, DEFAULT_SIGNIFICANCE).unwrap();
                assert!(r.pass, "alpha={alpha} inverse={inverse}: {r:?}");
            }
        }
    }

    #[test]
    fn polya_sum_is_dlap() {
        for n in [1, 10] {
            let r = polya_dlap_equivalence_test(n, 0.5, 100_000, 8).unwrap();
            assert!(r.pass(), "{r:?}");
        }
        let wrong = polya_dlap_test(10, 0.5, 0.9, 100_000, 8, DEFAULT_SIGNIFICANCE).unwrap();
        assert!(!wrong.pass());
        assert!(polya_dlap_equivalence_test(10, 0.5, 3, 8).is_err());
    }

    #[test]
    fn noise_params_for_players() {
        let p = NoiseParams::for_players(100, 1.0).unwrap();
        assert!((p.alpha - 0.904_837_418).abs() < 1e-9);
        assert_eq!(p.p_precision, 10.0);
        assert_eq!(p.r, 0.01);
        assert!(NoiseParams::new(1.0, 0.1, 2.0).is_err());
        assert!(NoiseParams::new(0.5, 0.1, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn randomized_round_brackets_input(x in 0.0f64..=1.0, p in 1.0f64..1000.0, seed: u64) {
            let y = randomized_round(x, p, &mut stream_rng(seed, 0)).unwrap() as f64;
            prop_assert!(y == (x * p).floor() || y == (x * p).floor() + 1.0);
        }

        #[test]
        fn dlap_samplers_are_deterministic(alpha in 0.01f64..0.99, seed: u64) {
            let a = sample_dlap(alpha, &mut stream_rng(seed, 1)).unwrap();
            let b = sample_dlap(alpha, &mut stream_rng(seed, 1)).unwrap();
            prop_assert_eq!(a, b);
            let c = sample_dlap_inverse_cdf(alpha, &mut stream_rng(seed, 1)).unwrap();
            let d = sample_dlap_inverse_cdf(alpha, &mut stream_rng(seed, 1)).unwrap();
            prop_assert_eq!(c, d);
        }
    }
}
