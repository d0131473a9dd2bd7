//! Privacy amplification by shuffling, perfect and imperfect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    /// Central ε after a perfect shuffle.
    pub epsilon_shuffle: f64,
    /// Central ε after a γ-imperfect shuffle: `epsilon_shuffle + γ`.
    pub epsilon_imperfect: f64,
    /// Largest admissible local ε₀, `ln(n/(16·ln(2/δ)))`.
    pub epsilon0_limit: f64,
}

/// `ε = ln(1 + ((e^{ε₀}−1)/(e^{ε₀}+1))·8√(e^{ε₀}·ln(4/δ))/√n)` for `n`
/// users running an `ε₀`-local randomizer, plus the additive `γ` of an
/// imperfect shuffler. Natural logarithms throughout.
pub fn amplification_bound(epsilon0: f64, n: usize, delta: f64, gamma: f64) -> Result<AmplificationReport> {
    if n == 0 {
        return Err(Error::InvalidCount("n must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(epsilon0.is_finite() && epsilon0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon0 must be >= 0, got {epsilon0}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let nf = n as f64;
    let limit = (nf / (16.0 * (2.0 / delta).ln())).ln();
    if epsilon0 > limit {
        return Err(Error::Precondition(format!(
            "epsilon0 <= ln(n/(16 ln(2/δ))) = {limit:.6} is required, got {epsilon0}"
        )));
    }
    let e0 = epsilon0.exp();
    let inner = (e0 - 1.0) / (e0 + 1.0) * 8.0 * (e0 * (4.0 / delta).ln()).sqrt() / nf.sqrt();
    let epsilon_shuffle = inner.ln_1p();
    Ok(AmplificationReport {
        epsilon_shuffle,
        epsilon_imperfect: epsilon_shuffle + gamma,
        epsilon0_limit: limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let r = amplification_bound(1.0, 10_000, 1e-6, 0.05).unwrap();
        assert!((r.epsilon_shuffle - 0.2132).abs() < 1e-3, "{r:?}");
        assert!((r.epsilon_imperfect - 0.2632).abs() < 1e-3, "{r:?}");
        let e = std::f64::consts::E;
        let oracle = (1.0 + (e - 1.0) / (e + 1.0) * 8.0 * (e * 4e6f64.ln()).sqrt() / 100.0).ln();
        assert!((r.epsilon_shuffle - oracle).abs() < 1e-12);
        assert!(matches!(
            amplification_bound(r.epsilon0_limit + 0.1, 10_000, 1e-6, 0.0),
            Err(Error::Precondition(_))
        ));
        assert!(amplification_bound(r.epsilon0_limit, 10_000, 1e-6, 0.0).is_ok());
        assert_eq!(amplification_bound(0.0, 10_000, 1e-6, 0.0).unwrap().epsilon_shuffle, 0.0);
    }

    #[test]
    fn monotone_in_n_and_delta() {
        for eps0 in [0.1, 0.5, 1.0, 2.0] {
            let mut prev = f64::INFINITY;
            for n in [10_000usize, 20_000, 50_000, 100_000, 1_000_000] {
                let v = amplification_bound(eps0, n, 1e-6, 0.0).unwrap().epsilon_shuffle;
                assert!(v < prev);
                prev = v;
            }
            let mut prev = 0.0;
            for delta in [1e-3, 1e-6, 1e-9, 1e-12] {
                let v = amplification_bound(eps0, 1_000_000, delta, 0.0).unwrap().epsilon_shuffle;
                assert!(v > prev);
                prev = v;
            }
        }
    }
}
