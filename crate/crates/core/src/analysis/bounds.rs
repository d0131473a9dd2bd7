//! Closed-form security bounds with optional empirical companions.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::par;
use crate::perm::{enumerate_permutations_capped, DEFAULT_ENUMERATION_CAP};
use crate::protocol::{check_security_preconditions, log_q_limit};
use crate::rng::stream_rng;
use crate::shuffler::{composed_round_model, ShufflerModel};
use crate::stats::Estimate;

use super::graph::components_of;

/// Slack for comparing exact probabilities with bounds.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// One hypothesis of a bound and whether it holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreconditionCheck {
    pub name: String,
    pub holds: bool,
}

impl PreconditionCheck {
    fn new(name: impl Into<String>, holds: bool) -> Self {
        Self { name: name.into(), holds }
    }
}

/// A bound value, its hypotheses and an optional estimate of the bounded
/// quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub preconditions: Vec<PreconditionCheck>,
    /// Present only when an estimation run was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
    /// The bound exceeds 1 and so says nothing about a probability.
    pub vacuous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    fn new(value: f64, preconditions: Vec<PreconditionCheck>, probability: bool) -> Self {
        Self {
            value,
            preconditions,
            estimate: None,
            vacuous: probability && value > 1.0,
            note: None,
        }
    }

    /// Whether the estimate, if any, is consistent with the bound:
    /// `value >= estimate − half_width` up to [`BOUND_TOLERANCE`].
    pub fn estimate_within_bound(&self) -> Option<bool> {
        self.estimate
            .map(|e| self.value * (1.0 + BOUND_TOLERANCE) + BOUND_TOLERANCE >= e.value - e.half_width)
    }
}

/// Upper bound on the probability that no edge of the `m`-round graph
/// leaves a fixed set of `s` players.
///
/// The minimum of `e^{2smγ}C(n,s)^{−m}` (when `s <= n/2`),
/// `e^{2(n−s)mγ}C(n,s)^{−m}` (when `s >= n/2`) and
/// `e^{kmγ}C(⌊n/2⌋,k)^{−m}` over `k` (the given one, or every
/// `0 <= k <= min(s, n−s)`).
pub fn disconnect_bound(n: usize, s: usize, m: usize, gamma: f64, k: Option<usize>) -> Result<BoundReport> {
    if s == 0 || s >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= s <= n-1, got s={s}, n={n}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
    }
    let k_max = s.min(n - s);
    if let Some(k) = k {
        if k > k_max {
            return Err(Error::InvalidParameter(format!("need 0 <= k <= {k_max}, got k={k}")));
        }
    }
    let (nf, sf, mf) = (n as f64, s as f64, m as f64);
    let ln_c = ln_binomial(n as u64, s as u64);
    let mut best = f64::INFINITY;
    if 2 * s <= n {
        best = best.min(2.0 * sf * mf * gamma - mf * ln_c);
    }
    if 2 * s >= n {
        best = best.min(2.0 * (nf - sf) * mf * gamma - mf * ln_c);
    }
    let ks: Vec<usize> = match k {
        Some(k) => vec![k],
        None => (0..=k_max).collect(),
    };
    for k in ks {
        best = best.min(k as f64 * mf * gamma - mf * ln_binomial((n / 2) as u64, k as u64));
    }
    Ok(BoundReport::new(
        best.exp(),
        vec![PreconditionCheck::new("1 <= s <= n-1", true)],
        true,
    ))
}

/// How [`empirical_disconnect_prob`] evaluates the probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DisconnectMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

/// Probability that no edge of the `m`-round graph crosses between
/// `subset` (0-based players) and its complement, with rounds drawn from
/// `model`.
///
/// A round creates no crossing edge exactly when `π(S) = S`, so exact mode
/// raises the one-round probability to the `m`-th power.
pub fn empirical_disconnect_prob(
    model: &ShufflerModel,
    subset: &[usize],
    m: usize,
    mode: DisconnectMode,
) -> Result<Estimate> {
    model.validate()?;
    let n = model.n();
    let mut in_set = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(Error::InvalidParameter(format!("player {i} out of range for n={n}")));
        }
        in_set[i] = true;
    }
    let preserves = |map: &[usize]| (0..n).all(|i| in_set[i] == in_set[map[i]]);
    match mode {
        DisconnectMode::Exact => {
            let perms = enumerate_permutations_capped(n, DEFAULT_ENUMERATION_CAP)?;
            let law = model.exact_law()?;
            let one: f64 = perms
                .iter()
                .zip(&law)
                .filter(|(p, _)| preserves(p.as_slice()))
                .map(|(_, &w)| w)
                .sum();
            Ok(Estimate {
                value: one.powi(m as i32),
                half_width: 0.0,
            })
        }
        DisconnectMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidCount("at least one trial is required".into()));
            }
            let sampler = model.sampler()?;
            let hits = par::histogram_trials(trials, 2, |t| {
                let mut rng = stream_rng(seed, t as u64);
                usize::from((0..m).all(|_| preserves(sampler.sample(&mut rng).as_slice())))
            })[1];
            Ok(Estimate::proportion(hits, trials as u64))
        }
    }
}

/// `2^{c−1}/c!·(e/n)^{(m−1)(c−1)/(32e^{4γ})}·e^{2γ(m−1)(c−1)}`, the bound on
/// the probability that the graph has exactly `c` components.
pub fn component_bound(n: usize, c: usize, m: usize, gamma: f64) -> Result<BoundReport> {
    let m_min = 8.0 * (4.0 * gamma).exp();
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Precondition(format!("gamma >= 0 is required, got {gamma}")));
    }
    if n < 19 {
        return Err(Error::Precondition(format!("n >= 19 is required, got n={n}")));
    }
    if (m as f64) < m_min {
        return Err(Error::Precondition(format!("m >= 8e^(4γ) = {m_min:.4} is required, got m={m}")));
    }
    if c == 0 || c > n {
        return Err(Error::Precondition(format!("1 <= c <= n is required, got c={c}")));
    }
    let (cf, mm1) = (c as f64 - 1.0, m as f64 - 1.0);
    let log = cf * std::f64::consts::LN_2 - ln_gamma(c as f64 + 1.0)
        + mm1 * cf / (32.0 * (4.0 * gamma).exp()) * (1.0 - (n as f64).ln())
        + 2.0 * gamma * mm1 * cf;
    Ok(BoundReport::new(
        log.exp(),
        vec![
            PreconditionCheck::new("n >= 19", true),
            PreconditionCheck::new("m >= 8e^(4γ)", true),
            PreconditionCheck::new("1 <= c <= n", true),
        ],
        true,
    ))
}

/// Monte Carlo companion for [`q_power_expectation_bound`].
#[derive(Clone, Debug)]
pub struct QPowerCompanion<'a> {
    pub model: &'a ShufflerModel,
    pub trials: usize,
    pub seed: u64,
    /// Draw rounds from `S⁻¹∘S′` (the default) rather than `S`.
    pub composed: bool,
}

/// `q + 3q²e^{2γ(m−1)}(e/n)^{(m−1)/(32e^{4γ})}`, the bound on `E[q^{C(G)}]`.
pub fn q_power_expectation_bound(
    n: usize,
    m: usize,
    q: u64,
    gamma: f64,
    companion: Option<QPowerCompanion<'_>>,
) -> Result<BoundReport> {
    check_security_preconditions(n, m, q, gamma)?;
    let (qf, mm1) = (q as f64, m as f64 - 1.0);
    let log_tail = 2.0 * gamma * mm1 + mm1 / (32.0 * (4.0 * gamma).exp()) * (1.0 - (n as f64).ln());
    let value = qf + 3.0 * qf * qf * log_tail.exp();
    let mut report = BoundReport::new(
        value,
        vec![
            PreconditionCheck::new("n >= 19", true),
            PreconditionCheck::new("m >= 8e^(4γ)", true),
            PreconditionCheck::new(
                format!("q <= (n/e)^((m-1)/(32e^(4γ)))·e^(2γ(1-m)) = {:.6e}", log_q_limit(n, m, gamma).exp()),
                true,
            ),
        ],
        false,
    );
    if let Some(c) = companion {
        if c.model.n() != n {
            return Err(Error::SizeMismatch { expected: n, found: c.model.n() });
        }
        if c.trials == 0 {
            return Err(Error::InvalidCount("at least one trial is required".into()));
        }
        let round_model = if c.composed {
            composed_round_model(c.model, c.model)?
        } else {
            c.model.clone()
        };
        let sampler = round_model.sampler()?;
        let samples = par::map_trials(c.trials, |t| {
            let mut rng = stream_rng(c.seed, t as u64);
            let rounds: Vec<_> = (0..m).map(|_| sampler.sample(&mut rng)).collect();
            qf.powi(components_of(&rounds, n) as i32)
        });
        report.estimate = Some(Estimate::mean(&samples));
        let nominal = c.model.nominal_gamma();
        if nominal > gamma {
            report.note = Some(format!(
                "model is not {gamma}-imperfect (nominal distortion {nominal}); the bound does not apply"
            ));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::Permutation;

    fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
        (1u32..(1 << n) - 1).map(move |mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
    }

    #[test]
    fn disconnect_bound_examples() {
        assert!((disconnect_bound(5, 1, 2, 0.0, None).unwrap().value - 0.04).abs() < 1e-12);
        let v = disconnect_bound(5, 2, 1, 0.1, None).unwrap().value;
        assert!((v - 0.4f64.exp() / 10.0).abs() < 1e-12);
        assert!((v - 0.14918).abs() < 1e-5);
        for n in 2..=12usize {
            for s in 1..n {
                let c = statrs::function::factorial::binomial(n as u64, s as u64);
                let v = disconnect_bound(n, s, 3, 0.0, None).unwrap().value;
                assert!((v - c.powi(-3)).abs() < 1e-12 * c.powi(-3));
            }
        }
        assert!(disconnect_bound(5, 0, 1, 0.0, None).is_err());
        assert!(disconnect_bound(5, 5, 1, 0.0, None).is_err());
        assert!(disconnect_bound(5, 2, 1, 0.0, Some(3)).is_err());
        let k_only = disconnect_bound(6, 3, 1, 0.1, Some(0)).unwrap();
        assert!(k_only.value <= 1.0);
    }

    #[test]
    fn disconnect_prob_examples() {
        let u = empirical_disconnect_prob(&ShufflerModel::uniform(5), &[0], 2, DisconnectMode::Exact).unwrap();
        assert!((u.value - 0.04).abs() < 1e-12);
        let id = ShufflerModel::point_mass(Permutation::identity(4));
        assert_eq!(empirical_disconnect_prob(&id, &[1, 2], 3, DisconnectMode::Exact).unwrap().value, 1.0);
        let cm = ShufflerModel::cayley_mallows(4, 0.2);
        let e = empirical_disconnect_prob(&cm, &[0, 1], 1, DisconnectMode::Exact).unwrap();
        assert!(e.value <= disconnect_bound(4, 2, 1, 0.2, None).unwrap().value + BOUND_TOLERANCE);
        let mc = empirical_disconnect_prob(
            &ShufflerModel::uniform(5),
            &[0],
            2,
            DisconnectMode::MonteCarlo { trials: 100_000, seed: 1 },
        )
        .unwrap();
        assert!((mc.value - 0.04).abs() <= mc.half_width);
        let ts = ShufflerModel::timestamp_laplace(1.0, vec![0.0, 0.5, 1.0]);
        assert!(empirical_disconnect_prob(&ts, &[0], 1, DisconnectMode::Exact).is_err());
    }

    #[test]
    fn disconnect_bound_dominates_exact() {
        for n in 2..=5 {
            for m in 1..=3 {
                for (model, gamma) in [
                    (ShufflerModel::uniform(n), 0.0),
                    (ShufflerModel::cayley_mallows(n, 0.2), 0.2),
                    (ShufflerModel::cayley_mallows(n, 0.1), 0.2),
                ] {
                    for s in subsets(n) {
                        let exact = empirical_disconnect_prob(&model, &s, m, DisconnectMode::Exact).unwrap();
                        let bound = disconnect_bound(n, s.len(), m, gamma, None).unwrap();
                        assert!(exact.value <= bound.value + BOUND_TOLERANCE, "{model:?} {s:?} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn component_bound_examples() {
        assert!((component_bound(19, 1, 8, 0.0).unwrap().value - 1.0).abs() < 1e-12);
        let v = component_bound(19, 2, 8, 0.0).unwrap().value;
        assert!((v - (std::f64::consts::E / 19.0).powf(7.0 / 32.0)).abs() < 1e-12);
        assert!((v - 0.6535).abs() < 1e-4);
        // m = 8 is below 8e^{0.2} ≈ 9.77.
        assert!(matches!(component_bound(19, 2, 8, 0.05), Err(Error::Precondition(_))));
        let vac = component_bound(19, 2, 10, 0.05).unwrap();
        let oracle = 2.0 / 2.0 * (std::f64::consts::E / 19.0).powf(9.0 / (32.0 * 0.2f64.exp())) * 0.9f64.exp();
        assert!((vac.value - oracle).abs() < 1e-12);
        assert!(vac.vacuous);
        assert!(component_bound(18, 2, 8, 0.0).is_err());
        assert!(component_bound(19, 20, 8, 0.0).is_err());
    }

    #[test]
    fn q_power_bound_examples() {
        let r = q_power_expectation_bound(19, 86, 166, 0.0, None).unwrap();
        let oracle = 166.0 + 3.0 * 166f64.powi(2) * (std::f64::consts::E / 19.0).powf(85.0 / 32.0);
        assert!((r.value - oracle).abs() < 1e-9);
        assert!((r.value - 638.0).abs() < 1.0, "{}", r.value);
        assert!(r.estimate.is_none());
        let err = q_power_expectation_bound(19, 85, 166, 0.0, None).unwrap_err();
        assert!(matches!(&err, Error::Precondition(msg) if msg.contains("q <=")), "{err}");
    }

    #[test]
    fn q_power_companion() {
        let id = ShufflerModel::point_mass(Permutation::identity(19));
        let r = q_power_expectation_bound(
            19,
            86,
            166,
            0.0,
            Some(QPowerCompanion { model: &id, trials: 10, seed: 0, composed: false }),
        )
        .unwrap();
        let est = r.estimate.unwrap();
        assert!((est.value / 166f64.powi(19) - 1.0).abs() < 1e-12);
        assert_eq!(r.estimate_within_bound(), Some(false));
        assert!(r.note.unwrap().contains("not"));

        let u = ShufflerModel::uniform(19);
        let r = q_power_expectation_bound(
            19,
            86,
            166,
            0.0,
            Some(QPowerCompanion { model: &u, trials: 2000, seed: 0, composed: true }),
        )
        .unwrap();
        assert_eq!(r.estimate_within_bound(), Some(true));
        assert!(r.note.is_none());
    }
}
