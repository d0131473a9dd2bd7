//! Distributions over permutations.
//!
//! A [`ShufflerModel`] describes a law on `Π`. Sampling goes through a
//! [`Sampler`], which precomputes whatever tables the model needs, so Monte
//! Carlo loops pay the setup cost once. Exact laws are available for every
//! variant except [`ShufflerModel::TimestampLaplace`], whose permutation pmf
//! has no closed form.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::perm::{
    enumerate_permutations_capped, factorial, swap_distance, Permutation, DEFAULT_ENUMERATION_CAP,
};
use crate::rng::stream_rng;

/// Arrival-time offsets for the timestamp shuffler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Offsets {
    Explicit(Vec<f64>),
    Pattern(OffsetPattern),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetPattern {
    /// Every player targets the same instant.
    AllEqual,
    /// Player `i` targets `i / (n − 1)`.
    Equispaced,
}

impl Offsets {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        let t = match self {
            Offsets::Explicit(t) => {
                if t.len() != n {
                    return Err(Error::SizeMismatch { expected: n, found: t.len() });
                }
                t.clone()
            }
            Offsets::Pattern(OffsetPattern::AllEqual) => vec![0.0; n],
            Offsets::Pattern(OffsetPattern::Equispaced) => {
                if n <= 1 {
                    vec![0.0; n]
                } else {
                    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
                }
            }
        };
        if let Some(v) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("offset {v} lies outside [0, 1]")));
        }
        Ok(t)
    }
}

/// A distribution over permutations of `[n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ShufflerModel {
    /// The perfect shuffler.
    Uniform { n: usize },
    /// `P[π] ∝ exp(−dispersion · Swap(π, center))`; the center defaults to
    /// the identity.
    CayleyMallows {
        n: usize,
        dispersion: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Permutation>,
    },
    /// Player `i` arrives at `t_i + τ_i` with `τ_i ~ Laplace(2/γ)`; the
    /// output maps each player to its arrival rank.
    TimestampLaplace { n: usize, gamma: f64, offsets: Offsets },
    /// Always the same permutation.
    PointMass { permutation: Permutation },
    /// `outer ∘ inner` with independent draws.
    Composed {
        outer: Box<ShufflerModel>,
        inner: Box<ShufflerModel>,
    },
    /// The inverse of a draw from `inner`.
    Inverse { inner: Box<ShufflerModel> },
}

impl ShufflerModel {
    pub fn uniform(n: usize) -> Self {
        Self::Uniform { n }
    }

    pub fn cayley_mallows(n: usize, dispersion: f64) -> Self {
        Self::CayleyMallows { n, dispersion, center: None }
    }

    pub fn cayley_mallows_centered(dispersion: f64, center: Permutation) -> Self {
        Self::CayleyMallows {
            n: center.len(),
            dispersion,
            center: Some(center),
        }
    }

    pub fn timestamp_laplace(gamma: f64, offsets: Vec<f64>) -> Self {
        Self::TimestampLaplace {
            n: offsets.len(),
            gamma,
            offsets: Offsets::Explicit(offsets),
        }
    }

    pub fn point_mass(permutation: Permutation) -> Self {
        Self::PointMass { permutation }
    }

    pub fn composed(outer: ShufflerModel, inner: ShufflerModel) -> Self {
        Self::Composed {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    pub fn inverse(inner: ShufflerModel) -> Self {
        Self::Inverse { inner: Box::new(inner) }
    }

    /// Number of elements permuted.
    pub fn n(&self) -> usize {
        match self {
            Self::Uniform { n } | Self::CayleyMallows { n, .. } | Self::TimestampLaplace { n, .. } => *n,
            Self::PointMass { permutation } => permutation.len(),
            Self::Composed { inner, .. } | Self::Inverse { inner } => inner.n(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { .. } | Self::PointMass { .. } => Ok(()),
            Self::CayleyMallows { n, dispersion, center } => {
                if !(dispersion.is_finite() && *dispersion >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "Cayley-Mallows dispersion must be finite and >= 0, got {dispersion}"
                    )));
                }
                if let Some(c) = center {
                    if c.len() != *n {
                        return Err(Error::SizeMismatch { expected: *n, found: c.len() });
                    }
                }
                Ok(())
            }
            Self::TimestampLaplace { n, gamma, offsets } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "timestamp shuffler needs gamma > 0, got {gamma}"
                    )));
                }
                offsets.resolve(*n).map(|_| ())
            }
            Self::Composed { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                if outer.n() != inner.n() {
                    return Err(Error::SizeMismatch {
                        expected: inner.n(),
                        found: outer.n(),
                    });
                }
                Ok(())
            }
            Self::Inverse { inner } => inner.validate(),
        }
    }

    /// Whether [`exact_law`](Self::exact_law) can be computed.
    pub fn has_exact_pmf(&self) -> bool {
        match self {
            Self::TimestampLaplace { .. } => false,
            Self::Composed { outer, inner } => outer.has_exact_pmf() && inner.has_exact_pmf(),
            Self::Inverse { inner } => inner.has_exact_pmf(),
            _ => true,
        }
    }

    /// The distortion this model is built (or claimed) to satisfy.
    ///
    /// Point masses on `n >= 2` elements are not γ-imperfect for any finite
    /// γ. For compositions of independent draws either factor's parameter
    /// suffices, so the smaller one is reported.
    pub fn nominal_gamma(&self) -> f64 {
        match self {
            Self::Uniform { .. } => 0.0,
            Self::CayleyMallows { n, dispersion, .. } => {
                if *n <= 1 {
                    0.0
                } else {
                    *dispersion
                }
            }
            Self::TimestampLaplace { gamma, .. } => *gamma,
            Self::PointMass { permutation } => {
                if permutation.len() <= 1 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Composed { outer, inner } => outer.nominal_gamma().min(inner.nominal_gamma()),
            Self::Inverse { inner } => inner.nominal_gamma(),
        }
    }

    /// A sampler with precomputed tables, using the default enumeration cap
    /// for the exhaustive Cayley-Mallows path.
    pub fn sampler(&self) -> Result<Sampler> {
        self.sampler_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    pub fn sampler_with_cap(&self, cap: usize) -> Result<Sampler> {
        self.validate()?;
        self.build_sampler(cap)
    }

    fn build_sampler(&self, cap: usize) -> Result<Sampler> {
        Ok(match self {
            Self::Uniform { n } => Sampler::Uniform(*n),
            Self::CayleyMallows { n, dispersion, center } => {
                let center = center.clone().filter(|c| !c.is_identity());
                if *n <= cap {
                    let perms = enumerate_permutations_capped(*n, cap)?;
                    let mut acc = 0.0;
                    let cdf = perms
                        .iter()
                        .map(|p| {
                            acc += (-dispersion * (n - p.cycle_count()) as f64).exp();
                            acc
                        })
                        .collect();
                    Sampler::MallowsTable { center, perms, cdf }
                } else {
                    Sampler::MallowsInsertion {
                        n: *n,
                        weight: (-dispersion).exp(),
                        center,
                    }
                }
            }
            Self::TimestampLaplace { n, gamma, offsets } => Sampler::Timestamp {
                offsets: offsets.resolve(*n)?,
                scale: 2.0 / gamma,
            },
            Self::PointMass { permutation } => Sampler::Point(permutation.clone()),
            Self::Composed { outer, inner } => {
                Sampler::Composed(Box::new(outer.build_sampler(cap)?), Box::new(inner.build_sampler(cap)?))
            }
            Self::Inverse { inner } => Sampler::Inverse(Box::new(inner.build_sampler(cap)?)),
        })
    }

    /// `P[S = π]`.
    ///
    /// Uniform, Cayley-Mallows and point-mass models are evaluated in closed
    /// form; compositions and inverses go through the exact law and so need
    /// `n` within the enumeration cap.
    pub fn exact_pmf(&self, pi: &Permutation) -> Result<f64> {
        self.validate()?;
        if pi.len() != self.n() {
            return Err(Error::SizeMismatch { expected: self.n(), found: pi.len() });
        }
        match self {
            Self::Uniform { n } => Ok(1.0 / factorial(*n) as f64),
            Self::CayleyMallows { n, dispersion, center } => {
                let d = match center {
                    Some(c) => swap_distance(pi, c)?,
                    None => n - pi.cycle_count(),
                };
                Ok((-dispersion * d as f64).exp() / mallows_normalizer(*n, *dispersion))
            }
            Self::PointMass { permutation } => Ok(if pi == permutation { 1.0 } else { 0.0 }),
            Self::TimestampLaplace { .. } => Err(timestamp_unsupported()),
            Self::Composed { .. } | Self::Inverse { .. } => Ok(self.exact_law()?[pi.lex_rank()]),
        }
    }

    /// The full pmf, indexed by lexicographic rank (the order of
    /// [`enumerate_permutations`](crate::perm::enumerate_permutations)).
    pub fn exact_law(&self) -> Result<Vec<f64>> {
        self.exact_law_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    pub fn exact_law_with_cap(&self, cap: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let perms = enumerate_permutations_capped(self.n(), cap)?;
        self.law_over(&perms)
    }

    fn law_over(&self, perms: &[Permutation]) -> Result<Vec<f64>> {
        let size = perms.len();
        match self {
            Self::Uniform { .. } => Ok(vec![1.0 / size as f64; size]),
            Self::CayleyMallows { n, dispersion, center } => {
                let weights: Vec<f64> = perms
                    .iter()
                    .map(|p| {
                        let d = match center {
                            Some(c) => swap_distance(p, c).expect("sizes validated"),
                            None => n - p.cycle_count(),
                        };
                        (-dispersion * d as f64).exp()
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                Ok(weights.into_iter().map(|w| w / total).collect())
            }
            Self::PointMass { permutation } => {
                let mut law = vec![0.0; size];
                law[permutation.lex_rank()] = 1.0;
                Ok(law)
            }
            Self::TimestampLaplace { .. } => Err(timestamp_unsupported()),
            Self::Composed { outer, inner } => {
                let lo = outer.law_over(perms)?;
                let li = inner.law_over(perms)?;
                let outer_support: Vec<usize> = (0..size).filter(|&i| lo[i] > 0.0).collect();
                let mut law = vec![0.0; size];
                for (b, &pb) in li.iter().enumerate() {
                    if pb == 0.0 {
                        continue;
                    }
                    for &a in &outer_support {
                        let r = perms[a].after(&perms[b])?.lex_rank();
                        law[r] += lo[a] * pb;
                    }
                }
                Ok(law)
            }
            Self::Inverse { inner } => {
                let li = inner.law_over(perms)?;
                let mut law = vec![0.0; size];
                for (i, p) in perms.iter().enumerate() {
                    law[p.inverse().lex_rank()] = li[i];
                }
                Ok(law)
            }
        }
    }
}

fn timestamp_unsupported() -> Error {
    Error::UnsupportedModel("the timestamp shuffler has no closed-form pmf".into())
}

/// `Σ_π exp(−θ·(n − cycles(π))) = Π_{j=1}^{n−1} (1 + j·e^{−θ})`.
pub fn mallows_normalizer(n: usize, dispersion: f64) -> f64 {
    let w = (-dispersion).exp();
    (1..n).map(|j| 1.0 + j as f64 * w).product()
}

/// A model prepared for repeated sampling.
#[derive(Clone, Debug)]
pub enum Sampler {
    Uniform(usize),
    MallowsTable {
        center: Option<Permutation>,
        perms: Vec<Permutation>,
        cdf: Vec<f64>,
    },
    MallowsInsertion {
        n: usize,
        weight: f64,
        center: Option<Permutation>,
    },
    Timestamp { offsets: Vec<f64>, scale: f64 },
    Point(Permutation),
    Composed(Box<Sampler>, Box<Sampler>),
    Inverse(Box<Sampler>),
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        match self {
            Sampler::Uniform(n) => {
                let mut map: Vec<usize> = (0..*n).collect();
                map.shuffle(rng);
                Permutation::from_vec_unchecked(map)
            }
            Sampler::MallowsTable { center, perms, cdf } => {
                let u = rng.random::<f64>() * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|&c| c <= u).min(perms.len() - 1);
                recenter(center, &perms[i])
            }
            Sampler::MallowsInsertion { n, weight, center } => {
                // Feller coupling: element j opens a new cycle with weight 1
                // or is spliced after one of the j earlier elements with
                // weight e^{−θ} each, so P[τ] ∝ e^{−θ(n − cycles(τ))}.
                let mut map = vec![0usize; *n];
                for j in 0..*n {
                    let new_cycle = 1.0 / (1.0 + j as f64 * weight);
                    if rng.random::<f64>() < new_cycle {
                        map[j] = j;
                    } else {
                        let k = rng.random_range(0..j);
                        map[j] = map[k];
                        map[k] = j;
                    }
                }
                recenter(center, &Permutation::from_vec_unchecked(map))
            }
            Sampler::Timestamp { offsets, scale } => {
                let arrivals: Vec<f64> = offsets
                    .iter()
                    .map(|t| {
                        let a: f64 = rng.sample(Exp1);
                        let b: f64 = rng.sample(Exp1);
                        t + scale * (a - b)
                    })
                    .collect();
                let mut order: Vec<usize> = (0..offsets.len()).collect();
                // Ties have probability zero; the stable sort breaks them by index.
                order.sort_by(|&i, &j| arrivals[i].total_cmp(&arrivals[j]));
                let mut map = vec![0usize; offsets.len()];
                for (rank, &player) in order.iter().enumerate() {
                    map[player] = rank;
                }
                Permutation::from_vec_unchecked(map)
            }
            Sampler::Point(p) => p.clone(),
            Sampler::Composed(outer, inner) => {
                let b = inner.sample(rng);
                let a = outer.sample(rng);
                a.after(&b).expect("validated sizes")
            }
            Sampler::Inverse(inner) => inner.sample(rng).inverse(),
        }
    }
}

fn recenter(center: &Option<Permutation>, tau: &Permutation) -> Permutation {
    match center {
        // Swap(c∘τ, c) = Swap(τ, id) by left invariance.
        Some(c) => c.after(tau).expect("validated sizes"),
        None => tau.clone(),
    }
}

/// One draw from `model`.
pub fn sample<R: Rng + ?Sized>(model: &ShufflerModel, rng: &mut R) -> Result<Permutation> {
    Ok(model.sampler()?.sample(rng))
}

/// Per-round permutations of an `m`-parallel shuffle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPermutations {
    rounds: Vec<Permutation>,
}

impl RoundPermutations {
    pub fn new(rounds: Vec<Permutation>) -> Result<Self> {
        let Some(first) = rounds.first() else {
            return Err(Error::InvalidCount("at least one round is required".into()));
        };
        let n = first.len();
        if let Some(bad) = rounds.iter().find(|p| p.len() != n) {
            return Err(Error::SizeMismatch { expected: n, found: bad.len() });
        }
        Ok(Self { rounds })
    }

    pub fn n(&self) -> usize {
        self.rounds[0].len()
    }

    pub fn m(&self) -> usize {
        self.rounds.len()
    }

    pub fn rounds(&self) -> &[Permutation] {
        &self.rounds
    }
}

impl Sampler {
    /// `m` independent draws; round `j` reads sub-stream `j` of `seed`.
    pub fn sample_rounds(&self, m: usize, seed: u64) -> Result<RoundPermutations> {
        if m == 0 {
            return Err(Error::InvalidCount("m must be at least 1".into()));
        }
        let rounds = (0..m)
            .map(|j| self.sample(&mut stream_rng(seed, j as u64)))
            .collect();
        RoundPermutations::new(rounds)
    }
}

/// `m` independent draws from `model`, one per message round.
pub fn sample_parallel(model: &ShufflerModel, m: usize, seed: u64) -> Result<RoundPermutations> {
    model.sampler()?.sample_rounds(m, seed)
}

/// The law `S⁻¹ ∘ S′` of one round of the two-execution comparison.
pub fn composed_round_model(s: &ShufflerModel, s_prime: &ShufflerModel) -> Result<ShufflerModel> {
    if s.n() != s_prime.n() {
        return Err(Error::SizeMismatch {
            expected: s.n(),
            found: s_prime.n(),
        });
    }
    Ok(ShufflerModel::composed(
        ShufflerModel::inverse(s.clone()),
        s_prime.clone(),
    ))
}

/// How to evaluate the imperfectness statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum VerifyMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Outcome of [`verify_imperfectness`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImperfectnessReport {
    /// `max ln(P[π]/P[π′]) / Swap(π, π′)` over ordered pairs.
    pub max_log_ratio_per_swap: f64,
    /// A pair attaining the maximum.
    pub witness: Option<(Permutation, Permutation)>,
    /// True when computed from empirical frequencies.
    pub estimate: bool,
    pub samples: Option<usize>,
}

/// Comparison slack for exact imperfectness checks.
pub const IMPERFECTNESS_TOLERANCE: f64 = 1e-9;

impl ImperfectnessReport {
    /// Whether the model is γ-imperfect according to this statistic.
    pub fn is_imperfect_at(&self, gamma: f64) -> bool {
        self.max_log_ratio_per_swap <= gamma + IMPERFECTNESS_TOLERANCE
    }
}

/// The smallest γ for which the model satisfies
/// `P[S=π] <= e^{γ·Swap(π,π′)} P[S=π′]` on every pair.
///
/// Exact mode needs an exact pmf. Monte Carlo mode applies the same
/// statistic to empirical frequencies; any unobserved permutation makes it
/// infinite, so it is only informative when `samples ≫ n!`.
pub fn verify_imperfectness(model: &ShufflerModel, mode: VerifyMode) -> Result<ImperfectnessReport> {
    model.validate()?;
    let n = model.n();
    let perms = enumerate_permutations_capped(n, DEFAULT_ENUMERATION_CAP)?;
    let (law, estimate, samples) = match mode {
        VerifyMode::Exact => {
            if !model.has_exact_pmf() {
                return Err(timestamp_unsupported());
            }
            (model.law_over(&perms)?, false, None)
        }
        VerifyMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidCount("at least one sample is required".into()));
            }
            let counts = empirical_counts(model, samples, seed)?;
            let law = counts.iter().map(|&c| c as f64 / samples as f64).collect();
            (law, true, Some(samples))
        }
    };
    let (max, witness) = max_log_ratio_per_swap(&perms, &law);
    Ok(ImperfectnessReport {
        max_log_ratio_per_swap: max,
        witness,
        estimate,
        samples,
    })
}

/// Sample counts per permutation (indexed by lexicographic rank); draw `i`
/// reads sub-stream `i` of `seed`.
pub fn empirical_counts(model: &ShufflerModel, samples: usize, seed: u64) -> Result<Vec<u64>> {
    let n = model.n();
    if n > DEFAULT_ENUMERATION_CAP {
        return Err(Error::EnumerationCap { n, cap: DEFAULT_ENUMERATION_CAP });
    }
    let sampler = model.sampler()?;
    Ok(par::histogram_trials(samples, factorial(n), |i| {
        sampler.sample(&mut stream_rng(seed, i as u64)).lex_rank()
    }))
}

fn max_log_ratio_per_swap(
    perms: &[Permutation],
    law: &[f64],
) -> (f64, Option<(Permutation, Permutation)>) {
    let mut best = 0.0f64;
    let mut witness = None;
    for (a, &pa) in law.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (b, &pb) in law.iter().enumerate() {
            if a == b {
                continue;
            }
            let ratio = if pb == 0.0 {
                f64::INFINITY
            } else {
                let d = swap_distance(&perms[a], &perms[b]).expect("same n");
                (pa / pb).ln() / d as f64
            };
            if ratio > best || (witness.is_none() && ratio >= best) {
                best = ratio;
                witness = Some((perms[a].clone(), perms[b].clone()));
            }
            if best == f64::INFINITY {
                return (best, witness);
            }
        }
    }
    (best, witness)
}
