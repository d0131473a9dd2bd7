//! Exact output laws of the split-and-mix protocol on tiny instances.
//!
//! An analyst view is a vector in `𝔾^{mn}`, indexed by
//! `Σ_{j,i} v[j][i]·q^{j·n+i}` (round `j`, slot `i`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldModulus, FieldVec};
use crate::perm::{enumerate_permutations_capped, Permutation, DEFAULT_ENUMERATION_CAP};
use crate::shuffler::{composed_round_model, ShufflerModel};

use super::graph::components_of;

/// Largest `q^{mn}` for which laws are materialized.
pub const DEFAULT_EXACT_CAP: u128 = 1_000_000;

/// Largest number of round tuples enumerated for `E[q^{C(G)−mn}]`.
const ROUND_TUPLE_CAP: u128 = 10_000_000;

/// A probability vector over all analyst views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactLaw {
    pub n: usize,
    pub m: usize,
    pub q: u64,
    pub probs: Vec<f64>,
}

impl ExactLaw {
    /// Index of the view with `view[j][i]` in round `j`, slot `i`.
    pub fn index_of(&self, view: &[Vec<u64>]) -> usize {
        let mut idx = 0usize;
        for col in view.iter().rev() {
            for &v in col.iter().rev() {
                idx = idx * self.q as usize + v as usize;
            }
        }
        idx
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn collision_prob(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn tvd(&self, other: &ExactLaw) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

fn checked_pow(base: u128, exp: usize, cap: u128) -> Result<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc > cap {
            return Err(Error::ExactCap { required: acc, cap });
        }
    }
    Ok(acc)
}

/// Shared setup for one `(n, m, q, model)` instance.
struct Engine {
    n: usize,
    m: usize,
    q: FieldModulus,
    /// Permutations with positive probability in one round.
    support: Vec<(Permutation, f64)>,
    views: usize,
}

impl Engine {
    fn new(n: usize, m: usize, q: FieldModulus, model: &ShufflerModel, cap: u128) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidCount(format!("need n, m >= 1, got n={n}, m={m}")));
        }
        if model.n() != n {
            return Err(Error::SizeMismatch { expected: n, found: model.n() });
        }
        let views = checked_pow(u128::from(q.get()), m * n, cap)? as usize;
        let perms = enumerate_permutations_capped(n, DEFAULT_ENUMERATION_CAP)?;
        let law = model.exact_law()?;
        let support = perms.into_iter().zip(law).filter(|(_, w)| *w > 0.0).collect();
        Ok(Self { n, m, q, support, views })
    }

    fn law_for(&self, x: &[u64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let q = self.q.get();
        let free = n * (m - 1);
        let weight = (q as f64).powi(-(free as i32));
        let mut probs = vec![0.0; self.views];
        let mut shares = vec![0u64; free];
        let mut column = vec![0u64; n];
        let round_stride = (q as usize).pow(n as u32);
        loop {
            // Per-round distributions over column indices for this share matrix.
            let mut rounds: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
            for j in 0..m {
                for i in 0..n {
                    column[i] = if j + 1 < m {
                        shares[i * (m - 1) + j]
                    } else {
                        let partial = self.q.sum(shares[i * (m - 1)..(i + 1) * (m - 1)].iter().copied());
                        self.q.sub(x[i], partial)
                    };
                }
                let mut dist: Vec<(usize, f64)> = Vec::with_capacity(self.support.len());
                for (pi, w) in &self.support {
                    let moved = pi.permute(&column).expect("same n");
                    let idx = moved.iter().rev().fold(0usize, |acc, &v| acc * q as usize + v as usize);
                    match dist.iter_mut().find(|(k, _)| *k == idx) {
                        Some(entry) => entry.1 += w,
                        None => dist.push((idx, *w)),
                    }
                }
                rounds.push(dist);
            }
            accumulate(&rounds, 0, 0, weight, round_stride, &mut probs);
            if !advance(&mut shares, q) {
                break;
            }
        }
        probs
    }
}

fn accumulate(rounds: &[Vec<(usize, f64)>], j: usize, offset: usize, w: f64, stride: usize, out: &mut [f64]) {
    if j == rounds.len() {
        out[offset] += w;
        return;
    }
    let scale = stride.pow(j as u32);
    for &(idx, p) in &rounds[j] {
        accumulate(rounds, j + 1, offset + idx * scale, w * p, stride, out);
    }
}

/// Odometer increment; false after the last tuple.
fn advance(digits: &mut [u64], base: u64) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn all_inputs(n: usize, q: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut x = vec![0u64; n];
    loop {
        out.push(x.clone());
        if !advance(&mut x, q) {
            return out;
        }
    }
}

/// The exact law of the analyst view for input `x` with `m` messages per
/// player and rounds drawn from `model`.
pub fn exact_protocol_distribution(x: &FieldVec, m: usize, model: &ShufflerModel) -> Result<ExactLaw> {
    exact_protocol_distribution_with_cap(x, m, model, DEFAULT_EXACT_CAP)
}

pub fn exact_protocol_distribution_with_cap(
    x: &FieldVec,
    m: usize,
    model: &ShufflerModel,
    cap: u128,
) -> Result<ExactLaw> {
    let engine = Engine::new(x.len(), m, x.modulus(), model, cap)?;
    Ok(ExactLaw {
        n: x.len(),
        m,
        q: x.modulus().get(),
        probs: engine.law_for(x.values()),
    })
}

/// `Σ_v P[P(x) = v]²`.
pub fn exact_collision_prob(x: &FieldVec, m: usize, model: &ShufflerModel) -> Result<f64> {
    Ok(exact_protocol_distribution(x, m, model)?.collision_prob())
}

/// Worst and average TVD over same-sum input pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdSummary {
    pub worst: f64,
    pub worst_pair: (Vec<u64>, Vec<u64>),
    /// Mean over ordered pairs `(x, x′)` with equal sums, `x = x′` included,
    /// which is the uniform same-sum pair distribution.
    pub average: f64,
    pub pairs: usize,
}

/// All laws for every input in `𝔾^n`, indexed in odometer order.
struct AllLaws {
    inputs: Vec<Vec<u64>>,
    laws: Vec<Vec<f64>>,
    q: FieldModulus,
}

impl AllLaws {
    fn new(n: usize, m: usize, q: u64, model: &ShufflerModel, cap: u128) -> Result<Self> {
        let q = FieldModulus::new(q)?;
        checked_pow(u128::from(q.get()), n, cap)?;
        let engine = Engine::new(n, m, q, model, cap)?;
        let inputs = all_inputs(n, q.get());
        let laws = inputs.iter().map(|x| engine.law_for(x)).collect();
        Ok(Self { inputs, laws, q })
    }

    fn index(&self, x: &[u64]) -> usize {
        x.iter().rev().fold(0usize, |acc, &v| acc * self.q.get() as usize + v as usize)
    }

    fn tvd(&self, a: usize, b: usize) -> f64 {
        0.5 * self.laws[a].iter().zip(&self.laws[b]).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    fn sum(&self, i: usize) -> u64 {
        self.q.sum(self.inputs[i].iter().copied())
    }

    fn summary(&self) -> TvdSummary {
        let mut worst = 0.0f64;
        let mut worst_pair = (self.inputs[0].clone(), self.inputs[0].clone());
        let mut total = 0.0;
        let mut pairs = 0usize;
        for a in 0..self.inputs.len() {
            for b in 0..self.inputs.len() {
                if self.sum(a) != self.sum(b) {
                    continue;
                }
                let d = if a == b { 0.0 } else { self.tvd(a, b) };
                total += d;
                pairs += 1;
                if d > worst {
                    worst = d;
                    worst_pair = (self.inputs[a].clone(), self.inputs[b].clone());
                }
            }
        }
        TvdSummary {
            worst,
            worst_pair,
            average: total / pairs as f64,
            pairs,
        }
    }

    /// `E_X[TVD(P(X), P(X − d))]` with `X` uniform on `𝔾^n`.
    fn average_for_difference(&self, d: &[u64]) -> f64 {
        let total: f64 = (0..self.inputs.len())
            .map(|a| {
                let shifted: Vec<u64> = self.inputs[a].iter().zip(d).map(|(&x, &dv)| self.q.sub(x, dv)).collect();
                self.tvd(a, self.index(&shifted))
            })
            .sum();
        total / self.inputs.len() as f64
    }

    fn average_collision(&self) -> f64 {
        let total: f64 = self.laws.iter().map(|l| l.iter().map(|p| p * p).sum::<f64>()).sum();
        total / self.laws.len() as f64
    }
}

/// Exact worst-case and average-case TVD between outputs on same-sum inputs.
pub fn exact_tvd_same_sum(n: usize, m: usize, q: u64, model: &ShufflerModel) -> Result<TvdSummary> {
    Ok(AllLaws::new(n, m, q, model, DEFAULT_EXACT_CAP)?.summary())
}

/// `E[q^{C(G)−mn}]` with each of the `m` rounds drawn independently from
/// `round_model`.
pub fn exact_q_power_expectation(round_model: &ShufflerModel, m: usize, q: u64) -> Result<f64> {
    let n = round_model.n();
    let perms = enumerate_permutations_capped(n, DEFAULT_ENUMERATION_CAP)?;
    let law = round_model.exact_law()?;
    let support: Vec<(Permutation, f64)> = perms.into_iter().zip(law).filter(|(_, w)| *w > 0.0).collect();
    checked_pow(support.len() as u128, m, ROUND_TUPLE_CAP)?;
    let mut digits = vec![0u64; m];
    let mut total = 0.0;
    let qf = q as f64;
    loop {
        let rounds: Vec<Permutation> = digits.iter().map(|&d| support[d as usize].0.clone()).collect();
        let w: f64 = digits.iter().map(|&d| support[d as usize].1).product();
        let c = components_of(&rounds, n) as i32;
        total += w * qf.powi(c - (m * n) as i32);
        if !advance(&mut digits, support.len() as u64) {
            return Ok(total);
        }
    }
}

/// Exact check of the TVD → collision → component chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaChainReport {
    pub n: usize,
    pub m: usize,
    pub q: u64,
    pub average_tvd: f64,
    pub worst_tvd: f64,
    /// `E_X[Σ_v P[P(X)=v]²]` with `X` uniform on `𝔾^n`.
    pub collision_prob: f64,
    /// `√(q^{mn−1}·collision_prob − 1)`.
    pub collision_bound: f64,
    /// `E[q^{C(G)−mn}]` over rounds drawn from `S⁻¹∘S′`.
    pub q_power_expectation: f64,
    pub tvd_le_collision_bound: bool,
    pub collision_le_q_power: bool,
}

impl LemmaChainReport {
    pub fn pass(&self) -> bool {
        self.tvd_le_collision_bound && self.collision_le_q_power
    }
}

const CHAIN_TOLERANCE: f64 = 1e-9;

pub fn lemma_chain(n: usize, m: usize, q: u64, model: &ShufflerModel) -> Result<LemmaChainReport> {
    let all = AllLaws::new(n, m, q, model, DEFAULT_EXACT_CAP)?;
    let summary = all.summary();
    let collision_prob = all.average_collision();
    let scale = (q as f64).powi((m * n) as i32 - 1);
    let collision_bound = (scale * collision_prob - 1.0).max(0.0).sqrt();
    let q_power_expectation = exact_q_power_expectation(&composed_round_model(model, model)?, m, q)?;
    Ok(LemmaChainReport {
        n,
        m,
        q,
        average_tvd: summary.average,
        worst_tvd: summary.worst,
        collision_prob,
        collision_bound,
        q_power_expectation,
        tvd_le_collision_bound: summary.average <= collision_bound + CHAIN_TOLERANCE,
        collision_le_q_power: collision_prob <= q_power_expectation + CHAIN_TOLERANCE,
    })
}

/// Comparison of worst-case security with `m + 1` messages against
/// average-case security with `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstAverageReport {
    pub n: usize,
    pub m: usize,
    pub q: u64,
    /// Worst same-sum TVD of the `(m+1)`-message protocol.
    pub worst_next: f64,
    pub worst_pair: (Vec<u64>, Vec<u64>),
    /// Average same-sum TVD of the `m`-message protocol.
    pub average: f64,
    /// `worst_next <= average`.
    pub holds: bool,
    /// For every pair `(x, x′)` of the larger protocol, its TVD is at most
    /// `E_X[TVD(P_m(X), P_m(X − (x − x′)))]`.
    pub holds_per_difference: bool,
    /// Largest `TVD_{m+1}(x, x′) − E_X[TVD_m(X, X − (x − x′))]`.
    pub max_per_difference_gap: f64,
}

pub fn worst_average_check(n: usize, m: usize, q: u64, model: &ShufflerModel) -> Result<WorstAverageReport> {
    let small = AllLaws::new(n, m, q, model, DEFAULT_EXACT_CAP)?;
    let large = AllLaws::new(n, m + 1, q, model, DEFAULT_EXACT_CAP)?;
    let average = small.summary().average;
    let big = large.summary();
    let modulus = small.q;
    let mut gap = f64::NEG_INFINITY;
    for a in 0..large.inputs.len() {
        for b in 0..large.inputs.len() {
            if large.sum(a) != large.sum(b) {
                continue;
            }
            let d: Vec<u64> = large.inputs[a]
                .iter()
                .zip(&large.inputs[b])
                .map(|(&x, &y)| modulus.sub(x, y))
                .collect();
            let lhs = if a == b { 0.0 } else { large.tvd(a, b) };
            gap = gap.max(lhs - small.average_for_difference(&d));
        }
    }
    Ok(WorstAverageReport {
        n,
        m,
        q,
        worst_next: big.worst,
        worst_pair: big.worst_pair,
        average,
        holds: big.worst <= average + CHAIN_TOLERANCE,
        holds_per_difference: gap <= CHAIN_TOLERANCE,
        max_per_difference_gap: gap,
    })
}
