//! The split-and-mix protocol, real and vector summation, and parameter
//! planning.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{choose_modulus, FieldModulus, FieldVec};
use crate::noise::{randomized_round, sample_polya, NoiseParams};
use crate::par;
use crate::rng::stream_rng;
use crate::shuffler::{RoundPermutations, Sampler, ShufflerModel};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Whether encoders add Polya noise. `Disabled` exists for deterministic tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    #[default]
    Enabled,
    Disabled,
}

/// `n × m` shares; row `i` holds the messages in slot `i` of each round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMatrix {
    modulus: FieldModulus,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl MessageMatrix {
    pub fn from_rows(modulus: FieldModulus, rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::InvalidCount("message matrix needs at least one row and column".into()));
        }
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::SizeMismatch { expected: m, found: row.len() });
            }
            data.extend(FieldVec::new(modulus, row)?.values());
        }
        Ok(Self { modulus, rows: n, cols: m, data })
    }

    pub fn modulus(&self) -> FieldModulus {
        self.modulus
    }

    /// Number of players (slots per round).
    pub fn n(&self) -> usize {
        self.rows
    }

    /// Messages per player (rounds).
    pub fn m(&self) -> usize {
        self.cols
    }

    pub fn get(&self, slot: usize, round: usize) -> u64 {
        self.data[slot * self.cols + round]
    }

    pub fn row(&self, slot: usize) -> &[u64] {
        &self.data[slot * self.cols..(slot + 1) * self.cols]
    }

    pub fn column(&self, round: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, round)).collect()
    }

    pub fn grand_total(&self) -> u64 {
        self.modulus.sum(self.data.iter().copied())
    }

    /// Each round's column moved by its permutation.
    pub fn shuffled(&self, rounds: &RoundPermutations) -> Result<Self> {
        if rounds.m() != self.cols {
            return Err(Error::SizeMismatch { expected: self.cols, found: rounds.m() });
        }
        if rounds.n() != self.rows {
            return Err(Error::SizeMismatch { expected: self.rows, found: rounds.n() });
        }
        let mut out = self.clone();
        for (j, pi) in rounds.rounds().iter().enumerate() {
            for (i, v) in pi.permute(&self.column(j))?.into_iter().enumerate() {
                out.data[i * self.cols + j] = v;
            }
        }
        Ok(out)
    }
}

/// Output of [`run_field_protocol`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    shuffled: MessageMatrix,
    rounds: RoundPermutations,
    inputs: FieldVec,
}

impl Transcript {
    /// What the analyst sees: the shuffled messages only.
    pub fn analyst_view(&self) -> &MessageMatrix {
        &self.shuffled
    }

    pub fn rounds(&self) -> &RoundPermutations {
        &self.rounds
    }

    /// The players' inputs; for debugging only.
    pub fn debug_inputs(&self) -> &FieldVec {
        &self.inputs
    }

    /// Writes the analyst view as CSV with 1-based `round,slot,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["round", "slot", "value"])?;
        for j in 0..self.shuffled.m() {
            for i in 0..self.shuffled.n() {
                w.serialize((j + 1, i + 1, self.shuffled.get(i, j)))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits `x` into `m` shares summing to `x` mod `q`: `m − 1` uniform
/// shares and a balancing residue.
pub fn split<R: Rng + ?Sized>(x: u64, m: usize, q: FieldModulus, rng: &mut R) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(Error::InvalidCount("m must be at least 1".into()));
    }
    if x >= q.get() {
        return Err(Error::Domain(format!("{x} is not reduced mod {}", q.get())));
    }
    let mut shares: Vec<u64> = (0..m - 1).map(|_| rng.random_range(0..q.get())).collect();
    let partial = q.sum(shares.iter().copied());
    shares.push(q.sub(x, partial));
    Ok(shares)
}

/// Row `i` is `split(inputs[i], m)`; rows are filled in order from `rng`.
pub fn split_inputs<R: Rng + ?Sized>(inputs: &FieldVec, m: usize, rng: &mut R) -> Result<MessageMatrix> {
    let q = inputs.modulus();
    let rows = inputs
        .values()
        .iter()
        .map(|&x| split(x, m, q, rng))
        .collect::<Result<Vec<_>>>()?;
    MessageMatrix::from_rows(q, rows)
}

/// Splits every input and shuffles each round with an independent draw.
pub fn run_field_protocol<R: Rng + ?Sized>(
    inputs: &FieldVec,
    m: usize,
    model: &ShufflerModel,
    rng: &mut R,
) -> Result<Transcript> {
    run_with_sampler(inputs, m, &model.sampler()?, model.n(), rng)
}

fn run_with_sampler<R: Rng + ?Sized>(
    inputs: &FieldVec,
    m: usize,
    sampler: &Sampler,
    model_n: usize,
    rng: &mut R,
) -> Result<Transcript> {
    if inputs.is_empty() {
        return Err(Error::InvalidCount("at least one player is required".into()));
    }
    if model_n != inputs.len() {
        return Err(Error::SizeMismatch { expected: inputs.len(), found: model_n });
    }
    let matrix = split_inputs(inputs, m, rng)?;
    let rounds = RoundPermutations::new((0..m).map(|_| sampler.sample(rng)).collect())?;
    Ok(Transcript {
        shuffled: matrix.shuffled(&rounds)?,
        rounds,
        inputs: inputs.clone(),
    })
}

/// Sum of all shuffled messages mod `q`.
pub fn aggregate(t: &Transcript) -> u64 {
    t.shuffled.grand_total()
}

/// `z mod q` for a possibly negative encoding.
pub fn wrap(z: i64, q: FieldModulus) -> u64 {
    q.reduce_signed(i128::from(z))
}

/// `y + Polya − Polya` with `y = randomized_round(x, √n)`, reduced mod
/// `choose_modulus(n)`.
pub fn encode_real<R: Rng + ?Sized>(
    x: f64,
    epsilon: f64,
    n: usize,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<u64> {
    let q = choose_modulus(n)?;
    let p = (n as f64).sqrt();
    let z = match noise {
        NoiseMode::Disabled => randomized_round(x, p, rng)? as i64,
        NoiseMode::Enabled => {
            let params = NoiseParams::for_players(n, epsilon)?;
            let y = randomized_round(x, p, rng)? as i64;
            let plus = sample_polya(params.r, params.alpha, rng)? as i64;
            let minus = sample_polya(params.r, params.alpha, rng)? as i64;
            y + plus - minus
        }
    };
    Ok(wrap(z, q))
}

/// `Z/p` if `Z <= 3np/2`, otherwise `(Z − q)/p`, with `p = √n`.
pub fn decode_sum(z: u64, n: usize) -> Result<f64> {
    let q = choose_modulus(n)?;
    if z >= q.get() {
        return Err(Error::Domain(format!("{z} is not reduced mod {}", q.get())));
    }
    let p = (n as f64).sqrt();
    // Z <= 3n√n/2  ⇔  4Z² <= 9n³, compared exactly.
    let n3 = (n as u128).pow(3);
    let lower_window = 4 * (z as u128).pow(2) <= 9 * n3;
    Ok(if lower_window {
        z as f64 / p
    } else {
        (z as f64 - q.get() as f64) / p
    })
}

/// Result of one real-summation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummationOutcome {
    pub estimate: f64,
    pub true_sum: f64,
    pub abs_error: f64,
}

/// Encodes each input, runs the protocol with `m` messages, and decodes.
pub fn run_real_summation<R: Rng + ?Sized>(
    xs: &[f64],
    epsilon: f64,
    model: &ShufflerModel,
    m: usize,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<SummationOutcome> {
    real_summation_with(xs, epsilon, &model.sampler()?, model.n(), m, noise, rng)
}

fn real_summation_with<R: Rng + ?Sized>(
    xs: &[f64],
    epsilon: f64,
    sampler: &Sampler,
    model_n: usize,
    m: usize,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<SummationOutcome> {
    let n = xs.len();
    let q = choose_modulus(n)?;
    let encoded = xs
        .iter()
        .map(|&x| encode_real(x, epsilon, n, noise, rng))
        .collect::<Result<Vec<_>>>()?;
    let inputs = FieldVec::new(q, encoded)?;
    let transcript = run_with_sampler(&inputs, m, sampler, model_n, rng)?;
    let estimate = decode_sum(aggregate(&transcript), n)?;
    let true_sum: f64 = xs.iter().sum();
    Ok(SummationOutcome {
        estimate,
        true_sum,
        abs_error: (estimate - true_sum).abs(),
    })
}

/// Independent repetitions of [`run_real_summation`]; trial `t` reads
/// sub-stream `t` of `seed`.
pub fn real_summation_trials(
    xs: &[f64],
    epsilon: f64,
    model: &ShufflerModel,
    m: usize,
    noise: NoiseMode,
    trials: usize,
    seed: u64,
) -> Result<Vec<SummationOutcome>> {
    let sampler = model.sampler()?;
    // Surface configuration errors before fanning out.
    real_summation_with(xs, epsilon, &sampler, model.n(), m, noise, &mut stream_rng(seed, 0))?;
    par::map_trials(trials, |t| {
        real_summation_with(xs, epsilon, &sampler, model.n(), m, noise, &mut stream_rng(seed, t as u64))
    })
    .into_iter()
    .collect()
}

/// How many messages each player sends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessagePlan {
    Fixed(usize),
    /// Smallest `m` reaching the security parameter implied by the
    /// per-coordinate `(ε, δ)` at the given distortion.
    Planned { gamma: f64 },
}

/// Output of [`run_vector_summation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorOutcome {
    pub estimates: Vec<f64>,
    pub true_sums: Vec<f64>,
    pub epsilon_per_coordinate: f64,
    pub delta_per_coordinate: f64,
    pub m: usize,
}

/// Per-coordinate real summation under basic composition: each of the `d`
/// coordinates runs at `ε/d`, and `δ/d` feeds message planning.
pub fn run_vector_summation<R: Rng + ?Sized>(
    rows: &[Vec<f64>],
    epsilon: f64,
    delta: f64,
    model: &ShufflerModel,
    plan: MessagePlan,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<VectorOutcome> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidCount("at least one player is required".into()));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::InvalidCount("dimension d must be at least 1".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::SizeMismatch { expected: d, found: bad.len() });
    }
    let eps_c = epsilon / d as f64;
    let delta_c = delta / d as f64;
    let m = match plan {
        MessagePlan::Fixed(m) => m,
        MessagePlan::Planned { gamma } => required_messages(n, gamma, f64::from(sigma_from_dp(eps_c, delta_c)?))?,
    };
    let sampler = model.sampler()?;
    let mut estimates = Vec::with_capacity(d);
    let mut true_sums = Vec::with_capacity(d);
    for k in 0..d {
        let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let out = real_summation_with(&xs, eps_c, &sampler, model.n(), m, noise, rng)?;
        estimates.push(out.estimate);
        true_sums.push(out.true_sum);
    }
    Ok(VectorOutcome {
        estimates,
        true_sums,
        epsilon_per_coordinate: eps_c,
        delta_per_coordinate: delta_c,
        m,
    })
}

fn precondition(msg: String) -> Error {
    Error::Precondition(msg)
}

/// `ln` of `(n/e)^{(m−1)/(32e^{4γ})}·e^{2γ(1−m)}`, the largest admissible `ln q`.
pub fn log_q_limit(n: usize, m: usize, gamma: f64) -> f64 {
    let mm1 = m as f64 - 1.0;
    mm1 / (32.0 * (4.0 * gamma).exp()) * ((n as f64).ln() - 1.0) - 2.0 * gamma * mm1
}

/// `⌈8e^{4γ}⌉`.
pub fn min_messages(gamma: f64) -> usize {
    (8.0 * (4.0 * gamma).exp()).ceil() as usize
}

/// Checks the hypotheses of the security bound, naming the first one that
/// fails.
pub fn check_security_preconditions(n: usize, m: usize, q: u64, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(precondition(format!("gamma >= 0 is required, got {gamma}")));
    }
    if n < 19 {
        return Err(precondition(format!("n >= 19 is required, got n={n}")));
    }
    let m_min = 8.0 * (4.0 * gamma).exp();
    if (m as f64) < m_min {
        return Err(precondition(format!("m >= 8e^(4γ) = {m_min:.4} is required, got m={m}")));
    }
    let limit = log_q_limit(n, m, gamma);
    if (q as f64).ln() > limit {
        return Err(precondition(format!(
            "q <= (n/e)^((m-1)/(32e^(4γ)))·e^(2γ(1-m)) = {:.6e} is required, got q={q}",
            limit.exp()
        )));
    }
    Ok(())
}

/// `(m−1)·((log n − log e)/(64e^{4γ}) − 2γ log e) − 3 log(3q)`, logs base 2.
pub fn security_parameter(n: usize, m: usize, q: u64, gamma: f64) -> Result<f64> {
    check_security_preconditions(n, m, q, gamma)?;
    Ok(security_formula(n, m, q, gamma))
}

fn security_formula(n: usize, m: usize, q: u64, gamma: f64) -> f64 {
    (m as f64 - 1.0) * security_rate(n, gamma) - 3.0 * (3.0 * q as f64).log2()
}

/// Bits of security gained per extra message:
/// `(log n − log e)/(64e^{4γ}) − 2γ log e`. Non-positive for small `n` at
/// distortions near the admissible maximum.
pub fn security_rate(n: usize, gamma: f64) -> f64 {
    ((n as f64).log2() - LOG2_E) / (64.0 * (4.0 * gamma).exp()) - 2.0 * gamma * LOG2_E
}

/// Largest distortion the message-count theorem admits: `(log₂ log₂ n)/80`.
pub fn max_gamma(n: usize) -> f64 {
    (n as f64).log2().log2() / 80.0
}

const MAX_SEARCH_MESSAGES: usize = 100_000_000;

/// Smallest `m >= ⌈8e^{4γ}⌉` whose security parameter at
/// `q = choose_modulus(n)` reaches `sigma_target` with the `q`
/// precondition holding.
pub fn required_messages(n: usize, gamma: f64, sigma_target: f64) -> Result<usize> {
    if n < 19 {
        return Err(precondition(format!("n >= 19 is required, got n={n}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0 && gamma <= max_gamma(n)) {
        return Err(precondition(format!(
            "0 <= gamma <= log2(log2 n)/80 = {:.6} is required, got {gamma}",
            max_gamma(n)
        )));
    }
    if !(sigma_target.is_finite() && sigma_target > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma target must be > 0, got {sigma_target}")));
    }
    let rate = security_rate(n, gamma);
    if rate <= 0.0 {
        return Err(precondition(format!(
            "security does not grow with m at n={n}, gamma={gamma} (rate {rate:.6} bits per message)"
        )));
    }
    let q = choose_modulus(n)?.get();
    let ok = |m: usize| {
        check_security_preconditions(n, m, q, gamma).is_ok() && security_formula(n, m, q, gamma) >= sigma_target
    };
    // Both conditions are monotone in m, so binary search over a doubling bracket.
    let mut lo = min_messages(gamma).max(1);
    if ok(lo) {
        return Ok(lo);
    }
    let mut hi = lo * 2;
    while !ok(hi) {
        if hi > MAX_SEARCH_MESSAGES {
            return Err(precondition(format!(
                "no m <= {MAX_SEARCH_MESSAGES} reaches sigma={sigma_target} at n={n}, gamma={gamma}"
            )));
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest integer `σ` with `(1 + e^ε)·2^{−σ−1} <= δ`.
pub fn sigma_from_dp(epsilon: f64, delta: f64) -> Result<u32> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_ratio = (1.0 + epsilon.exp()).log2() - delta.log2();
    let mut sigma = (log_ratio - 1.0).ceil().max(0.0) as u32;
    let holds = |s: u32| (1.0 + epsilon.exp()) * (-(f64::from(s) + 1.0)).exp2() <= delta;
    while sigma > 0 && holds(sigma - 1) {
        sigma -= 1;
    }
    while !holds(sigma) {
        sigma += 1;
    }
    Ok(sigma)
}

/// Parameters of one protocol deployment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub m: usize,
    pub q: FieldModulus,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Security parameter in bits, when the bound's hypotheses hold.
    pub sigma: Option<f64>,
}

impl ProtocolParams {
    /// Explicit parameters with `q = choose_modulus(n)`.
    pub fn new(n: usize, m: usize, epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidCount(format!("n and m must be >= 1, got n={n}, m={m}")));
        }
        let q = choose_modulus(n)?;
        Ok(Self {
            n,
            m,
            q,
            p: (n as f64).sqrt(),
            epsilon,
            delta,
            gamma,
            sigma: security_parameter(n, m, q.get(), gamma).ok(),
        })
    }

    /// Picks `m` for the security level that `(ε, δ)` requires.
    pub fn plan(n: usize, epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        let target = sigma_from_dp(epsilon, delta)?;
        let m = required_messages(n, gamma, f64::from(target))?;
        let params = Self::new(n, m, epsilon, delta, gamma)?;
        params.check_planning()?;
        Ok(params)
    }

    /// The hypotheses under which the security calculator applies.
    pub fn check_planning(&self) -> Result<()> {
        if self.n >= 19 && self.gamma > max_gamma(self.n) {
            return Err(precondition(format!(
                "gamma <= log2(log2 n)/80 = {:.6} is required, got {}",
                max_gamma(self.n),
                self.gamma
            )));
        }
        check_security_preconditions(self.n, self.m, self.q.get(), self.gamma)
    }
}
