//! Arithmetic over `Z_q`.
//!
//! The protocol only ever adds field elements, so this module stays small: a
//! validated modulus, reduced vectors, and a wide-accumulator sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A modulus `q >= 2`. The ring need not be a field; only addition is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldModulus(u64);

impl FieldModulus {
    pub fn new(q: u64) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidModulus(q));
        }
        Ok(Self(q))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn reduce(self, v: u64) -> u64 {
        v % self.0
    }

    /// Reduces a signed value into `[0, q)`.
    #[inline]
    pub fn reduce_signed(self, v: i128) -> u64 {
        v.rem_euclid(self.0 as i128) as u64
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.0 as u128) as u64
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        self.reduce_signed(a as i128 - b as i128)
    }

    /// `(Σ values) mod q`, accumulated in 128 bits.
    pub fn sum<I: IntoIterator<Item = u64>>(self, values: I) -> u64 {
        let q = self.0 as u128;
        let mut acc: u128 = 0;
        for v in values {
            acc += v as u128;
            if acc >= 1 << 126 {
                acc %= q;
            }
        }
        (acc % q) as u64
    }
}

impl TryFrom<u64> for FieldModulus {
    type Error = Error;

    fn try_from(q: u64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<FieldModulus> for u64 {
    fn from(q: FieldModulus) -> u64 {
        q.0
    }
}

/// A vector over `Z_q` whose entries are kept reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldVec {
    modulus: FieldModulus,
    values: Vec<u64>,
}

impl FieldVec {
    /// Builds a vector, rejecting unreduced entries.
    pub fn new(modulus: FieldModulus, values: Vec<u64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v >= modulus.get()) {
            return Err(Error::Domain(format!(
                "value {v} is not reduced modulo {}",
                modulus.get()
            )));
        }
        Ok(Self { modulus, values })
    }

    /// Builds a vector, reducing entries into `[0, q)`.
    pub fn from_reduced(modulus: FieldModulus, values: impl IntoIterator<Item = u64>) -> Self {
        Self {
            modulus,
            values: values.into_iter().map(|v| modulus.reduce(v)).collect(),
        }
    }

    pub fn modulus(&self) -> FieldModulus {
        self.modulus
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> u64 {
        self.modulus.sum(self.values.iter().copied())
    }
}

/// `(Σ values) mod q`.
pub fn field_reduce_sum(values: &[u64], q: u64) -> Result<u64> {
    let q = FieldModulus::new(q)?;
    Ok(q.sum(values.iter().copied()))
}

/// The protocol modulus `q = ⌈2·n^{3/2}⌉`.
///
/// Computed as `⌈√(4n³)⌉` with an integer square root, so the ceiling is
/// exact for every `n <= 2^40`.
pub fn choose_modulus(n: usize) -> Result<FieldModulus> {
    if n == 0 {
        return Err(Error::InvalidCount("player count must be at least 1".into()));
    }
    let n = n as u128;
    let target = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(n))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::InvalidCount(format!("n={n} is too large")))?;
    let root = target.isqrt();
    let q = if root * root == target { root } else { root + 1 };
    let q = u64::try_from(q).map_err(|_| Error::InvalidCount(format!("n={n} is too large")))?;
    FieldModulus::new(q)
}
