//! Permutations of `[n]` and the swap (Cayley) distance.
//!
//! Internally a permutation is stored 0-based: `map[i] = π(i)`. The serde
//! form and [`Permutation::from_one_based`] use the 1-based convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n` for exhaustive enumeration (8! = 40320).
pub const DEFAULT_ENUMERATION_CAP: usize = 8;

/// A bijection on `[n]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect() }
    }

    /// Validates a 0-based image list.
    pub fn from_zero_based(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{map:?} is not a bijection on 0..{n}"
                )));
            }
        }
        Ok(Self { map })
    }

    /// Validates a 1-based image list such as `[2, 3, 1]`.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        let map = images
            .iter()
            .map(|&v| {
                v.checked_sub(1).ok_or_else(|| {
                    Error::InvalidPermutation(format!("{images:?} contains 0 in 1-based form"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_zero_based(map)
    }

    pub(crate) fn from_vec_unchecked(map: Vec<usize>) -> Self {
        debug_assert!(Self::from_zero_based(map.clone()).is_ok());
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `π(i)`, 0-based.
    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.map.iter().map(|v| v + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Self { map: inv }
    }

    /// `self ∘ inner`, i.e. `i ↦ self(inner(i))`.
    pub fn after(&self, inner: &Permutation) -> Result<Self> {
        check_same_len(self.len(), inner.len())?;
        Ok(Self {
            map: inner.map.iter().map(|&i| self.map[i]).collect(),
        })
    }

    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.map.len()];
        let mut cycles = 0;
        for start in 0..self.map.len() {
            if seen[start] {
                continue;
            }
            cycles += 1;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.map[i];
            }
        }
        cycles
    }

    /// Position of this permutation in lexicographic order of its image list.
    pub fn lex_rank(&self) -> usize {
        let n = self.map.len();
        let mut rank = 0;
        let mut used = vec![false; n];
        for (i, &v) in self.map.iter().enumerate() {
            let smaller_unused = (0..v).filter(|&u| !used[u]).count();
            rank += smaller_unused * factorial(n - 1 - i);
            used[v] = true;
        }
        rank
    }

    /// Applies the permutation to a column: element at position `i` moves to
    /// position `π(i)`.
    pub fn permute<T: Clone>(&self, column: &[T]) -> Result<Vec<T>> {
        check_same_len(self.len(), column.len())?;
        let mut out = column.to_vec();
        for (i, v) in column.iter().enumerate() {
            out[self.map[i]] = v.clone();
        }
        Ok(out)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<usize>) -> Result<Self> {
        Self::from_one_based(&images)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.to_one_based()
    }
}

fn check_same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// `outer ∘ inner`.
pub fn compose(outer: &Permutation, inner: &Permutation) -> Result<Permutation> {
    outer.after(inner)
}

pub fn invert(p: &Permutation) -> Permutation {
    p.inverse()
}

/// Minimum number of transpositions turning `a` into `b`:
/// `n − cycles(b⁻¹ ∘ a)`.
pub fn swap_distance(a: &Permutation, b: &Permutation) -> Result<usize> {
    let rel = b.inverse().after(a)?;
    Ok(a.len() - rel.cycle_count())
}

/// All `n!` permutations in lexicographic order, refusing `n > cap`.
pub fn enumerate_permutations_capped(n: usize, cap: usize) -> Result<Vec<Permutation>> {
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    let mut out = Vec::with_capacity(factorial(n));
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation { map: cur.clone() });
        if !next_lex(&mut cur) {
            break;
        }
    }
    Ok(out)
}

/// All `n!` permutations in lexicographic order, up to
/// [`DEFAULT_ENUMERATION_CAP`].
pub fn enumerate_permutations(n: usize) -> Result<Vec<Permutation>> {
    enumerate_permutations_capped(n, DEFAULT_ENUMERATION_CAP)
}

fn next_lex(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, VecDeque};

    fn p(images: &[usize]) -> Permutation {
        Permutation::from_one_based(images).unwrap()
    }

    /// Shortest transposition path by breadth-first search.
    fn bfs_swap_distance(a: &Permutation, b: &Permutation) -> usize {
        let n = a.len();
        let mut dist = HashMap::new();
        dist.insert(a.as_slice().to_vec(), 0usize);
        let mut queue = VecDeque::from([a.as_slice().to_vec()]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[&cur];
            if cur == b.as_slice() {
                return d;
            }
            for i in 0..n {
                for j in i + 1..n {
                    let mut next = cur.clone();
                    next.swap(i, j);
                    if !dist.contains_key(&next) {
                        dist.insert(next.clone(), d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn compose_examples() {
        let pi = p(&[2, 3, 1]);
        assert!(compose(&pi, &invert(&pi)).unwrap().is_identity());
        assert_eq!(compose(&Permutation::identity(3), &pi).unwrap(), pi);
        assert_eq!(compose(&p(&[2, 1, 3]), &p(&[1, 3, 2])).unwrap(), p(&[2, 3, 1]));
        assert!(matches!(
            compose(&p(&[1, 2]), &p(&[1, 2, 3])),
            Err(Error::SizeMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert(&Permutation::identity(4)), Permutation::identity(4));
        assert_eq!(invert(&p(&[2, 3, 1])), p(&[3, 1, 2]));
        assert_eq!(invert(&p(&[2, 1, 3])), p(&[2, 1, 3]));
    }

    #[test]
    fn swap_distance_examples() {
        let id = Permutation::identity(3);
        assert_eq!(swap_distance(&id, &id).unwrap(), 0);
        assert_eq!(swap_distance(&p(&[2, 1, 3]), &id).unwrap(), 1);
        assert_eq!(swap_distance(&p(&[2, 3, 1]), &id).unwrap(), 2);
        assert!(swap_distance(&id, &Permutation::identity(2)).is_err());
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_permutations(1).unwrap(), vec![p(&[1])]);
        assert_eq!(enumerate_permutations(2).unwrap(), vec![p(&[1, 2]), p(&[2, 1])]);
        let three = enumerate_permutations(3).unwrap();
        assert_eq!(three.len(), 6);
        assert_eq!(three[0], p(&[1, 2, 3]));
        assert_eq!(three[5], p(&[3, 2, 1]));
        assert!(matches!(enumerate_permutations(9), Err(Error::EnumerationCap { n: 9, cap: 8 })));
        assert_eq!(enumerate_permutations_capped(9, 9).unwrap().len(), 362_880);
        assert_eq!(enumerate_permutations(0).unwrap().len(), 1);
    }

    #[test]
    fn lex_rank_matches_enumeration_order() {
        for n in 0..=6 {
            for (i, perm) in enumerate_permutations(n).unwrap().iter().enumerate() {
                assert_eq!(perm.lex_rank(), i);
            }
        }
    }

    #[test]
    fn cycle_formula_matches_bfs() {
        for n in 1..=4 {
            let all = enumerate_permutations(n).unwrap();
            for a in &all {
                for b in &all {
                    assert_eq!(swap_distance(a, b).unwrap(), bfs_swap_distance(a, b));
                }
            }
        }
    }

    #[test]
    fn swap_distance_is_a_left_invariant_metric() {
        for n in 1..=4 {
            let all = enumerate_permutations(n).unwrap();
            let d = |a: &Permutation, b: &Permutation| swap_distance(a, b).unwrap();
            for a in &all {
                for b in &all {
                    assert_eq!(d(a, b), d(b, a));
                    assert_eq!(d(a, b) == 0, a == b);
                    for c in &all {
                        assert!(d(a, c) <= d(a, b) + d(b, c));
                        let (sa, sb) = (compose(c, a).unwrap(), compose(c, b).unwrap());
                        assert_eq!(d(&sa, &sb), d(a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn permute_moves_position_i_to_pi_i() {
        let pi = p(&[2, 3, 1]);
        assert_eq!(pi.permute(&['a', 'b', 'c']).unwrap(), vec!['c', 'a', 'b']);
    }

    #[test]
    fn serde_uses_one_based_form() {
        let pi = p(&[2, 3, 1]);
        assert_eq!(serde_json::to_string(&pi).unwrap(), "[2,3,1]");
        assert_eq!(serde_json::from_str::<Permutation>("[2,3,1]").unwrap(), pi);
        assert!(serde_json::from_str::<Permutation>("[1,1,2]").is_err());
        assert!(serde_json::from_str::<Permutation>("[0,1]").is_err());
    }
}
