//! Communication graphs of an `m`-round shuffle.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::stream_rng;
use crate::shuffler::{composed_round_model, RoundPermutations, ShufflerModel};
use crate::stats::Estimate;

/// Undirected graph on players; edges are stored as `(min, max)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    pub fn new(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    /// Adds `{a, b}`; self-loops are dropped.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a >= self.n || b >= self.n {
            return Err(Error::InvalidParameter(format!(
                "edge ({a}, {b}) out of range for {} vertices",
                self.n
            )));
        }
        if a != b {
            self.edges.insert((a.min(b), a.max(b)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

/// Edge `{i, π_j(i)}` for every round `j` and player `i` with `π_j(i) ≠ i`.
pub fn build_comm_graph(rounds: &RoundPermutations) -> CommGraph {
    let mut g = CommGraph::new(rounds.n());
    for pi in rounds.rounds() {
        for (i, &j) in pi.as_slice().iter().enumerate() {
            if i != j {
                g.edges.insert((i.min(j), i.max(j)));
            }
        }
    }
    g
}

/// Number of connected components; isolated vertices count.
pub fn count_components(g: &CommGraph) -> usize {
    let mut uf = UnionFind::<usize>::new(g.n);
    g.n - g.edges().filter(|&(a, b)| uf.union(a, b)).count()
}

/// Component counts directly from permutations, without materializing edges.
pub(crate) fn components_of(rounds: &[crate::perm::Permutation], n: usize) -> usize {
    let mut uf = UnionFind::<usize>::new(n);
    let mut merges = 0;
    for pi in rounds {
        for (i, &j) in pi.as_slice().iter().enumerate() {
            merges += usize::from(uf.union(i, j));
        }
    }
    n - merges
}

/// Histogram of `C(G)` over sampled round permutations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentHistogram {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    /// `counts[c]` is the number of trials with `c` components.
    pub counts: Vec<u64>,
    /// `p̂(c)` with confidence half-widths, indexed like `counts`.
    pub estimates: Vec<Estimate>,
}

impl ComponentHistogram {
    pub fn probability(&self, c: usize) -> Estimate {
        self.estimates.get(c).copied().unwrap_or(Estimate { value: 0.0, half_width: 0.0 })
    }
}

/// Samples `trials` communication graphs and histograms their component
/// counts. Each round is drawn from `S⁻¹∘S′` with independent copies of
/// `model`, or directly from `model` when `composed` is false. Trial `t`
/// reads sub-stream `t` of `seed`.
pub fn empirical_component_dist(
    model: &ShufflerModel,
    m: usize,
    trials: usize,
    seed: u64,
    composed: bool,
) -> Result<ComponentHistogram> {
    if trials == 0 {
        return Err(Error::InvalidCount("at least one trial is required".into()));
    }
    if m == 0 {
        return Err(Error::InvalidCount("m must be at least 1".into()));
    }
    let round_model = if composed {
        composed_round_model(model, model)?
    } else {
        model.clone()
    };
    let sampler = round_model.sampler()?;
    let n = model.n();
    let counts = par::histogram_trials(trials, n + 1, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let rounds: Vec<_> = (0..m).map(|_| sampler.sample(&mut rng)).collect();
        components_of(&rounds, n)
    });
    let estimates = counts
        .iter()
        .map(|&c| Estimate::proportion(c, trials as u64))
        .collect();
    Ok(ComponentHistogram {
        n,
        m,
        trials,
        counts,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::Permutation;
    use rand::Rng;

    fn p(images: &[usize]) -> Permutation {
        Permutation::from_one_based(images).unwrap()
    }

    fn rounds(perms: Vec<Permutation>) -> RoundPermutations {
        RoundPermutations::new(perms).unwrap()
    }

    fn dfs_components(g: &CommGraph) -> usize {
        let mut adj = vec![Vec::new(); g.n()];
        for (a, b) in g.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; g.n()];
        let mut count = 0;
        for start in 0..g.n() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn build_examples() {
        let id = Permutation::identity(3);
        assert_eq!(build_comm_graph(&rounds(vec![id.clone(), id])).edge_count(), 0);

        let g = build_comm_graph(&rounds(vec![p(&[2, 3, 1])]));
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2)]);

        let g = build_comm_graph(&rounds(vec![p(&[2, 1, 3]), p(&[1, 3, 2])]));
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_components(&CommGraph::new(3)), 3);
        let cycle = build_comm_graph(&rounds(vec![p(&[2, 3, 4, 5, 1])]));
        assert_eq!(count_components(&cycle), 1);
        let mut g = CommGraph::new(4);
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        assert_eq!(count_components(&g), 2);
        assert_eq!(dfs_components(&g), 2);
        g.add_edge(3, 3).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.add_edge(0, 4).is_err());
    }

    #[test]
    fn union_find_matches_dfs() {
        let mut rng = stream_rng(77, 0);
        for _ in 0..10_000 {
            let n = rng.random_range(1..30);
            let mut g = CommGraph::new(n);
            let edges = rng.random_range(0..2 * n);
            for _ in 0..edges {
                g.add_edge(rng.random_range(0..n), rng.random_range(0..n)).unwrap();
            }
            assert_eq!(count_components(&g), dfs_components(&g));
        }
    }

    #[test]
    fn components_of_matches_graph() {
        let sampler = ShufflerModel::uniform(7).sampler().unwrap();
        for seed in 0..200 {
            let r = sampler.sample_rounds(2, seed).unwrap();
            assert_eq!(components_of(r.rounds(), 7), count_components(&build_comm_graph(&r)));
        }
    }

    #[test]
    fn component_dist_examples() {
        let id = ShufflerModel::point_mass(Permutation::identity(4));
        let h = empirical_component_dist(&id, 3, 100, 0, true).unwrap();
        assert_eq!(h.counts[4], 100);
        assert_eq!(h.probability(4).value, 1.0);

        let h = empirical_component_dist(&ShufflerModel::uniform(2), 1, 100_000, 1, true).unwrap();
        assert!((h.probability(1).value - 0.5).abs() < 0.01);
        assert!((h.probability(2).value - 0.5).abs() < 0.01);

        // A fixed non-identity permutation cancels in S⁻¹∘S′.
        let pm = ShufflerModel::point_mass(p(&[2, 3, 1]));
        assert_eq!(empirical_component_dist(&pm, 2, 10, 0, true).unwrap().counts[3], 10);
        assert_eq!(empirical_component_dist(&pm, 2, 10, 0, false).unwrap().counts[1], 10);
        assert!(empirical_component_dist(&pm, 2, 0, 0, false).is_err());
    }
}
