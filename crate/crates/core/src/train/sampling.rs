use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::PatientGraph;
use crate::model::BatchGraph;

/// Nodes a sampler may draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    allowed: Vec<bool>,
}

impl Pool {
    pub fn all(n: usize) -> Self {
        Self { allowed: vec![true; n] }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut allowed = vec![false; n];
        for &i in indices {
            *allowed.get_mut(i).ok_or(Error::Index {
                what: "pool member",
                index: i,
                len: n,
            })? = true;
        }
        Ok(Self { allowed })
    }

    pub fn contains(&self, i: usize) -> bool {
        self.allowed.get(i).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counters recording every id a sampler touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleAudit {
    /// Target ids, in the order they were processed.
    pub targets: Vec<usize>,
    /// Distinct sampled neighbor ids.
    pub neighbors: BTreeSet<usize>,
    /// Total neighbor draws.
    pub draws: usize,
    /// Draws (targets included) that fell outside the allowed pool.
    pub outside_pool: usize,
}

impl SampleAudit {
    /// Every id seen, targets and neighbors.
    pub fn touched(&self) -> BTreeSet<usize> {
        self.targets.iter().copied().chain(self.neighbors.iter().copied()).collect()
    }
}

/// Draws `s` neighbors of `node` restricted to `pool`: with replacement when
/// fewer than `s` candidates remain, otherwise without.
pub fn sample_neighbors(
    graph: &PatientGraph,
    node: usize,
    s: usize,
    pool: &Pool,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, f64)> {
    let candidates: Vec<(usize, f64)> = graph
        .neighbors(node)
        .iter()
        .filter(|e| pool.contains(e.dst))
        .map(|e| (e.dst, e.score))
        .collect();
    if candidates.is_empty() || s == 0 {
        return Vec::new();
    }
    if candidates.len() < s {
        (0..s)
            .map(|_| candidates[rng.random_range(0..candidates.len())])
            .collect()
    } else {
        candidates.choose_multiple(rng, s).copied().collect()
    }
}

/// Sampled computation graph for `targets`, `depth` hops deep.
pub fn sample_neighborhood(
    graph: &PatientGraph,
    targets: &[usize],
    s: usize,
    depth: usize,
    pool: &Pool,
    rng: &mut ChaCha8Rng,
    mut audit: Option<&mut SampleAudit>,
) -> Result<BatchGraph> {
    if pool.is_empty() {
        return Err(Error::Contract("neighbor pool is empty".into()));
    }
    if let Some(a) = audit.as_deref_mut() {
        a.targets.extend_from_slice(targets);
        a.outside_pool += targets.iter().filter(|&&t| !pool.contains(t)).count();
    }
    let batch = BatchGraph::expand(targets, depth, |row| {
        let drawn = sample_neighbors(graph, row, s, pool, rng);
        if let Some(a) = audit.as_deref_mut() {
            a.draws += drawn.len();
            for &(id, _) in &drawn {
                a.neighbors.insert(id);
                a.outside_pool += usize::from(!pool.contains(id));
            }
        }
        drawn
    });
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::graph::{Edge, SimilarityParams};

    fn star() -> PatientGraph {
        // 0 -> {1, 2, 3}; 1 -> {0}; others isolated.
        let e = |dst| Edge { dst, score: 1.0 };
        PatientGraph::from_adjacency(
            SimilarityParams::default(),
            vec![vec![e(1), e(2), e(3)], vec![e(0)], vec![], vec![], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn small_pool_samples_with_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let drawn = sample_neighbors(&star(), 0, 5, &Pool::all(5), &mut rng);
        assert_eq!(drawn.len(), 5);
        assert!(drawn.iter().all(|(d, _)| [1, 2, 3].contains(d)));
    }

    #[test]
    fn large_pool_samples_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut drawn: Vec<usize> = sample_neighbors(&star(), 0, 3, &Pool::all(5), &mut rng)
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        drawn.sort();
        assert_eq!(drawn, vec![1, 2, 3]);
    }

    #[test]
    fn zero_size_and_empty_pool_give_no_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_neighbors(&star(), 0, 0, &Pool::all(5), &mut rng).is_empty());
        let pool = Pool::from_indices(5, &[0, 4]).unwrap();
        assert!(sample_neighbors(&star(), 0, 4, &pool, &mut rng).is_empty());
        assert!(sample_neighbors(&star(), 2, 4, &Pool::all(5), &mut rng).is_empty());
    }

    #[test]
    fn pool_restriction_and_audit() {
        let pool = Pool::from_indices(5, &[0, 1, 3]).unwrap();
        let mut audit = SampleAudit::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_neighborhood(&star(), &[0, 1], 4, 2, &pool, &mut rng, Some(&mut audit)).unwrap();
        assert_eq!(audit.outside_pool, 0);
        assert!(audit.neighbors.iter().all(|&n| n == 0 || n == 1 || n == 3));
        assert_eq!(audit.targets, vec![0, 1]);
        assert!(batch.nodes.iter().all(|&n| pool.contains(n)));
        assert_eq!(batch.n_targets, 2);
        batch.validate().unwrap();
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_neighborhood(&star(), &[0, 1, 2], 2, 1, &Pool::all(5), &mut rng, None).unwrap()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn empty_pool_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = Pool::from_indices(5, &[]).unwrap();
        assert!(sample_neighborhood(&star(), &[0], 2, 1, &pool, &mut rng, None).is_err());
    }
}
