use std::cmp::Ordering;
use std::path::Path;

use super::similarity::{check_counts, SimilarityParams};
use crate::error::{Error, Result};
use crate::fsutil::{read_string, write_string};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub dst: usize,
    pub score: f64,
}

/// Directed adjacency. Each node's out-edges are ordered by descending score,
/// then ascending neighbor index.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientGraph {
    pub params: SimilarityParams,
    neighbors: Vec<Vec<Edge>>,
}

/// Descending score, then ascending index.
pub(crate) fn rank(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The `k` best `(score, index)` candidates in rank order.
pub(crate) fn top_k(mut candidates: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if candidates.len() > k && k > 0 {
        candidates.select_nth_unstable_by(k - 1, |a, b| rank(*a, *b));
        candidates.truncate(k);
    }
    if k == 0 {
        candidates.clear();
    }
    candidates.sort_by(|a, b| rank(*a, *b));
    candidates
}

impl PatientGraph {
    pub fn from_adjacency(params: SimilarityParams, mut neighbors: Vec<Vec<Edge>>) -> Result<Self> {
        let n = neighbors.len();
        for (i, edges) in neighbors.iter_mut().enumerate() {
            edges.sort_by(|a, b| rank((a.score, a.dst), (b.score, b.dst)));
            for (p, e) in edges.iter().enumerate() {
                if e.dst >= n {
                    return Err(Error::Graph(format!("edge {i}->{} leaves the {n}-node graph", e.dst)));
                }
                if e.dst == i {
                    return Err(Error::Graph(format!("self-edge on node {i}")));
                }
                if edges[..p].iter().any(|f| f.dst == e.dst) {
                    return Err(Error::Graph(format!("duplicate edge {i}->{}", e.dst)));
                }
            }
        }
        Ok(Self { params, neighbors })
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn neighbors(&self, i: usize) -> &[Edge] {
        &self.neighbors[i]
    }

    pub fn adjacency(&self) -> &[Vec<Edge>] {
        &self.neighbors
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, es)| es.iter().map(move |e| (i, e.dst, e.score)))
    }

    /// Adds the reverse of every edge that lacks one; scores are symmetric so
    /// the reverse edge reuses the forward score.
    pub fn symmetrized(&self) -> Self {
        let mut neighbors = self.neighbors.clone();
        for (i, es) in self.neighbors.iter().enumerate() {
            for e in es {
                if !neighbors[e.dst].iter().any(|f| f.dst == i) {
                    neighbors[e.dst].push(Edge { dst: i, score: e.score });
                }
            }
        }
        for es in &mut neighbors {
            es.sort_by(|a, b| rank((a.score, a.dst), (b.score, b.dst)));
        }
        Self {
            params: self.params,
            neighbors,
        }
    }

    /// Header `N k a c`, then `src dst score` per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!(
            "{} {} {} {}\n",
            self.n_nodes(),
            self.params.k,
            self.params.a,
            self.params.c
        );
        for (i, j, s) in self.edges() {
            out.push_str(&format!("{i} {j} {s}\n"));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Graph(format!("edge list: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split_whitespace()
            .collect();
        let [n, k, a, c] = header[..] else {
            return Err(bad("header must be `N k a c`".into()));
        };
        let n: usize = n.parse().map_err(|_| bad(format!("invalid N `{n}`")))?;
        let params = SimilarityParams {
            k: k.parse().map_err(|_| bad(format!("invalid k `{k}`")))?,
            a: a.parse().map_err(|_| bad(format!("invalid a `{a}`")))?,
            c: c.parse().map_err(|_| bad(format!("invalid c `{c}`")))?,
        };
        let mut neighbors = vec![Vec::new(); n];
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [i, j, s] = parts[..] else {
                return Err(bad(format!("invalid edge `{line}`")));
            };
            let i: usize = i.parse().map_err(|_| bad(format!("invalid edge `{line}`")))?;
            let j: usize = j.parse().map_err(|_| bad(format!("invalid edge `{line}`")))?;
            let score: f64 = s.parse().map_err(|_| bad(format!("invalid score in `{line}`")))?;
            if i >= n {
                return Err(bad(format!("source {i} out of range")));
            }
            neighbors[i].push(Edge { dst: j, score });
        }
        Self::from_adjacency(params, neighbors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_edge_list())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_edge_list(&read_string(path)?)
    }
}

/// Exact Eq.-style k-NN graph over sparse multi-hot rows.
///
/// Shared-diagnosis sums are accumulated through an inverted index, visiting
/// the target's columns in ascending order, so every score is bit-identical
/// to a direct pairwise evaluation.
pub fn build_knn_graph(rows: &[Vec<usize>], counts: &[usize], params: SimilarityParams) -> Result<PatientGraph> {
    params.validate()?;
    let n = rows.len();
    if n < 2 {
        return Err(Error::Graph(format!("k-NN graph needs at least 2 patients, got {n}")));
    }
    check_counts(rows, counts)?;
    let mut postings: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (j, row) in rows.iter().enumerate() {
        for &mu in row {
            postings[mu].push(j);
        }
    }
    let weights: Vec<f64> = counts
        .iter()
        .map(|&d| if d > 0 { 1.0 / d as f64 + params.c } else { 0.0 })
        .collect();
    let k = params.k.min(n - 1);
    let mut shared = vec![0.0f64; n];
    let mut touched = Vec::new();
    let mut neighbors = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        for &mu in row {
            for &j in &postings[mu] {
                if shared[j] == 0.0 {
                    touched.push(j);
                }
                shared[j] += weights[mu];
            }
        }
        let candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (params.a * shared[j] - (row.len() + rows[j].len()) as f64, j))
            .collect();
        for &j in &touched {
            shared[j] = 0.0;
        }
        touched.clear();
        neighbors.push(
            top_k(candidates, k)
                .into_iter()
                .map(|(score, dst)| Edge { dst, score })
                .collect(),
        );
    }
    Ok(PatientGraph { params, neighbors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::similarity::similarity_score;
    use proptest::prelude::*;

    /// All-pairs oracle: full sort of every candidate list.
    fn naive(rows: &[Vec<usize>], counts: &[usize], p: SimilarityParams) -> Vec<Vec<(usize, f64)>> {
        let n = rows.len();
        (0..n)
            .map(|i| {
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (similarity_score(&rows[i], &rows[j], counts, p.a, p.c).unwrap(), j))
                    .collect();
                all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
                all.into_iter().take(p.k).map(|(s, j)| (j, s)).collect()
            })
            .collect()
    }

    fn as_pairs(g: &PatientGraph) -> Vec<Vec<(usize, f64)>> {
        g.adjacency()
            .iter()
            .map(|es| es.iter().map(|e| (e.dst, e.score)).collect())
            .collect()
    }

    #[test]
    fn identical_rows_pick_smallest_indices() {
        let rows = vec![vec![0, 1]; 6];
        let g = build_knn_graph(&rows, &[6, 6], SimilarityParams::default()).unwrap();
        let dst: Vec<usize> = g.neighbors(4).iter().map(|e| e.dst).collect();
        assert_eq!(dst, [0, 1, 2]);
        let dst: Vec<usize> = g.neighbors(0).iter().map(|e| e.dst).collect();
        assert_eq!(dst, [1, 2, 3]);
    }

    #[test]
    fn degree_saturates_at_n_minus_one() {
        let rows = vec![vec![0], vec![], vec![0]];
        let g = build_knn_graph(&rows, &[2], SimilarityParams::default()).unwrap();
        assert!(g.adjacency().iter().all(|es| es.len() == 2));
    }

    #[test]
    fn four_node_hand_graph() {
        // Counts: col0 in 3 rows, col1 in 2, col2 in 1.
        let rows = vec![vec![0, 1], vec![0, 1], vec![0], vec![2]];
        let counts = [3, 2, 1];
        let p = SimilarityParams { k: 1, ..Default::default() };
        let g = build_knn_graph(&rows, &counts, p).unwrap();
        // 0-1 share cols 0 and 1: 5 (1/3 + 1/2 + 0.002) - 4.
        let s01 = 5.0 * ((1.0 / 3.0 + 0.001) + (0.5 + 0.001)) - 4.0;
        assert_eq!(g.neighbors(0), [Edge { dst: 1, score: s01 }]);
        assert_eq!(g.neighbors(1), [Edge { dst: 0, score: s01 }]);
        // Row 2 vs row 0 or 1: 5 (1/3 + .001) - 3, tie broken to 0.
        assert_eq!(g.neighbors(2)[0].dst, 0);
        // Row 3 shares nothing: -2 with row 2 beats -3 with rows 0 and 1.
        assert_eq!(g.neighbors(3), [Edge { dst: 2, score: -2.0 }]);
        assert_eq!(as_pairs(&g), naive(&rows, &counts, p));
    }

    #[test]
    fn too_small_cohort_is_a_graph_error() {
        assert!(matches!(
            build_knn_graph(&[vec![0]], &[1], SimilarityParams::default()),
            Err(Error::Graph(_))
        ));
    }

    #[test]
    fn edge_list_roundtrip_is_exact() {
        let rows = vec![vec![0, 2], vec![0], vec![1, 2], vec![2], vec![0, 1]];
        let counts = [3, 2, 3];
        let g = build_knn_graph(&rows, &counts, SimilarityParams::default()).unwrap();
        let back = PatientGraph::from_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(back, g);
        assert!(g.to_edge_list().starts_with("5 3 5 0.001\n"));
    }

    #[test]
    fn symmetrized_contains_every_reverse_edge() {
        let rows = vec![vec![0], vec![0], vec![0], vec![0], vec![1]];
        let g = build_knn_graph(&rows, &[4, 1], SimilarityParams { k: 1, ..Default::default() })
            .unwrap()
            .symmetrized();
        for (i, j, _) in g.edges() {
            assert!(g.neighbors(j).iter().any(|e| e.dst == i));
        }
    }

    fn cohort() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<usize>, usize)> {
        (2usize..60, 1usize..15, 1usize..6).prop_flat_map(|(n, m, k)| {
            (
                proptest::collection::vec(
                    proptest::collection::btree_set(0..m, 0..5).prop_map(|s| s.into_iter().collect::<Vec<_>>()),
                    n,
                ),
                Just(m),
                Just(k),
            )
                .prop_map(|(rows, m, k)| {
                    let mut counts = vec![1usize; m];
                    for r in &rows {
                        for &c in r {
                            counts[c] += 1;
                        }
                    }
                    (rows, counts, k)
                })
        })
    }

    proptest! {
        #[test]
        fn matches_all_pairs_oracle((rows, counts, k) in cohort()) {
            let p = SimilarityParams { k, ..Default::default() };
            let g = build_knn_graph(&rows, &counts, p).unwrap();
            prop_assert_eq!(as_pairs(&g), naive(&rows, &counts, p));
            let n = rows.len();
            for (i, es) in g.adjacency().iter().enumerate() {
                prop_assert_eq!(es.len(), k.min(n - 1));
                prop_assert!(es.iter().all(|e| e.dst != i));
            }
        }
    }
}
