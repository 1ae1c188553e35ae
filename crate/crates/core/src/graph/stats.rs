use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::knn::PatientGraph;
use crate::preprocess::percentile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    /// Degree to node count.
    pub out_degree: BTreeMap<usize, usize>,
    pub in_degree: BTreeMap<usize, usize>,
    pub score_min: f64,
    pub score_max: f64,
    pub score_mean: f64,
    /// 25th, 50th and 75th percentiles.
    pub score_quartiles: [f64; 3],
    /// Weakly connected components.
    pub components: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn graph_stats(graph: &PatientGraph) -> GraphStats {
    let n = graph.n_nodes();
    let mut out_degree = BTreeMap::new();
    let mut in_counts = vec![0usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut scores = Vec::with_capacity(graph.n_edges());
    for i in 0..n {
        *out_degree.entry(graph.neighbors(i).len()).or_insert(0) += 1;
        for e in graph.neighbors(i) {
            in_counts[e.dst] += 1;
            scores.push(e.score);
            let (a, b) = (find(&mut parent, i), find(&mut parent, e.dst));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut in_degree = BTreeMap::new();
    for d in in_counts {
        *in_degree.entry(d).or_insert(0) += 1;
    }
    let components = (0..n).filter(|&i| find(&mut parent, i) == i).count();
    scores.sort_by(f64::total_cmp);
    let (min, max, mean, quartiles) = if scores.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, [f64::NAN; 3])
    } else {
        (
            scores[0],
            scores[scores.len() - 1],
            scores.iter().sum::<f64>() / scores.len() as f64,
            [25.0, 50.0, 75.0].map(|q| percentile_sorted(&scores, q)),
        )
    };
    GraphStats {
        nodes: n,
        edges: scores.len(),
        out_degree,
        in_degree,
        score_min: min,
        score_max: max,
        score_mean: mean,
        score_quartiles: quartiles,
        components,
    }
}

/// Fraction of edges whose endpoints share at least one diagnosis column.
pub fn shared_diagnosis_rate(graph: &PatientGraph, rows: &[Vec<usize>]) -> f64 {
    let mut shared = 0usize;
    let mut total = 0usize;
    for (i, j, _) in graph.edges() {
        total += 1;
        if rows[i].iter().any(|c| rows[j].binary_search(c).is_ok()) {
            shared += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        shared as f64 / total as f64
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes        {}", self.nodes)?;
        writeln!(f, "edges        {}", self.edges)?;
        writeln!(f, "components   {}", self.components)?;
        let hist = |h: &BTreeMap<usize, usize>| {
            h.iter().map(|(d, c)| format!("{d}:{c}")).collect::<Vec<_>>().join(" ")
        };
        writeln!(f, "out-degree   {}", hist(&self.out_degree))?;
        writeln!(f, "in-degree    {}", hist(&self.in_degree))?;
        writeln!(
            f,
            "score        min {:.4} q1 {:.4} median {:.4} q3 {:.4} max {:.4} mean {:.4}",
            self.score_min,
            self.score_quartiles[0],
            self.score_quartiles[1],
            self.score_quartiles[2],
            self.score_max,
            self.score_mean
        )
    }
}
