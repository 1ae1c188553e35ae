use super::knn::{top_k, Edge};
use crate::error::{Error, Result};

/// Per-row k nearest other rows of `h` (`n x dim`, row-major) by Euclidean
/// distance, ties to the smaller index. Edge scores hold the distance.
pub fn dynamic_knn(h: &[f64], n: usize, k: usize) -> Result<Vec<Vec<Edge>>> {
    if n < 2 {
        return Err(Error::Graph(format!("dynamic k-NN needs a batch of at least 2, got {n}")));
    }
    if h.len() % n != 0 {
        return Err(Error::Dimension {
            op: "dynamic_knn",
            lhs: vec![h.len()],
            rhs: vec![n],
        });
    }
    let dim = h.len() / n;
    let k = k.min(n - 1);
    let row = |i: usize| &h[i * dim..(i + 1) * dim];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = row(i).iter().zip(row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                // Negated so that the shared ranking picks the closest.
                (-d2, j)
            })
            .collect();
        out.push(
            top_k(candidates, k)
                .into_iter()
                .map(|(neg, dst)| Edge { dst, score: (-neg).sqrt() })
                .collect(),
        );
    }
    Ok(out)
}
