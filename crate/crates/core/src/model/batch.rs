use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::preprocess::Dataset;
use crate::tensor::Tensor;

/// A message edge `src -> dst` over batch-local node positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    pub src: usize,
    pub dst: usize,
    pub score: f64,
}

/// Node set of one forward pass. Targets occupy the first `n_targets`
/// positions; `nodes` maps positions to dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGraph {
    pub nodes: Vec<usize>,
    pub n_targets: usize,
    pub edges: Vec<LocalEdge>,
}

impl BatchGraph {
    /// Targets only, no edges.
    pub fn isolated(targets: &[usize]) -> Self {
        Self {
            nodes: targets.to_vec(),
            n_targets: targets.len(),
            edges: Vec::new(),
        }
    }

    /// Expands `targets` for `depth` hops. `neighbors_of` returns the
    /// (possibly repeated) neighbors of a dataset row with edge scores. New
    /// nodes are appended in first-appearance order.
    pub fn expand(
        targets: &[usize],
        depth: usize,
        mut neighbors_of: impl FnMut(usize) -> Vec<(usize, f64)>,
    ) -> Self {
        let mut nodes = targets.to_vec();
        let mut position: HashMap<usize, usize> =
            targets.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let mut edges = Vec::new();
        let mut frontier: Vec<usize> = (0..targets.len()).collect();
        for _ in 0..depth {
            let mut next = Vec::new();
            for &dst in &frontier {
                for (row, score) in neighbors_of(nodes[dst]) {
                    let src = *position.entry(row).or_insert_with(|| {
                        nodes.push(row);
                        next.push(nodes.len() - 1);
                        nodes.len() - 1
                    });
                    edges.push(LocalEdge { src, dst, score });
                }
            }
            frontier = next;
        }
        Self {
            nodes,
            n_targets: targets.len(),
            edges,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_targets == 0 || self.n_targets > self.nodes.len() {
            return Err(Error::Contract(format!(
                "batch has {} targets over {} nodes",
                self.n_targets,
                self.nodes.len()
            )));
        }
        let n = self.nodes.len();
        if let Some(e) = self.edges.iter().find(|e| e.src >= n || e.dst >= n) {
            return Err(Error::Index {
                what: "batch edge endpoint",
                index: e.src.max(e.dst),
                len: n,
            });
        }
        Ok(())
    }
}

/// Gathered model inputs for the nodes of a [`BatchGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInputs {
    /// One `[n_nodes, 2F]` tensor per hour: values then masks.
    pub steps: Vec<Tensor>,
    /// `[n_targets, static_width]`.
    pub static_x: Tensor,
}

impl NodeInputs {
    pub fn gather(data: &Dataset, batch: &BatchGraph, diag_static: bool) -> Result<Self> {
        let f = data.n_channels();
        let t_len = data.horizon();
        let n = batch.nodes.len();
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut buf = Vec::with_capacity(n * 2 * f);
            for &row in &batch.nodes {
                buf.extend_from_slice(&data.series_of(row)[t * f..(t + 1) * f]);
                buf.extend_from_slice(&data.mask_of(row)[t * f..(t + 1) * f]);
            }
            steps.push(Tensor::matrix(n, 2 * f, buf)?);
        }
        let width = static_width(data, diag_static);
        let mut buf = Vec::with_capacity(batch.n_targets * width);
        for &row in &batch.nodes[..batch.n_targets] {
            buf.extend_from_slice(data.static_row(row));
            if diag_static {
                buf.extend(data.diagnoses.dense_row(row));
            }
        }
        Ok(Self {
            steps,
            static_x: Tensor::matrix(batch.n_targets, width, buf)?,
        })
    }
}

pub fn static_width(data: &Dataset, diag_static: bool) -> usize {
    data.n_static() + if diag_static { data.n_diagnoses() } else { 0 }
}
