//! LSTM-GNN: bidirectional LSTM over the hourly series, an optional graph
//! encoder over sampled neighborhoods, a static encoder, and two heads.

pub mod batch;
pub mod config;
mod gnn;
mod layers;
pub mod params;
#[cfg(test)]
mod tests;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use batch::{static_width, BatchGraph, LocalEdge, NodeInputs};
pub use config::{GnnKind, InputDims, ModelConfig};
pub use gnn::AttentionRecord;
pub use params::ParamStore;

use crate::error::{Error, Result};
use crate::graph::{dynamic_knn, PatientGraph};
use crate::metrics::Task;
use crate::preprocess::Dataset;
use crate::tensor::{Tape, Tensor, Var};
use gnn::Gnn;
use layers::{BiLstm, Linear};

#[derive(Debug, Clone)]
struct Layout {
    lstm: BiLstm,
    gnn: Gnn,
    static_enc: Linear,
    head_hidden: Option<Linear>,
    head: Linear,
    lstm_head: Linear,
}

/// Model parameters plus the layout that maps them to layers.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub params: ParamStore,
    layout: Layout,
}

/// Outputs of one forward pass over the targets of a batch.
pub struct Forward<'t> {
    /// `[n_targets, 1]` prediction from `h_T || h_N || h_S`.
    pub y: Var<'t>,
    /// `[n_targets, 1]` prediction from `h_T` alone.
    pub y_lstm: Var<'t>,
    /// `[n_nodes, 2 * lstm_hidden]`.
    pub h_t: Var<'t>,
    /// Edges the graph encoder actually used.
    pub edges: Vec<LocalEdge>,
    pub attention: Option<AttentionRecord>,
}

/// One exported attention coefficient, in dataset row ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionEdge {
    pub src: usize,
    pub dst: usize,
    pub head: usize,
    pub weight: f64,
}

fn dropout<'t>(x: Var<'t>, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var<'t>> {
    let Some(rng) = rng else { return Ok(x) };
    if p == 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let keep = 1.0 / (1.0 - p);
    let n: usize = shape.iter().product();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    x.mul(&x.tape().constant(Tensor::new(shape, mask)?))
}

impl Model {
    pub fn new(config: ModelConfig, dims: InputDims, seed: u64) -> Result<Self> {
        config.validate()?;
        if dims.series == 0 || dims.horizon == 0 || dims.static_width == 0 {
            return Err(Error::Config(format!("input dimensions must be positive: {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h_t = 2 * config.lstm_hidden;
        let lstm = BiLstm::new(&mut store, dims.series, config.lstm_hidden, config.lstm_layers, &mut rng);
        let (gnn, h_n) = Gnn::new(&mut store, &config, h_t, &mut rng);
        let static_enc = Linear::new(&mut store, "static", dims.static_width, config.static_hidden, &mut rng);
        let mut width = h_t + h_n + config.static_hidden;
        let head_hidden = (config.head_hidden > 0).then(|| {
            let l = Linear::new(&mut store, "head.hidden", width, config.head_hidden, &mut rng);
            width = config.head_hidden;
            l
        });
        let head = Linear::new(&mut store, "head.out", width, 1, &mut rng);
        let lstm_head = Linear::new(&mut store, "head.lstm", h_t, 1, &mut rng);
        Ok(Self {
            config,
            dims,
            params: store,
            layout: Layout {
                lstm,
                gnn,
                static_enc,
                head_hidden,
                head,
                lstm_head,
            },
        })
    }

    /// Input widths for `data` under `config`.
    pub fn dims_for(data: &Dataset, config: &ModelConfig) -> InputDims {
        InputDims {
            series: 2 * data.n_channels(),
            horizon: data.horizon(),
            static_width: static_width(data, config.diag_static),
        }
    }

    /// Sets both output biases, e.g. to the link-space mean of the labels.
    pub fn set_output_bias(&mut self, value: f64) {
        for idx in [self.layout.head.b, self.layout.lstm_head.b] {
            self.params.tensors_mut()[idx] = Tensor::full(&[1], value);
        }
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    fn link<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self.config.task {
            Task::Ihm => x.sigmoid(),
            Task::Los => x.exp(),
        }
    }

    /// Forward pass. `rng` enables dropout; `None` is evaluation mode.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &[Var<'t>],
        batch: &BatchGraph,
        inputs: &NodeInputs,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward<'t>> {
        batch.validate()?;
        if p.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "forward got {} parameters, model has {}",
                p.len(),
                self.params.len()
            )));
        }
        if inputs.steps.len() != self.dims.horizon {
            return Err(Error::Contract(format!(
                "expected {} time steps, got {}",
                self.dims.horizon,
                inputs.steps.len()
            )));
        }
        let n_t = batch.n_targets;
        let (nodes, edges) = if self.config.dynamic {
            (n_t, Vec::new())
        } else {
            (batch.nodes.len(), batch.edges.clone())
        };
        let xs: Vec<Var<'t>> = inputs
            .steps
            .iter()
            .map(|x| {
                if nodes == x.rows() {
                    Ok(tape.constant(x.clone()))
                } else {
                    Ok(tape.constant(x.select_rows(&(0..nodes).collect::<Vec<_>>())?))
                }
            })
            .collect::<Result<_>>()?;
        let h_t = self.layout.lstm.encode(p, &xs)?;
        let h_t_drop = dropout(h_t, self.config.dropout, rng.as_deref_mut())?;

        let edges = if self.config.dynamic {
            if n_t < 2 {
                Vec::new()
            } else {
                let value = h_t.value();
                dynamic_knn(value.data(), n_t, self.config.dynamic_k)?
                    .into_iter()
                    .enumerate()
                    .flat_map(|(dst, es)| {
                        es.into_iter().map(move |e| LocalEdge {
                            src: e.dst,
                            dst,
                            score: e.score,
                        })
                    })
                    .collect()
            }
        } else {
            edges
        };

        let mut attention = None;
        let h_n = self.layout.gnn.encode(p, h_t_drop, &edges, &mut attention)?;
        let targets: Vec<usize> = (0..n_t).collect();
        let take = |v: Var<'t>| -> Result<Var<'t>> {
            if v.shape()[0] == n_t {
                Ok(v)
            } else {
                v.gather_rows(&targets)
            }
        };
        let h_t_targets = take(h_t_drop)?;
        let h_s = self
            .layout
            .static_enc
            .apply(p, tape.constant(inputs.static_x.clone()))?
            .elu();
        let mut parts = vec![h_t_targets];
        if let Some(h_n) = h_n {
            parts.push(take(h_n)?);
        }
        parts.push(h_s);
        let mut h = dropout(tape.concat(&parts, 1)?, self.config.dropout, rng.as_deref_mut())?;
        if let Some(hidden) = &self.layout.head_hidden {
            h = hidden.apply(p, h)?.elu();
        }
        let y = self.link(self.layout.head.apply(p, h)?);
        let y_lstm = self.link(self.layout.lstm_head.apply(p, h_t_targets)?);
        Ok(Forward {
            y,
            y_lstm,
            h_t,
            edges,
            attention,
        })
    }

    /// Evaluation-mode predictions `(y, y_lstm)` for the targets of `batch`.
    pub fn predict(&self, data: &Dataset, batch: &BatchGraph) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = Tape::new();
        let p = self.params.register(&tape);
        let inputs = NodeInputs::gather(data, batch, self.config.diag_static)?;
        let out = self.forward(&tape, &p, batch, &inputs, None)?;
        Ok((out.y.value().into_data(), out.y_lstm.value().into_data()))
    }

    /// Last-layer GAT coefficients with full (unsampled) neighborhoods for
    /// every node of `graph`, including self-loops.
    pub fn export_attention(&self, data: &Dataset, graph: &PatientGraph, batch_size: usize) -> Result<Vec<AttentionEdge>> {
        if self.config.gnn_kind != GnnKind::Gat {
            return Err(Error::Capability(format!(
                "attention export needs a gat model, this one is {}",
                self.config.gnn_kind
            )));
        }
        if self.config.dynamic {
            return Err(Error::Capability("attention export needs the static diagnosis graph".into()));
        }
        if graph.n_nodes() != data.len() {
            return Err(Error::Graph(format!(
                "graph has {} nodes, dataset has {}",
                graph.n_nodes(),
                data.len()
            )));
        }
        let mut out = Vec::new();
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(batch_size.max(1)) {
            let batch = BatchGraph::expand(chunk, self.config.gnn_layers, |row| {
                graph.neighbors(row).iter().map(|e| (e.dst, e.score)).collect()
            });
            let tape = Tape::new();
            let p = self.params.register(&tape);
            let inputs = NodeInputs::gather(data, &batch, self.config.diag_static)?;
            let fwd = self.forward(&tape, &p, &batch, &inputs, None)?;
            let att = fwd.attention.expect("gat records attention");
            let heads = att.weights.cols();
            for (e, (&s, &d)) in att.src.iter().zip(&att.dst).enumerate() {
                if d >= batch.n_targets {
                    continue;
                }
                for head in 0..heads {
                    out.push(AttentionEdge {
                        src: batch.nodes[s],
                        dst: batch.nodes[d],
                        head,
                        weight: att.weights.at(e, head),
                    });
                }
            }
        }
        Ok(out)
    }
}
