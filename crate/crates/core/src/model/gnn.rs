use rand_chacha::ChaCha8Rng;

use super::batch::LocalEdge;
use super::config::{GnnKind, ModelConfig};
use super::layers::Linear;
use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::{Aggregation, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub(crate) struct SageLayer {
    pub w_self: usize,
    pub w_neigh: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GatLayer {
    pub w: usize,
    /// `[out, heads]`: column `k` scores the source features of head `k`.
    pub a_src: usize,
    pub a_dst: usize,
    pub b: usize,
    pub heads: usize,
    pub out: usize,
    /// Concatenate heads (hidden layers) or average them (output layer).
    pub concat: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mpnn {
    pub input: Linear,
    pub msg_hidden: Linear,
    pub msg_out: Linear,
    pub z_msg: usize,
    pub z_self: usize,
    pub z_b: usize,
    pub c_msg: usize,
    pub c_self: usize,
    pub c_b: usize,
    pub output: Linear,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Gnn {
    None,
    Gcn(Vec<Linear>),
    Sage(Vec<SageLayer>),
    Gat(Vec<GatLayer>),
    Mpnn(Mpnn),
}

/// Last-layer attention coefficients over `edges` (self-loops included).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `[E, heads]`.
    pub weights: Tensor,
}

impl Gnn {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, input: usize, rng: &mut ChaCha8Rng) -> (Self, usize) {
        let layers = cfg.gnn_layers;
        let width = |l: usize| if l + 1 == layers { cfg.gnn_out } else { cfg.gnn_hidden };
        match cfg.gnn_kind {
            GnnKind::None => (Gnn::None, 0),
            GnnKind::Gcn => {
                let mut d = input;
                let mut out = Vec::new();
                for l in 0..layers {
                    out.push(Linear::new(store, &format!("gnn.gcn.l{l}"), d, width(l), rng));
                    d = width(l);
                }
                (Gnn::Gcn(out), d)
            }
            GnnKind::Sage => {
                let mut d = input;
                let mut out = Vec::new();
                for l in 0..layers {
                    let w = width(l);
                    out.push(SageLayer {
                        w_self: store.add_uniform(format!("gnn.sage.l{l}.w_self"), &[d, w], d, rng),
                        w_neigh: store.add_uniform(format!("gnn.sage.l{l}.w_neigh"), &[d, w], d, rng),
                        b: store.add_uniform(format!("gnn.sage.l{l}.b"), &[2 * w], d, rng),
                    });
                    d = 2 * w;
                }
                (Gnn::Sage(out), d)
            }
            GnnKind::Gat => {
                let mut d = input;
                let mut out = Vec::new();
                for l in 0..layers {
                    let last = l + 1 == layers;
                    let heads = if last { cfg.gat_out_heads } else { cfg.gat_heads };
                    let w = width(l);
                    out.push(GatLayer {
                        w: store.add_uniform(format!("gnn.gat.l{l}.w"), &[d, heads * w], d, rng),
                        a_src: store.add_uniform(format!("gnn.gat.l{l}.a_src"), &[w, heads], w, rng),
                        a_dst: store.add_uniform(format!("gnn.gat.l{l}.a_dst"), &[w, heads], w, rng),
                        b: store.add_uniform(
                            format!("gnn.gat.l{l}.b"),
                            &[if last { w } else { heads * w }],
                            d,
                            rng,
                        ),
                        heads,
                        out: w,
                        concat: !last,
                    });
                    d = if last { w } else { heads * w };
                }
                (Gnn::Gat(out), d)
            }
            GnnKind::Mpnn => {
                let h = cfg.gnn_hidden;
                let mpnn = Mpnn {
                    input: Linear::new(store, "gnn.mpnn.input", input, h, rng),
                    msg_hidden: Linear::new(store, "gnn.mpnn.message.hidden", h + 1, h, rng),
                    msg_out: Linear::new(store, "gnn.mpnn.message.out", h, h, rng),
                    z_msg: store.add_uniform("gnn.mpnn.update.z_msg".into(), &[h, h], h, rng),
                    z_self: store.add_uniform("gnn.mpnn.update.z_self".into(), &[h, h], h, rng),
                    z_b: store.add_uniform("gnn.mpnn.update.z_b".into(), &[h], h, rng),
                    c_msg: store.add_uniform("gnn.mpnn.update.c_msg".into(), &[h, h], h, rng),
                    c_self: store.add_uniform("gnn.mpnn.update.c_self".into(), &[h, h], h, rng),
                    c_b: store.add_uniform("gnn.mpnn.update.c_b".into(), &[h], h, rng),
                    output: Linear::new(store, "gnn.mpnn.output", h, cfg.gnn_out, rng),
                    steps: cfg.mpnn_steps,
                };
                (Gnn::Mpnn(mpnn), cfg.gnn_out)
            }
        }
    }

    /// Node representations `[n, width]` for all `n` rows of `h`.
    pub fn encode<'t>(
        &self,
        p: &[Var<'t>],
        h: Var<'t>,
        edges: &[LocalEdge],
        attention: &mut Option<AttentionRecord>,
    ) -> Result<Option<Var<'t>>> {
        let n = h.shape()[0];
        let src: Vec<usize> = edges.iter().map(|e| e.src).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.dst).collect();
        let tape = h.tape();
        match self {
            Gnn::None => Ok(None),
            Gnn::Gcn(layers) => {
                let mut deg = vec![1.0f64; n];
                for &d in &dst {
                    deg[d] += 1.0;
                }
                let mut src_l = src.clone();
                let mut dst_l = dst.clone();
                src_l.extend(0..n);
                dst_l.extend(0..n);
                let norm: Vec<f64> = src_l
                    .iter()
                    .zip(&dst_l)
                    .map(|(&s, &d)| 1.0 / (deg[s] * deg[d]).sqrt())
                    .collect();
                let norm = tape.constant(Tensor::matrix(norm.len(), 1, norm)?);
                let mut x = h;
                for layer in layers {
                    let z = x.matmul(&p[layer.w])?;
                    x = z
                        .gather_rows(&src_l)?
                        .mul_col(&norm)?
                        .segment_aggregate(&dst_l, n, Aggregation::Sum)?
                        .add_row(&p[layer.b])?
                        .elu();
                }
                Ok(Some(x))
            }
            Gnn::Sage(layers) => {
                let mut x = h;
                for layer in layers {
                    let own = x.matmul(&p[layer.w_self])?;
                    let neigh = if edges.is_empty() {
                        tape.zeros(&own.shape())
                    } else {
                        x.matmul(&p[layer.w_neigh])?
                            .gather_rows(&src)?
                            .segment_aggregate(&dst, n, Aggregation::Mean)?
                    };
                    x = tape.concat(&[own, neigh], 1)?.add_row(&p[layer.b])?.elu();
                }
                Ok(Some(x))
            }
            Gnn::Gat(layers) => {
                let mut src_l = src.clone();
                let mut dst_l = dst.clone();
                src_l.extend(0..n);
                dst_l.extend(0..n);
                let mut x = h;
                for layer in layers {
                    let z = x.matmul(&p[layer.w])?;
                    let d = layer.out;
                    let mut head_out = Vec::with_capacity(layer.heads);
                    let mut coefficients = Vec::with_capacity(layer.heads);
                    for k in 0..layer.heads {
                        let zk = z.slice_cols(k * d, d)?;
                        let s_src = zk.matmul(&p[layer.a_src].slice_cols(k, 1)?)?;
                        let s_dst = zk.matmul(&p[layer.a_dst].slice_cols(k, 1)?)?;
                        let alpha = s_src
                            .gather_rows(&src_l)?
                            .add(&s_dst.gather_rows(&dst_l)?)?
                            .leaky_relu(0.2)
                            .segment_softmax(&dst_l, n)?;
                        head_out.push(
                            zk.gather_rows(&src_l)?
                                .mul_col(&alpha)?
                                .segment_aggregate(&dst_l, n, Aggregation::Sum)?,
                        );
                        coefficients.push(alpha);
                    }
                    let combined = if layer.concat {
                        tape.concat(&head_out, 1)?
                    } else {
                        let mut acc = head_out[0];
                        for hk in &head_out[1..] {
                            acc = acc.add(hk)?;
                        }
                        acc.scale(1.0 / layer.heads as f64)
                    };
                    x = combined.add_row(&p[layer.b])?.elu();
                    *attention = Some(AttentionRecord {
                        src: src_l.clone(),
                        dst: dst_l.clone(),
                        weights: tape.concat(&coefficients, 1)?.value(),
                    });
                }
                Ok(Some(x))
            }
            Gnn::Mpnn(m) => {
                let mut s = m.input.apply(p, h)?.elu();
                let width = s.shape()[1];
                let scores = if edges.is_empty() {
                    None
                } else {
                    let v: Vec<f64> = edges.iter().map(|e| e.score).collect();
                    Some(tape.constant(Tensor::matrix(v.len(), 1, v)?))
                };
                for _ in 0..m.steps {
                    let agg = match scores {
                        None => tape.zeros(&[n, width]),
                        Some(sc) => {
                            let input = tape.concat(&[s.gather_rows(&src)?, sc], 1)?;
                            let msg = m.msg_out.apply(p, m.msg_hidden.apply(p, input)?.elu())?;
                            msg.segment_aggregate(&dst, n, Aggregation::Sum)?
                        }
                    };
                    let gate = agg
                        .matmul(&p[m.z_msg])?
                        .add(&s.matmul(&p[m.z_self])?)?
                        .add_row(&p[m.z_b])?
                        .sigmoid();
                    let cand = agg
                        .matmul(&p[m.c_msg])?
                        .add(&s.matmul(&p[m.c_self])?)?
                        .add_row(&p[m.c_b])?
                        .tanh();
                    s = s.add(&gate.mul(&cand.sub(&s)?)?)?;
                }
                Ok(Some(m.output.apply(p, s)?.elu()))
            }
        }
    }
}
