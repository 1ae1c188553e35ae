use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::Var;

/// `x W + b`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.add_uniform(format!("{name}.w"), &[input, output], input, rng),
            b: store.add_uniform(format!("{name}.b"), &[output], input, rng),
        }
    }

    pub fn apply<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(&p[self.w])?.add_row(&p[self.b])
    }
}

/// Standard LSTM cell with gate order input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmCell {
    pub w_ih: usize,
    pub w_hh: usize,
    pub b: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_ih: store.add_uniform(format!("{name}.w_ih"), &[input, 4 * hidden], hidden, rng),
            w_hh: store.add_uniform(format!("{name}.w_hh"), &[hidden, 4 * hidden], hidden, rng),
            b: store.add_uniform(format!("{name}.b"), &[4 * hidden], hidden, rng),
            hidden,
        }
    }

    /// One step from `(h, c)`; `None` state means zeros.
    pub fn step<'t>(
        &self,
        p: &[Var<'t>],
        x: Var<'t>,
        state: Option<(Var<'t>, Var<'t>)>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let hd = self.hidden;
        let mut z = x.matmul(&p[self.w_ih])?;
        if let Some((h, _)) = state {
            z = z.add(&h.matmul(&p[self.w_hh])?)?;
        }
        let z = z.add_row(&p[self.b])?;
        let i = z.slice_cols(0, hd)?.sigmoid();
        let g = z.slice_cols(2 * hd, hd)?.tanh();
        let o = z.slice_cols(3 * hd, hd)?.sigmoid();
        let mut c = i.mul(&g)?;
        if let Some((_, c_prev)) = state {
            let f = z.slice_cols(hd, hd)?.sigmoid();
            c = f.mul(&c_prev)?.add(&c)?;
        }
        let h = o.mul(&c.tanh())?;
        Ok((h, c))
    }

    /// Hidden states in time order.
    pub fn run<'t>(&self, p: &[Var<'t>], xs: &[Var<'t>], reverse: bool) -> Result<Vec<Var<'t>>> {
        let mut out = Vec::with_capacity(xs.len());
        let mut state = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for t in order {
            let (h, c) = self.step(p, xs[t], state)?;
            out.push(h);
            state = Some((h, c));
        }
        if reverse {
            out.reverse();
        }
        Ok(out)
    }
}

/// Stacked bidirectional LSTM.
#[derive(Debug, Clone)]
pub(crate) struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, input: usize, hidden: usize, layers: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let width = if l == 0 { input } else { 2 * hidden };
                (
                    LstmCell::new(store, &format!("lstm.l{l}.fwd"), width, hidden, rng),
                    LstmCell::new(store, &format!("lstm.l{l}.bwd"), width, hidden, rng),
                )
            })
            .collect();
        Self { layers }
    }

    /// `[last forward state || last backward state]` of the top layer.
    pub fn encode<'t>(&self, p: &[Var<'t>], xs: &[Var<'t>]) -> Result<Var<'t>> {
        let tape = xs
            .first()
            .ok_or_else(|| crate::Error::Contract("LSTM input has zero time steps".into()))?
            .tape();
        let mut seq = xs.to_vec();
        let mut last = None;
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            let f = fwd.run(p, &seq, false)?;
            let b = bwd.run(p, &seq, true)?;
            last = Some((*f.last().expect("non-empty"), b[0]));
            if l + 1 < self.layers.len() {
                seq = f
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| tape.concat(&[*x, *y], 1))
                    .collect::<Result<_>>()?;
            }
        }
        let (f, b) = last.expect("at least one layer");
        tape.concat(&[f, b], 1)
    }
}
