use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Gcn,
    Gat,
    Sage,
    Mpnn,
    None,
}

impl GnnKind {
    pub const ALL: [GnnKind; 5] = [GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage, GnnKind::Mpnn, GnnKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            GnnKind::Gcn => "gcn",
            GnnKind::Gat => "gat",
            GnnKind::Sage => "sage",
            GnnKind::Mpnn => "mpnn",
            GnnKind::None => "none",
        }
    }
}

impl fmt::Display for GnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GnnKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown gnn kind `{s}` (gcn, gat, sage, mpnn, none)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub gnn_kind: GnnKind,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub gnn_hidden: usize,
    pub gnn_out: usize,
    /// GNN depth; equals the neighborhood sampling depth.
    pub gnn_layers: usize,
    pub gat_heads: usize,
    pub gat_out_heads: usize,
    pub mpnn_steps: usize,
    pub static_hidden: usize,
    /// Width of an optional hidden layer in the final head; 0 for a single
    /// affine layer.
    pub head_hidden: usize,
    pub dropout: f64,
    /// Weight of the auxiliary LSTM-head loss.
    pub alpha: f64,
    /// Concatenate the diagnosis multi-hot vector to the static input.
    pub diag_static: bool,
    /// Build the graph per batch from `h_T` instead of the diagnosis graph.
    pub dynamic: bool,
    pub dynamic_k: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task: Task::Los,
            gnn_kind: GnnKind::None,
            lstm_hidden: 16,
            lstm_layers: 1,
            gnn_hidden: 16,
            gnn_out: 16,
            gnn_layers: 1,
            gat_heads: 2,
            gat_out_heads: 1,
            mpnn_steps: 2,
            static_hidden: 16,
            head_hidden: 0,
            dropout: 0.1,
            alpha: 1.0,
            diag_static: true,
            dynamic: false,
            dynamic_k: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("gnn_hidden", self.gnn_hidden),
            ("gnn_out", self.gnn_out),
            ("gnn_layers", self.gnn_layers),
            ("gat_heads", self.gat_heads),
            ("gat_out_heads", self.gat_out_heads),
            ("mpnn_steps", self.mpnn_steps),
            ("static_hidden", self.static_hidden),
            ("dynamic_k", self.dynamic_k),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha {} must be >= 0", self.alpha)));
        }
        if self.dynamic && self.gnn_kind == GnnKind::None {
            return Err(Error::Config("the dynamic graph needs a gnn kind other than none".into()));
        }
        Ok(())
    }
}

/// Widths of the per-node inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    /// Per-step input width (values and masks).
    pub series: usize,
    pub horizon: usize,
    /// Static width, including the diagnosis block when enabled.
    pub static_width: usize,
}
