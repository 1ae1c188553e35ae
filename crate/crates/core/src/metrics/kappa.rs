use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bin edges in days. A value `v` falls in the bin counting the edges
/// strictly below it, so the default edges give `(0,1], (1,2], ..., (7,8],
/// (8,14], (14,inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBins {
    edges: Vec<f64>,
}

impl Default for KappaBins {
    fn default() -> Self {
        Self {
            edges: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 14.0],
        }
    }
}

impl KappaBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "kappa bin edges must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }
}

/// Cohen's kappa with linear disagreement weights `|i - j| / (B - 1)` over
/// binned predictions and targets.
pub fn linear_weighted_kappa(predictions: &[f64], targets: &[f64], bins: &KappaBins) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            op: "kappa",
            lhs: vec![predictions.len()],
            rhs: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "kappa",
            reason: "no samples".into(),
        });
    }
    let b = bins.count();
    let n = predictions.len() as f64;
    let mut observed = vec![0.0; b * b];
    let mut row = vec![0.0; b];
    let mut col = vec![0.0; b];
    for (&p, &y) in predictions.iter().zip(targets) {
        let (i, j) = (bins.bin(p), bins.bin(y));
        observed[i * b + j] += 1.0;
        row[i] += 1.0;
        col[j] += 1.0;
    }
    let weight = |i: usize, j: usize| i.abs_diff(j) as f64 / (b - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..b {
        for j in 0..b {
            let w = weight(i, j);
            num += w * observed[i * b + j] / n;
            den += w * row[i] * col[j] / (n * n);
        }
    }
    if den == 0.0 {
        let occupied_pred = row.iter().filter(|&&c| c > 0.0).count();
        let occupied_true = col.iter().filter(|&&c| c > 0.0).count();
        if occupied_pred == 1 && occupied_true == 1 && num == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::UndefinedMetric {
            metric: "kappa",
            reason: "chance disagreement is zero".into(),
        });
    }
    Ok(1.0 - num / den)
}
