use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length-of-stay regression metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mad: f64,
    /// Percent.
    pub mape: f64,
    pub mse: f64,
    /// Mean of squared differences of `log(1 + .)`.
    pub msle: f64,
    pub r2: f64,
}

/// Smallest denominator used by MAPE.
pub const MAPE_FLOOR: f64 = 1e-4;

pub fn regression_metrics(predictions: &[f64], targets: &[f64]) -> Result<RegressionMetrics> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            op: "regression_metrics",
            lhs: vec![predictions.len()],
            rhs: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::Contract("regression metrics of an empty set".into()));
    }
    if let Some(i) = targets.iter().position(|&y| !(y > 0.0)) {
        return Err(Error::Domain {
            op: "regression_metrics",
            index: i,
            value: targets[i],
        });
    }
    if let Some(i) = predictions.iter().position(|&p| !(p > -1.0)) {
        return Err(Error::Domain {
            op: "msle",
            index: i,
            value: predictions[i],
        });
    }
    let n = predictions.len() as f64;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    for (&p, &y) in predictions.iter().zip(targets) {
        let d = p - y;
        abs += d.abs();
        pct += d.abs() / y.max(MAPE_FLOOR);
        sq += d * d;
        let dl = p.ln_1p() - y.ln_1p();
        sq_log += dl * dl;
    }
    let mean_y = targets.iter().sum::<f64>() / n;
    let total: f64 = targets.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "r2",
            reason: "targets are constant".into(),
        });
    }
    Ok(RegressionMetrics {
        mad: abs / n,
        mape: 100.0 * pct / n,
        mse: sq / n,
        msle: sq_log / n,
        r2: 1.0 - sq / total,
    })
}
