//! Evaluation metrics for mortality (classification) and length-of-stay
//! (regression) tasks, and confidence intervals across repeated runs.

mod aggregate;
mod classification;
mod kappa;
mod regression;

pub use aggregate::{
    aggregate_runs, confidence_interval, paired_t_test, welch_t_test, MetricSummary, RunAggregate, TTest,
};
pub use classification::{auprc, auroc};
pub use kappa::{linear_weighted_kappa, KappaBins};
pub use regression::{regression_metrics, RegressionMetrics};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// In-hospital mortality, binary.
    Ihm,
    /// Length of stay in days, positive real.
    Los,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ihm => "ihm",
            Task::Los => "los",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ihm" => Ok(Task::Ihm),
            "los" => Ok(Task::Los),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Whether a larger value of a metric is better.
pub fn higher_is_better(metric: &str) -> bool {
    matches!(metric, "auroc" | "auprc" | "r2" | "kappa")
}

/// Metric values for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    /// Number of evaluated nodes.
    pub n: usize,
    /// `(metric name, value)` in a fixed order per task.
    pub values: Vec<(String, f64)>,
}

impl MetricsReport {
    /// Computes the full metric set for `task`.
    ///
    /// IHM metrics that are undefined on the given labels (single class) are
    /// reported as NaN rather than failing the whole report.
    pub fn compute(task: Task, predictions: &[f64], targets: &[f64], bins: &KappaBins) -> Result<Self> {
        if predictions.len() != targets.len() {
            return Err(Error::Dimension {
                op: "metrics",
                lhs: vec![predictions.len()],
                rhs: vec![targets.len()],
            });
        }
        if predictions.is_empty() {
            return Err(Error::Contract("no predictions to evaluate".into()));
        }
        let values = match task {
            Task::Ihm => {
                let labels: Vec<bool> = targets.iter().map(|&y| y > 0.5).collect();
                vec![
                    ("auroc".to_string(), auroc(predictions, &labels).unwrap_or(f64::NAN)),
                    ("auprc".to_string(), auprc(predictions, &labels).unwrap_or(f64::NAN)),
                ]
            }
            Task::Los => {
                let r = regression_metrics(predictions, targets)?;
                let kappa = linear_weighted_kappa(predictions, targets, bins)?;
                vec![
                    ("mad".to_string(), r.mad),
                    ("mape".to_string(), r.mape),
                    ("mse".to_string(), r.mse),
                    ("msle".to_string(), r.msle),
                    ("r2".to_string(), r.r2),
                    ("kappa".to_string(), kappa),
                ]
            }
        };
        Ok(Self {
            task,
            n: predictions.len(),
            values,
        })
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.values
            .iter()
            .find(|(name, _)| name == metric)
            .map(|(_, v)| *v)
    }

    /// Delimiter-separated `metric,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("n,{}\n", self.n));
        for (name, v) in &self.values {
            out.push_str(&format!("{name},{v}\n"));
        }
        out
    }

    pub fn from_csv(task: Task, text: &str) -> Result<Self> {
        let mut n = 0;
        let mut values = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| Error::Data(format!("malformed metrics row `{line}`")))?;
            if name == "n" {
                n = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("bad count `{value}`")))?;
            } else {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("bad metric value `{value}`")))?;
                values.push((name.to_string(), v));
            }
        }
        Ok(Self { task, n, values })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} metrics over {} nodes", self.task, self.n)?;
        for (name, v) in &self.values {
            writeln!(f, "  {name:<6} {v:>10.4}")?;
        }
        Ok(())
    }
}
