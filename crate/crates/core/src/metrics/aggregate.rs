use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricsReport;
use crate::error::{Error, Result};

/// Mean and two-sided 95% t-interval half-width of one metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub half_width: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub metrics: Vec<MetricSummary>,
}

impl RunAggregate {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// `metric,mean,ci95` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,ci95\n");
        for m in &self.metrics {
            out.push_str(&format!("{},{},{}\n", m.metric, m.mean, m.half_width));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// Shifted by the first sample so constant input gives exactly zero.
fn sample_variance(xs: &[f64]) -> f64 {
    let shift = xs[0];
    let n = xs.len() as f64;
    let s: f64 = xs.iter().map(|x| x - shift).sum();
    let s2: f64 = xs.iter().map(|x| (x - shift) * (x - shift)).sum();
    ((s2 - s * s / n) / (n - 1.0)).max(0.0)
}

fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Mean and 95% confidence half-width `t(0.975, n-1) * sd / sqrt(n)`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "ci95",
            reason: format!("needs at least 2 runs, got {}", values.len()),
        });
    }
    let n = values.len() as f64;
    let sd = sample_variance(values).sqrt();
    Ok((mean(values), t_quantile(0.975, n - 1.0) * sd / n.sqrt()))
}

/// Per-metric mean and 95% CI over independent runs of the same task.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<RunAggregate> {
    let first = reports.first().ok_or_else(|| Error::UndefinedMetric {
        metric: "ci95",
        reason: "no runs".into(),
    })?;
    if reports.iter().any(|r| r.task != first.task) {
        return Err(Error::Contract("runs mix tasks".into()));
    }
    let mut metrics = Vec::new();
    for (name, _) in &first.values {
        let values: Vec<f64> = reports
            .iter()
            .map(|r| {
                r.get(name)
                    .ok_or_else(|| Error::Data(format!("run is missing metric `{name}`")))
            })
            .collect::<Result<_>>()?;
        let (mean, half_width) = confidence_interval(&values)?;
        metrics.push(MetricSummary {
            metric: name.clone(),
            mean,
            half_width,
            values,
        });
    }
    Ok(RunAggregate {
        runs: reports.len(),
        metrics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn degenerate(diff: f64, df: f64) -> TTest {
    if diff == 0.0 {
        TTest { t: 0.0, df, p: 1.0 }
    } else {
        TTest {
            t: diff.signum() * f64::INFINITY,
            df,
            p: 0.0,
        }
    }
}

/// Two-sample two-tailed t-test with unequal variances (Welch).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "t-test",
            reason: "each sample needs at least 2 runs".into(),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(degenerate(diff, na + nb - 2.0));
    }
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let t = diff / se2.sqrt();
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

/// Two-tailed paired t-test on per-run differences `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "paired t-test",
            reason: "needs two equally long samples of at least 2 runs".into(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let df = n - 1.0;
    let sd = sample_variance(&d).sqrt();
    if sd == 0.0 {
        return Ok(degenerate(mean(&d), df));
    }
    let t = mean(&d) / (sd / n.sqrt());
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Task;

    fn report(msle: f64) -> MetricsReport {
        MetricsReport {
            task: Task::Los,
            n: 10,
            values: vec![("msle".into(), msle), ("mse".into(), 2.0 * msle)],
        }
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let agg = aggregate_runs(&[report(0.4), report(0.4), report(0.4)]).unwrap();
        assert_eq!(agg.get("msle").unwrap().half_width, 0.0);
        assert!((agg.get("mse").unwrap().mean - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hand_t_interval() {
        let (m, h) = confidence_interval(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        // t(0.975, 2) / sqrt(3), sd = 1.
        assert!((h - 2.484_137_711_719_545_6).abs() < 1e-9, "{h}");
    }

    #[test]
    fn fewer_than_two_runs_is_an_error() {
        assert!(aggregate_runs(&[report(0.1)]).is_err());
    }

    #[test]
    fn t_tests_against_reference_values() {
        let a = [0.40, 0.41, 0.39, 0.42, 0.40];
        let b = [0.37, 0.38, 0.36, 0.385, 0.37];
        let paired = paired_t_test(&a, &b).unwrap();
        assert!((paired.t - 31.0).abs() < 1e-9);
        assert!((paired.p - 6.452_049_223_758_688e-6).abs() < 1e-10);
        let welch = welch_t_test(&a, &b).unwrap();
        assert!((welch.t - 4.621_207_153_499_579).abs() < 1e-9);
        assert!((welch.df - 7.810_993_249_758_925).abs() < 1e-9);
        assert!((welch.p - 0.001_818_236_145_583_314_7).abs() < 1e-9);
    }

    #[test]
    fn self_comparison_does_not_reject() {
        let a = [0.3, 0.35, 0.32];
        assert_eq!(welch_t_test(&a, &a).unwrap().p, 1.0);
        assert_eq!(paired_t_test(&a, &a).unwrap().p, 1.0);
    }
}
