use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fsutil::read_string;
use crate::metrics::{confidence_interval, higher_is_better, welch_t_test, MetricsReport, Task};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.conf";

/// Significance level of the comparison markers.
pub const SIGNIFICANCE: f64 = 0.05;
/// Significantly better than the baseline.
pub const BETTER: char = '‡';
/// Significantly worse than the baseline.
pub const WORSE: char = '†';

/// Test reports of repeated runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub label: String,
    pub reports: Vec<MetricsReport>,
}

fn load_report(run: &Path) -> Result<MetricsReport> {
    let cfg = RunConfig::load(&run.join(CONFIG_FILE))?;
    MetricsReport::from_csv(cfg.model.task, &read_string(&run.join(METRICS_FILE))?)
}

impl RunSet {
    /// A run directory, or a directory whose subdirectories are runs.
    pub fn load(dir: &Path) -> Result<Self> {
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        if dir.join(METRICS_FILE).is_file() {
            return Ok(Self {
                label,
                reports: vec![load_report(dir)?],
            });
        }
        let mut runs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(METRICS_FILE).is_file())
            .collect();
        runs.sort();
        if runs.is_empty() {
            return Err(Error::Data(format!("{}: no runs with {METRICS_FILE}", dir.display())));
        }
        Ok(Self {
            label,
            reports: runs.iter().map(|r| load_report(r)).collect::<Result<_>>()?,
        })
    }

    fn values(&self, metric: &str) -> Result<Vec<f64>> {
        self.reports
            .iter()
            .map(|r| {
                r.get(metric)
                    .ok_or_else(|| Error::Data(format!("{}: a run lacks metric `{metric}`", self.label)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mean: f64,
    /// 95% half-width; absent for a single run.
    pub half_width: Option<f64>,
    /// Welch p-value against the baseline set.
    pub p: Option<f64>,
    pub marker: Option<char>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub runs: usize,
    pub cells: Vec<Cell>,
}

/// Mean ± CI per set and metric, marked against the first set.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub task: Task,
    pub metrics: Vec<String>,
    pub rows: Vec<CompareRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn compare_sets(sets: &[RunSet]) -> Result<Comparison> {
    let base = sets
        .first()
        .and_then(|s| s.reports.first())
        .ok_or_else(|| Error::Data("compare needs at least one run".into()))?;
    let task = base.task;
    if sets.iter().flat_map(|s| &s.reports).any(|r| r.task != task) {
        return Err(Error::Data("compare runs mix tasks".into()));
    }
    let metrics: Vec<String> = base.values.iter().map(|(m, _)| m.clone()).collect();
    let mut rows = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        let mut cells = Vec::new();
        for metric in &metrics {
            let values = set.values(metric)?;
            let half_width = confidence_interval(&values).ok().map(|(_, h)| h);
            let mut cell = Cell {
                mean: mean(&values),
                half_width,
                p: None,
                marker: None,
            };
            if i > 0 {
                let baseline = sets[0].values(metric)?;
                let finite = values.iter().chain(&baseline).all(|v| v.is_finite());
                if let (true, Ok(t)) = (finite, welch_t_test(&values, &baseline)) {
                    cell.p = Some(t.p);
                    if t.p < SIGNIFICANCE {
                        let above = cell.mean > mean(&baseline);
                        cell.marker = Some(if above == higher_is_better(metric) { BETTER } else { WORSE });
                    }
                }
            }
            cells.push(cell);
        }
        rows.push(CompareRow {
            label: set.label.clone(),
            runs: set.reports.len(),
            cells,
        });
    }
    Ok(Comparison { task, metrics, rows })
}

impl Comparison {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut grid = vec![{
            let mut h = vec!["model".to_string(), "runs".to_string()];
            h.extend(self.metrics.iter().cloned());
            h
        }];
        for row in &self.rows {
            let mut line = vec![row.label.clone(), row.runs.to_string()];
            for c in &row.cells {
                let mut s = format!("{:.4}", c.mean);
                if let Some(h) = c.half_width {
                    s.push_str(&format!(" ± {h:.4}"));
                }
                if let Some(m) = c.marker {
                    s.push(' ');
                    s.push(m);
                }
                line.push(s);
            }
            grid.push(line);
        }
        let cols = grid[0].len();
        let width: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in grid.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&width)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "{BETTER} better / {WORSE} worse than {} (two-tailed Welch t-test, p < {SIGNIFICANCE})\n",
            self.rows[0].label
        ));
        out
    }

    /// One row per set and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,runs,metric,mean,ci95,p,marker\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for (metric, c) in self.metrics.iter().zip(&row.cells) {
                out.push_str(&format!(
                    "{},{},{metric},{},{},{},{}\n",
                    row.label,
                    row.runs,
                    c.mean,
                    opt(c.half_width),
                    opt(c.p),
                    c.marker.map(String::from).unwrap_or_default()
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(label: &str, msle: &[f64]) -> RunSet {
        RunSet {
            label: label.into(),
            reports: msle
                .iter()
                .map(|&m| MetricsReport {
                    task: Task::Los,
                    n: 10,
                    values: vec![("msle".into(), m), ("r2".into(), 1.0 - m)],
                })
                .collect(),
        }
    }

    #[test]
    fn markers_follow_direction_and_t_test() {
        let base = set("lstm", &[0.40, 0.41, 0.39, 0.40, 0.42]);
        let better = set("mpnn", &[0.30, 0.31, 0.29, 0.30, 0.32]);
        let worse = set("gcn", &[0.50, 0.51, 0.49, 0.52, 0.50]);
        let same = set("sage", &[0.39, 0.42, 0.40, 0.41, 0.40]);
        let c = compare_sets(&[base.clone(), better.clone(), worse, same]).unwrap();
        let marks: Vec<_> = c.rows.iter().map(|r| (r.cells[0].marker, r.cells[1].marker)).collect();
        assert_eq!(marks[0], (None, None));
        assert_eq!(marks[1], (Some(BETTER), Some(BETTER)));
        assert_eq!(marks[2], (Some(WORSE), Some(WORSE)));
        assert_eq!(marks[3], (None, None));
        let t = welch_t_test(&better.values("msle").unwrap(), &base.values("msle").unwrap()).unwrap();
        assert_eq!(c.rows[1].cells[0].p, Some(t.p));
        let table = c.to_table();
        assert!(table.contains("0.3040 ± "), "{table}");
        assert_eq!(c.to_csv().lines().count(), 1 + 4 * 2);
    }

    #[test]
    fn single_runs_have_no_interval() {
        let c = compare_sets(&[set("a", &[0.4]), set("b", &[0.3])]).unwrap();
        assert_eq!(c.rows[1].cells[0].half_width, None);
        assert_eq!(c.rows[1].cells[0].marker, None);
        assert!(compare_sets(&[]).is_err());
    }
}
