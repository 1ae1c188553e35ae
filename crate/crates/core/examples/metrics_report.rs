//! The metric suite, aggregation over runs and the significance-marked
//! comparison table.

use lstm_gnn::cli::{compare_sets, RunSet};
use lstm_gnn::metrics::{aggregate_runs, KappaBins, MetricsReport, Task};

fn main() -> lstm_gnn::Result<()> {
    let bins = KappaBins::default();
    let ihm = MetricsReport::compute(Task::Ihm, &[0.9, 0.2, 0.7, 0.4, 0.1], &[1.0, 0.0, 1.0, 1.0, 0.0], &bins)?;
    print!("{}", ihm.to_csv());

    let targets = [1.5, 2.0, 3.5, 6.0, 12.0, 20.0];
    let run = |noise: f64, k: usize| {
        let preds: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(i, y)| y * (1.0 + noise * (((i + k) % 3) as f64 - 1.0)))
            .collect();
        MetricsReport::compute(Task::Los, &preds, &targets, &bins)
    };
    let baseline: Vec<MetricsReport> = (0..5).map(|k| run(0.5, k)).collect::<Result<_, _>>()?;
    let better: Vec<MetricsReport> = (0..5).map(|k| run(0.1 + 0.01 * k as f64, k)).collect::<Result<_, _>>()?;
    print!("{}", aggregate_runs(&baseline)?.to_csv());

    let table = compare_sets(&[
        RunSet {
            label: "LSTM".into(),
            reports: baseline,
        },
        RunSet {
            label: "LSTM-GNN".into(),
            reports: better,
        },
    ])?;
    print!("{}", table.to_table());
    Ok(())
}
