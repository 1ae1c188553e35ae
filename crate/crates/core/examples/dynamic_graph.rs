//! The dynamic variant: per-batch k-NN over LSTM states instead of the
//! diagnosis graph, trained without diagnoses in the static input.

use lstm_gnn::graph::dynamic_knn;
use lstm_gnn::metrics::{KappaBins, Task};
use lstm_gnn::model::{GnnKind, Model, ModelConfig};
use lstm_gnn::preprocess::{Dataset, PreprocessConfig, SplitTag};
use lstm_gnn::synth::{generate, SynthConfig};
use lstm_gnn::train::{evaluate_inductive, init_output_bias, train, TrainConfig};

fn main() -> lstm_gnn::Result<()> {
    // Three one-dimensional states, one neighbor each.
    let edges = dynamic_knn(&[0.0, 1.0, 10.0], 3, 1)?;
    for (i, es) in edges.iter().enumerate() {
        println!("{i} -> {} (distance {})", es[0].dst, es[0].score);
    }

    let cohort = generate(&SynthConfig {
        n_patients: 600,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let data = Dataset::from_records(&cohort.records, &PreprocessConfig::default())?;
    let test = data.indices(SplitTag::Test);
    let cfg = TrainConfig::default();
    for (name, kind, dynamic) in [("LSTM*", GnnKind::None, false), ("Dyn. GCN*", GnnKind::Gcn, true)] {
        let config = ModelConfig {
            task: Task::Los,
            gnn_kind: kind,
            dynamic,
            diag_static: false,
            ..ModelConfig::default()
        };
        let mut model = Model::new(config.clone(), Model::dims_for(&data, &config), 2)?;
        init_output_bias(&mut model, &data)?;
        train(&mut model, &data, None, &cfg)?;
        let eval = evaluate_inductive(&model, &data, None, &test, &cfg, &KappaBins::default())?;
        println!("{name:>9}: test msle {:.4}", eval.report.get("msle").unwrap_or(f64::NAN));
    }
    Ok(())
}
